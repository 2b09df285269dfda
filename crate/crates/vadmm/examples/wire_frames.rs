//! The wire format, frame by frame: encode each message kind, hexdump it,
//! decode it back, and show how the decoder treats malformed input.
//!
//! ```bash
//! cargo run --example wire_frames
//! ```

use vadmm::transport::{decode, encode, Message};

fn hexdump(bytes: &[u8]) -> String {
    bytes
        .chunks(16)
        .map(|row| row.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n  ")
}

fn show(msg: &Message) {
    let frame = encode(msg);
    println!("{msg:?}");
    println!("  {} bytes:\n  {}", frame.len(), hexdump(&frame));
    let (back, used) = decode(&frame).unwrap().unwrap();
    assert_eq!(&back, msg);
    assert_eq!(used, frame.len());
    println!("  decodes back to the same message\n");
}

fn main() {
    println!("header: magic 56 41, version 01, kind, iteration (u32 LE), party (u16 LE), payload bytes (u32 LE)\n");

    show(&Message::Register { party_id: 1, n_samples: 32561 });
    show(&Message::Ack { party_id: 1 });
    show(&Message::Broadcast { iteration: 1, aggregate: vec![0.25, -1.0], dual: vec![0.0, 2.0] });
    show(&Message::PushShare { iteration: 1, party_id: 2, share: vec![1.0, -1.0] });
    show(&Message::Shutdown { iteration: 13 });

    // Malformed input never panics; it comes back as a typed error or a
    // request for more bytes.
    let mut bad = encode(&Message::Shutdown { iteration: 0 });
    bad[0] = 0x00;
    println!("bad magic      -> {:?}", decode(&bad).unwrap_err());
    let mut bad = encode(&Message::Shutdown { iteration: 0 });
    bad[3] = 0x7f;
    println!("unknown kind   -> {:?}", decode(&bad).unwrap_err());
    let good = encode(&Message::PushShare { iteration: 1, party_id: 1, share: vec![4.2; 3] });
    println!("truncated      -> {:?} (incomplete frame, read more)", decode(&good[..10]).unwrap());
}
