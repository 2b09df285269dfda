//! Consensus-sharing ADMM for empirical risk minimization over vertically
//! partitioned features, with an optional differentially private
//! share-perturbation layer.
//!
//! Several parties each hold a disjoint block of feature columns for the
//! same samples. Training couples them only through the aggregate score
//! vector: each iteration every party solves its local x subproblem in
//! parallel and releases a single N-vector (its share `D_m x_m`), a central
//! node runs the entry-wise z update and the dual ascent step, and the pair
//! (aggregate, dual) is broadcast back. Raw features and model blocks never
//! leave a party; with the privacy layer enabled the released share is
//! perturbed by calibrated Gaussian noise with per-epoch budget accounting.
//!
//! The same iteration runs three ways and produces bit-identical traces:
//! as a plain in-process loop ([`engine::run`]), over an in-process message
//! bus, or as real coordinator/party roles over framed TCP
//! ([`transport`]).
//!
//! Start with the `examples/` directory: each file is a runnable walkthrough
//! of one capability (local simulation, TCP roles, private training, budget
//! accounting, baselines, penalty tuning, the wire format).

pub mod dataset;
pub mod engine;
pub mod harness;
pub mod objective;
pub mod privacy;
pub mod subsolvers;
pub mod transport;

pub use dataset::{LabeledDataset, PartitionSpec, PartyShard};
pub use engine::{DiagnosticsRecord, EngineState, HyperParams, RunTrace};
pub use objective::{LogisticLoss, ObjectiveConfig, SeparableLoss};
pub use privacy::PrivacyParams;
