//! Differentially private share perturbation: the l2-sensitivity bound for a
//! party's released share, Gaussian calibration, per-iteration noise streams
//! and total-budget accounting under the classic composition theorem.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::{normalize_matrix_rows, PartyShard};
use crate::subsolvers::{x_step, SolveError, XStepInput};

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("per-iteration epsilon must lie in (0, 1], got {0}")]
    EpsilonOutOfRange(f64),
    #[error("delta must lie in (0, 1.25), got {0}")]
    DeltaOutOfRange(f64),
    #[error("sensitivity bound needs d_m >= 1 and rho > 0 (got d_m = {d_m}, rho = {rho})")]
    DegenerateBound { d_m: usize, rho: f64 },
    #[error("invalid privacy parameters: {0}")]
    InvalidParams(String),
    #[error("sensitivity probe limited to n <= 100 and d_m <= 8 (got n = {n}, d_m = {d_m})")]
    ProbeTooLarge { n: usize, d_m: usize },
    #[error("probe x-update failed: {0}")]
    Solve(#[from] SolveError),
}

/// Per-iteration privacy parameters plus the premises the sensitivity bound
/// relies on (iterate-norm bound b1, regularizer curvature bound c1).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub b1: f64,
    pub c1: f64,
    pub seed: u64,
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(PrivacyError::EpsilonOutOfRange(self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PrivacyError::DeltaOutOfRange(self.delta));
        }
        if !(self.delta_prime > 0.0 && self.delta_prime < 1.0) {
            return Err(PrivacyError::InvalidParams(format!("delta_prime must lie in (0, 1), got {}", self.delta_prime)));
        }
        if self.b1 <= 0.0 || self.c1 <= 0.0 {
            return Err(PrivacyError::InvalidParams(format!("b1 and c1 must be positive (b1 = {}, c1 = {})", self.b1, self.c1)));
        }
        Ok(())
    }
}

/// Sensitivity bound and calibrated noise level for one party.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    pub sensitivity: f64,
    pub sigma: f64,
}

/// Upper bound on the l2 sensitivity of a released share under a one-column
/// neighboring change: 3/(d_m rho) * (lambda c1 + (1 + M rho) b1).
pub fn sensitivity_bound(lambda: f64, c1: f64, b1: f64, rho: f64, n_parties: usize, d_m: usize) -> Result<f64, PrivacyError> {
    if d_m == 0 || rho <= 0.0 {
        return Err(PrivacyError::DegenerateBound { d_m, rho });
    }
    assert!(lambda >= 0.0 && c1 > 0.0 && b1 > 0.0 && n_parties >= 1);
    Ok(3.0 / (d_m as f64 * rho) * (lambda * c1 + (1.0 + n_parties as f64 * rho) * b1))
}

/// Gaussian-mechanism noise level: sigma = sqrt(2 ln(1.25/delta)) * C / eps.
pub fn calibrate_sigma(sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64, PrivacyError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(PrivacyError::EpsilonOutOfRange(epsilon));
    }
    if !(delta > 0.0 && delta < 1.25) {
        return Err(PrivacyError::DeltaOutOfRange(delta));
    }
    assert!(sensitivity > 0.0, "sensitivity must be positive");
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * sensitivity / epsilon)
}

/// Total budget after `epochs` releases: the advanced composition bound
/// eps' = sqrt(2 T ln(1/delta')) eps + T eps (e^eps - 1), delta' slack added
/// to the accumulated T delta.
pub fn total_budget(epsilon: f64, delta: f64, epochs: usize, delta_prime: f64) -> (f64, f64) {
    assert!(epochs >= 1, "budget is defined for at least one epoch");
    assert!(delta_prime > 0.0 && delta_prime < 1.0);
    let t = epochs as f64;
    let eps_total = (2.0 * t * (1.0 / delta_prime).ln()).sqrt() * epsilon + t * epsilon * (epsilon.exp() - 1.0);
    let delta_total = t * delta + delta_prime;
    (eps_total, delta_total)
}

/// Add i.i.d. zero-mean Gaussian noise of the given standard deviation to a
/// share vector in place.
pub fn perturb_share(share: &mut DVector<f64>, sigma: f64, rng: &mut ChaCha20Rng) {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    for v in share.iter_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *v += sigma * n;
    }
}

/// One party's seeded noise stream. Streams are derived from the master seed
/// and the party id so parties never share randomness and runs replay
/// bit-for-bit.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    sigma: f64,
    rng: ChaCha20Rng,
}

impl GaussianNoise {
    pub fn for_party(sigma: f64, master_seed: u64, party: usize) -> Self {
        Self { sigma, rng: party_stream(master_seed, party) }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn perturb(&mut self, share: &mut DVector<f64>) {
        perturb_share(share, self.sigma, &mut self.rng);
    }
}

/// Independent ChaCha stream for one party, derived from the master seed.
pub fn party_stream(master_seed: u64, party: usize) -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(party as u64 + 1).to_le_bytes());
    seed[16..24].copy_from_slice(b"VA-noise");
    ChaCha20Rng::from_seed(seed)
}

/// Synthetic x-update context for probing the sensitivity bound empirically.
///
/// Matches the premises of the bound: rows of the block normalized, all
/// coupling vectors drawn inside the l2 ball of radius `b1`, and the
/// x-update solved exactly under the same ball constraint.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityProbe {
    pub n: usize,
    pub d_m: usize,
    pub lambda: f64,
    pub rho: f64,
    pub n_parties: usize,
    pub b1: f64,
}

/// Maximum observed share change over `trials` random neighboring pairs
/// (one feature column moved by an l2 distance of at most 1). A lower bound
/// on the true sensitivity, used to validate the analytic upper bound.
pub fn empirical_sensitivity(probe: &SensitivityProbe, trials: usize, seed: u64) -> Result<f64, PrivacyError> {
    if probe.n > 100 || probe.d_m > 8 {
        return Err(PrivacyError::ProbeTooLarge { n: probe.n, d_m: probe.d_m });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let base = random_normalized_block(probe.n, probe.d_m, &mut rng);
    let mut worst = 0.0f64;

    for _ in 0..trials {
        let y = ball_sample(probe.n, probe.b1, &mut rng);
        let z = ball_sample(probe.n, probe.b1, &mut rng);
        // Other parties' contributions enter only through their aggregate;
        // the premise bounds it by (M - 1) b1.
        let others = ball_sample(probe.n, (probe.n_parties as f64 - 1.0) * probe.b1, &mut rng);
        let c = &others - &z;

        let column = rng.random_range(0..probe.d_m);
        let delta = ball_sample(probe.n, 1.0, &mut rng);
        let mut neighbor = base.clone();
        for i in 0..probe.n {
            neighbor[(i, column)] += delta[i];
        }

        let share_a = probe_share(&base, &c, &y, probe)?;
        let share_b = probe_share(&neighbor, &c, &y, probe)?;
        worst = worst.max((share_a - share_b).norm());
    }
    Ok(worst)
}

fn probe_share(block: &DMatrix<f64>, c: &DVector<f64>, y: &DVector<f64>, probe: &SensitivityProbe) -> Result<DVector<f64>, PrivacyError> {
    let shard = PartyShard::new(0, block.clone());
    let x = x_step(&XStepInput {
        shard: &shard,
        x_prev: None,
        others_minus_z: c,
        dual: y,
        rho: probe.rho,
        lambda: probe.lambda,
        ball_radius: Some(probe.b1),
    })?;
    Ok(shard.apply(&x))
}

fn random_normalized_block(n: usize, d: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, d, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        g
    });
    normalize_matrix_rows(&raw).0
}

fn ball_sample(n: usize, radius: f64, rng: &mut ChaCha20Rng) -> DVector<f64> {
    if radius <= 0.0 {
        return DVector::zeros(n);
    }
    let mut v = DVector::from_fn(n, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        g
    });
    let norm = v.norm();
    if norm > 0.0 {
        let scale = radius * rng.random::<f64>().powf(1.0 / n as f64) / norm;
        v *= scale;
    }
    v
}
