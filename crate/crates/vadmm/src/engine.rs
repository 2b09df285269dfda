//! Orchestrates the sharing iteration — parallel (Jacobi) per-party
//! x-updates against iteration-t data, then central z/y updates — and
//! computes the diagnostics the convergence analysis defines: augmented
//! Lagrangian, primal residual, the Lyapunov stationarity gap, assumption
//! feasibility and per-condition stationarity residuals.
//!
//! The per-party and central update bodies ([`party_update`],
//! [`center_update`]) are the single source of truth for the arithmetic;
//! the in-process runner and the wire transport both call them, which is
//! what makes backend traces bit-identical.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::dataset::{DatasetError, PartyShard};
use crate::objective::{prox_reg_ball, reg_value, LossProfile, SeparableLoss};
use crate::privacy::GaussianNoise;
use crate::subsolvers::{y_step, z_step, SolveError, XSolver, ZStepInput};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("party {party} x-update failed at epoch {epoch}: {source}")]
    Party {
        party: usize,
        epoch: usize,
        #[source]
        source: SolveError,
    },
    #[error("central z-update failed at epoch {epoch}: {source}")]
    Center {
        epoch: usize,
        #[source]
        source: SolveError,
    },
    #[error("no feasible penalty found: {0}")]
    NoFeasibleRho(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// A run abort with whatever diagnostics were completed before the failure.
#[derive(Debug, Error)]
#[error("{source}")]
pub struct RunFailure {
    pub partial: Vec<DiagnosticsRecord>,
    #[source]
    pub source: EngineError,
}

/// Penalty, regularization weight, epoch budget and optional early stop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HyperParams {
    pub rho: f64,
    pub lambda: f64,
    pub max_epochs: usize,
    /// Stop once the Lyapunov value drops to this level; `None` runs all epochs.
    pub lyapunov_tol: Option<f64>,
    pub seed: u64,
}

impl HyperParams {
    pub fn validate(&self) {
        assert!(self.rho > 0.0, "rho must be positive");
        assert!(self.lambda >= 0.0, "lambda must be nonnegative");
    }
}

/// All iterate variables at one point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub x: Vec<DVector<f64>>,
    /// Cached shares as pushed to the center (perturbed when noise is on).
    pub shares: Vec<DVector<f64>>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub t: usize,
}

impl EngineState {
    /// Maximum deviation of cached shares from D_m x_m; meaningful for
    /// noise-free runs, where it must stay at rounding level.
    pub fn share_cache_error(&self, shards: &[PartyShard]) -> f64 {
        let mut worst = 0.0f64;
        for (m, shard) in shards.iter().enumerate() {
            worst = worst.max((shard.apply(&self.x[m]) - &self.shares[m]).amax());
        }
        worst
    }
}

/// Per-epoch diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: usize,
    /// l(sum of pushed shares) + lambda * sum R_m(x_m).
    pub objective: f64,
    pub lagrangian: f64,
    pub primal_residual: f64,
    pub lyapunov: f64,
    /// Max of the per-condition stationarity residuals.
    pub stationarity: f64,
    /// Infinity-norm gap of the dual identity grad l(z) = y.
    pub dual_gap_inf: f64,
}

/// Trace of a full run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: EngineState,
    pub assumption: AssumptionReport,
    /// Epochs where an iterate norm exceeded the configured ball radius
    /// (monitors the bounded-iterate premise; never enforced on z or y).
    pub b1_exceedances: usize,
}

/// All iterates at zero, matching the experimental initialization.
pub fn init_state(shards: &[PartyShard]) -> EngineState {
    assert!(!shards.is_empty());
    let n = shards[0].n_samples();
    EngineState {
        x: shards.iter().map(|s| DVector::zeros(s.width())).collect(),
        shares: shards.iter().map(|_| DVector::zeros(n)).collect(),
        z: DVector::zeros(n),
        y: DVector::zeros(n),
        t: 0,
    }
}

/// Ascending-index share reduction; the fixed order keeps runs bitwise
/// deterministic regardless of scheduling.
pub(crate) fn sum_vectors(vs: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(vs[0].len());
    for v in vs {
        acc += v;
    }
    acc
}

/// One party's x-update from broadcast data: recover the coupling term by
/// subtracting the locally cached share, solve the x subproblem, recompute
/// the share and optionally perturb it.
pub(crate) fn party_update(
    solver: &XSolver<'_>,
    shard: &PartyShard,
    cached_share: &DVector<f64>,
    x_prev: &DVector<f64>,
    aggregate: &DVector<f64>,
    dual: &DVector<f64>,
    ball: Option<f64>,
    noise: Option<&mut GaussianNoise>,
) -> Result<(DVector<f64>, DVector<f64>), SolveError> {
    let coupling = aggregate - cached_share;
    let x = solver.solve(&coupling, dual, ball, Some(x_prev))?;
    let mut share = shard.apply(&x);
    if let Some(noise) = noise {
        noise.perturb(&mut share);
    }
    Ok((x, share))
}

/// The central z then y updates against the reduced share vector.
pub(crate) fn center_update<L: SeparableLoss>(
    loss: &L,
    dual: &DVector<f64>,
    aggregate: &DVector<f64>,
    rho: f64,
) -> Result<(DVector<f64>, DVector<f64>), SolveError> {
    let z = z_step(&ZStepInput { loss, aggregate, dual, rho })?;
    let y = y_step(dual, rho, aggregate, &z);
    Ok((z, y))
}

fn epoch_update<L: SeparableLoss>(
    state: &EngineState,
    shards: &[PartyShard],
    solvers: &[XSolver<'_>],
    loss: &L,
    hyper: &HyperParams,
    ball: Option<f64>,
    noise: &mut Option<Vec<GaussianNoise>>,
) -> Result<EngineState, EngineError> {
    let total = sum_vectors(&state.shares);
    let aggregate = &total - &state.z;

    let mut new_x = Vec::with_capacity(shards.len());
    let mut new_shares = Vec::with_capacity(shards.len());
    for (m, shard) in shards.iter().enumerate() {
        let party_noise = noise.as_mut().map(|n| &mut n[m]);
        let (x, share) = party_update(
            &solvers[m],
            shard,
            &state.shares[m],
            &state.x[m],
            &aggregate,
            &state.y,
            ball,
            party_noise,
        )
        .map_err(|source| EngineError::Party { party: m, epoch: state.t + 1, source })?;
        new_x.push(x);
        new_shares.push(share);
    }

    let w = sum_vectors(&new_shares);
    let (z, y) = center_update(loss, &state.y, &w, hyper.rho)
        .map_err(|source| EngineError::Center { epoch: state.t + 1, source })?;

    Ok(EngineState { x: new_x, shares: new_shares, z, y, t: state.t + 1 })
}

/// Advance the state by one iteration: Jacobi x-updates from iteration-t
/// data, then the central z and y updates. Solver factorizations are rebuilt
/// on every call; prefer [`run`] for multi-epoch work.
pub fn iterate<L: SeparableLoss>(
    state: &mut EngineState,
    shards: &[PartyShard],
    loss: &L,
    hyper: &HyperParams,
    ball: Option<f64>,
    noise: &mut Option<Vec<GaussianNoise>>,
) -> Result<(), EngineError> {
    hyper.validate();
    let solvers = build_solvers(shards, hyper, state.t + 1)?;
    *state = epoch_update(state, shards, &solvers, loss, hyper, ball, noise)?;
    Ok(())
}

fn build_solvers<'a>(shards: &'a [PartyShard], hyper: &HyperParams, epoch: usize) -> Result<Vec<XSolver<'a>>, EngineError> {
    shards
        .iter()
        .enumerate()
        .map(|(m, s)| XSolver::new(s, hyper.lambda, hyper.rho).map_err(|source| EngineError::Party { party: m, epoch, source }))
        .collect()
}

/// Run up to `max_epochs` iterations from the zero state, emitting one
/// diagnostics row per epoch.
///
/// `noise_sigmas` switches on share perturbation (one stream per party,
/// derived from the run seed); `ball` switches on the l2 constraint on x.
/// Runs are deterministic functions of (data, hyper, sigmas, ball).
pub fn run<L, F>(
    shards: &[PartyShard],
    loss: &L,
    hyper: &HyperParams,
    ball: Option<f64>,
    noise_sigmas: Option<&[f64]>,
    mut on_epoch: F,
) -> Result<RunTrace, RunFailure>
where
    L: SeparableLoss,
    F: FnMut(&EngineState, &DiagnosticsRecord),
{
    hyper.validate();
    let profile = LossProfile { lipschitz: loss.lipschitz(), convex: loss.convex() };
    let assumption = match assumption_check(shards, hyper, &profile) {
        Ok(report) => report,
        Err(err) => return Err(RunFailure { partial: Vec::new(), source: err.into() }),
    };

    let mut noise = noise_sigmas.map(|sigmas| {
        assert_eq!(sigmas.len(), shards.len(), "one sigma per party");
        sigmas
            .iter()
            .enumerate()
            .map(|(m, &sigma)| GaussianNoise::for_party(sigma, hyper.seed, m))
            .collect::<Vec<_>>()
    });

    let solvers = match build_solvers(shards, hyper, 1) {
        Ok(s) => s,
        Err(source) => return Err(RunFailure { partial: Vec::new(), source }),
    };

    let mut state = init_state(shards);
    let mut records: Vec<DiagnosticsRecord> = Vec::with_capacity(hyper.max_epochs);
    let mut b1_exceedances = 0usize;

    for _ in 0..hyper.max_epochs {
        state = match epoch_update(&state, shards, &solvers, loss, hyper, ball, &mut noise) {
            Ok(next) => next,
            Err(source) => return Err(RunFailure { partial: records, source }),
        };
        let record = diagnostics(&state, shards, loss, hyper, ball);
        if let Some(radius) = ball {
            let mut over = state.z.norm() > radius || state.y.norm() > radius;
            over |= state.x.iter().any(|x| x.norm() > radius + 1e-9);
            if over {
                b1_exceedances += 1;
            }
        }
        on_epoch(&state, &record);
        records.push(record);
        if let Some(tol) = hyper.lyapunov_tol {
            if record.lyapunov <= tol {
                break;
            }
        }
    }

    Ok(RunTrace { records, final_state: state, assumption, b1_exceedances })
}

/// Full diagnostics row at the current state.
pub fn diagnostics<L: SeparableLoss>(
    state: &EngineState,
    shards: &[PartyShard],
    loss: &L,
    hyper: &HyperParams,
    ball: Option<f64>,
) -> DiagnosticsRecord {
    let total = sum_vectors(&state.shares);
    let residual = &total - &state.z;
    let primal_residual = residual.norm();
    let reg: f64 = state.x.iter().map(reg_value).sum();
    let objective = loss.value(&total) + hyper.lambda * reg;
    let lagrangian =
        loss.value(&state.z) + hyper.lambda * reg + state.y.dot(&residual) + 0.5 * hyper.rho * residual.norm_squared();

    let grad_loss_z = loss.grad(&state.z);
    // grad_z L = grad l(z) - y + rho (z - sum s) = grad l(z) - y - rho r
    let grad_z = &grad_loss_z - &state.y - &residual * hyper.rho;
    // grad of the coupling terms wrt x_m is D_m^T (y + rho r)
    let pulled = &state.y + &residual * hyper.rho;

    let mut x_gap_sq = 0.0;
    for (m, shard) in shards.iter().enumerate() {
        let x = &state.x[m];
        let step = x - shard.apply_transpose(&pulled);
        let mapped = prox_reg_ball(&step, hyper.lambda, ball);
        x_gap_sq += (x - mapped).norm_squared();
    }

    let lyapunov = x_gap_sq + grad_z.norm_squared() + residual.norm_squared();
    let residuals = stationarity_residuals(state, shards, loss, hyper, ball);
    let dual_gap_inf = (&grad_loss_z - &state.y).amax();

    DiagnosticsRecord {
        t: state.t,
        objective,
        lagrangian,
        primal_residual,
        lyapunov,
        stationarity: residuals.max(),
        dual_gap_inf,
    }
}

/// The augmented Lagrangian at the current state.
pub fn augmented_lagrangian<L: SeparableLoss>(
    state: &EngineState,
    shards: &[PartyShard],
    loss: &L,
    hyper: &HyperParams,
) -> f64 {
    let _ = shards;
    let total = sum_vectors(&state.shares);
    let residual = &total - &state.z;
    let reg: f64 = state.x.iter().map(reg_value).sum();
    loss.value(&state.z) + hyper.lambda * reg + state.y.dot(&residual) + 0.5 * hyper.rho * residual.norm_squared()
}

/// The Lyapunov stationarity gap: prox gradient maps for the x blocks (plain
/// gradients for a smooth nonconvex regularizer would take the other
/// branch), the z gradient of the Lagrangian, and the primal residual.
pub fn lyapunov<L: SeparableLoss>(
    state: &EngineState,
    shards: &[PartyShard],
    loss: &L,
    hyper: &HyperParams,
    ball: Option<f64>,
) -> f64 {
    diagnostics(state, shards, loss, hyper, ball).lyapunov
}

/// Residuals of the four stationarity conditions.
#[derive(Debug, Clone)]
pub struct StationarityResiduals {
    /// Convex branch, per party: prox gradient map of the subproblem
    /// min lambda R_m + <y, D_m x>.
    pub x_prox: Vec<f64>,
    /// Nonconvex branch, per party: sampled feasible-direction violation of
    /// the variational inequality (zero at stationary points). Unused by the
    /// shipped convex regularizer but computed for completeness.
    pub x_directional: Vec<f64>,
    /// || grad l(z) - y ||
    pub dual: f64,
    /// || sum_m s_m - z ||
    pub primal: f64,
}

impl StationarityResiduals {
    pub fn max(&self) -> f64 {
        let x = self.x_prox.iter().chain(&self.x_directional).fold(0.0f64, |a, &b| a.max(b));
        x.max(self.dual).max(self.primal)
    }
}

/// Per-condition stationarity residuals at the current state. The sampled
/// directional check draws a fixed number of directions from a stream seeded
/// by the run seed, so results are deterministic.
pub fn stationarity_residuals<L: SeparableLoss>(
    state: &EngineState,
    shards: &[PartyShard],
    loss: &L,
    hyper: &HyperParams,
    ball: Option<f64>,
) -> StationarityResiduals {
    let total = sum_vectors(&state.shares);
    let residual = &total - &state.z;
    let primal = residual.norm();
    let dual = (loss.grad(&state.z) - &state.y).norm();

    let mut x_prox = Vec::with_capacity(shards.len());
    let mut x_directional = Vec::with_capacity(shards.len());
    let mut rng = ChaCha20Rng::seed_from_u64(hyper.seed ^ 0x5641_5354);
    for (m, shard) in shards.iter().enumerate() {
        let x = &state.x[m];
        let smooth_grad_at_x = shard.apply_transpose(&state.y);
        let step = x - &smooth_grad_at_x;
        let mapped = prox_reg_ball(&step, hyper.lambda, ball);
        x_prox.push((x - mapped).norm());

        // Gradient of lambda R_m + <y, D_m .> at x_m; a positive inner
        // product with some feasible direction certifies non-stationarity.
        let grad = x * hyper.lambda + &smooth_grad_at_x;
        let mut violation = 0.0f64;
        for _ in 0..64 {
            let mut dir = DVector::from_fn(x.len(), |_, _| rng.random::<f64>() - 0.5);
            let candidate = match ball {
                Some(radius) => {
                    let norm = dir.norm();
                    if norm > 0.0 {
                        dir *= radius * rng.random::<f64>() / norm;
                    }
                    dir
                }
                None => {
                    let norm = dir.norm();
                    if norm > 0.0 {
                        dir /= norm;
                    }
                    x + dir
                }
            };
            let towards = &candidate - x;
            let len = towards.norm();
            if len > 0.0 {
                violation = violation.max(-grad.dot(&towards) / len);
            }
        }
        x_directional.push(violation);
    }

    StationarityResiduals { x_prox, x_directional, dual, primal }
}

/// Feasibility report for the penalty conditions backing the descent lemma.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub rho: f64,
    pub lipschitz: f64,
    pub per_party: Vec<PartyAssumption>,
    /// Strong convexity modulus of the z subproblem (rho for convex loss).
    pub gamma_z: f64,
    /// rho * gamma_z > 2 L^2
    pub penalty_product_ok: bool,
    /// rho >= L
    pub penalty_dominates_lipschitz: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct PartyAssumption {
    pub party: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Strong convexity modulus of the x subproblem: lambda + rho sigma_min.
    pub gamma: f64,
    /// gamma >= 2 sigma_max
    pub curvature_ok: bool,
    /// sigma_min bounded away from zero.
    pub full_rank: bool,
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "penalty feasibility at rho = {:.6e} (L = {:.3e}): {}",
            self.rho,
            self.lipschitz,
            if self.pass { "PASS" } else { "FAIL" }
        )?;
        for p in &self.per_party {
            writeln!(
                f,
                "  party {}: sigma in [{:.3e}, {:.3e}], gamma = {:.3e}, gamma >= 2 sigma_max: {}, full rank: {}",
                p.party, p.sigma_min, p.sigma_max, p.gamma, p.curvature_ok, p.full_rank
            )?;
        }
        writeln!(f, "  rho * gamma_z > 2 L^2: {}", self.penalty_product_ok)?;
        write!(f, "  rho >= L: {}", self.penalty_dominates_lipschitz)
    }
}

/// Check the penalty-size conditions at the given hyperparameters.
pub fn assumption_check(
    shards: &[PartyShard],
    hyper: &HyperParams,
    profile: &LossProfile,
) -> Result<AssumptionReport, DatasetError> {
    let rho = hyper.rho;
    let lambda = hyper.lambda;
    let l = profile.lipschitz;
    let mut per_party = Vec::with_capacity(shards.len());
    let mut pass = true;
    for shard in shards {
        let (sigma_min, sigma_max) = shard.gram_extremes()?;
        let gamma = lambda + rho * sigma_min;
        let curvature_ok = gamma >= 2.0 * sigma_max;
        let full_rank = sigma_min > 1e-12 * sigma_max.max(1.0);
        pass &= curvature_ok && gamma > 0.0;
        per_party.push(PartyAssumption {
            party: shard.party_id(),
            sigma_min,
            sigma_max,
            gamma,
            curvature_ok,
            full_rank,
        });
    }
    // A convex loss only adds curvature, so the z subproblem is at least
    // rho-strongly convex.
    let gamma_z = if profile.convex { rho } else { rho - l };
    let penalty_product_ok = rho * gamma_z > 2.0 * l * l;
    let penalty_dominates_lipschitz = rho >= l;
    pass &= penalty_product_ok && penalty_dominates_lipschitz && gamma_z > 0.0;
    Ok(AssumptionReport {
        rho,
        lipschitz: l,
        per_party,
        gamma_z,
        penalty_product_ok,
        penalty_dominates_lipschitz,
        pass,
    })
}

/// Smallest penalty on a 1.1-geometric grid from max(L, 1e-6) that passes
/// every assumption check, scaled by a 1.05 safety factor.
pub fn recommend_rho(shards: &[PartyShard], profile: &LossProfile, lambda: f64) -> Result<f64, EngineError> {
    // With a rank-deficient shard the curvature condition reduces to
    // lambda >= 2 sigma_max, which no penalty can fix.
    for shard in shards {
        let (sigma_min, sigma_max) = shard.gram_extremes().map_err(EngineError::Dataset)?;
        if sigma_min <= 1e-12 * sigma_max.max(1.0) && lambda < 2.0 * sigma_max {
            return Err(EngineError::NoFeasibleRho(format!(
                "party {} is rank deficient (sigma_min = {sigma_min:.3e}) and lambda = {lambda:.3e} < 2 sigma_max = {:.3e}; increase lambda or drop dependent columns",
                shard.party_id(),
                2.0 * sigma_max
            )));
        }
    }
    let floor = profile.lipschitz.max(1e-6);
    for k in 0..=400 {
        let rho = floor * 1.1f64.powi(k);
        let hyper = HyperParams { rho, lambda, max_epochs: 1, lyapunov_tol: None, seed: 0 };
        if assumption_check(shards, &hyper, profile)?.pass {
            return Ok(rho * 1.05);
        }
    }
    Err(EngineError::NoFeasibleRho("no penalty on the search grid satisfied every condition".to_string()))
}
