//! Exact solvers for the three per-iteration subproblems: the party x-update,
//! the entry-wise z-update and the dual y-update.
//!
//! With a quadratic regularizer the x-subproblem is a linear solve, so it is
//! done by cached Cholesky (or matrix-free conjugate gradients for very wide
//! shards) rather than a generic quasi-Newton routine. That exactness is what
//! the optimality invariants in the test suite lean on.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::dataset::PartyShard;
use crate::objective::SeparableLoss;

/// Widest shard solved by dense Cholesky; beyond this the solver switches to
/// conjugate gradients applied matrix-free through the data block.
const DENSE_CHOLESKY_MAX: usize = 4096;
const CG_MAX_ITERS: usize = 10_000;
const CG_TOL: f64 = 1e-10;
const BALL_TOL: f64 = 1e-8;
const Z_DERIV_TOL: f64 = 1e-10;
const Z_MAX_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("normal equations are singular: lambda = 0 and the shard is rank deficient (full column rank assumption violated)")]
    RankDeficient,
    #[error("conjugate gradients did not reach residual {CG_TOL:e} within {CG_MAX_ITERS} iterations (residual {residual:.3e})")]
    CgNoConvergence { residual: f64 },
    #[error("ball-constraint multiplier search failed to bracket the radius")]
    BallBracketFailure,
    #[error("scalar z-minimizer failed to bracket a sign change")]
    ZBracketFailure,
}

/// Inputs for one party x-update.
///
/// `others_minus_z` is c = sum_{k != m} D_k x_k - z from the previous
/// iteration; `ball_radius` switches on the l2-ball constraint on x.
pub struct XStepInput<'a> {
    pub shard: &'a PartyShard,
    pub x_prev: Option<&'a DVector<f64>>,
    pub others_minus_z: &'a DVector<f64>,
    pub dual: &'a DVector<f64>,
    pub rho: f64,
    pub lambda: f64,
    pub ball_radius: Option<f64>,
}

/// Minimize lambda/2 ||x||^2 + <y, Dx> + rho/2 ||c + Dx||^2 (optionally over
/// the l2 ball) exactly.
pub fn x_step(input: &XStepInput<'_>) -> Result<DVector<f64>, SolveError> {
    let solver = XSolver::new(input.shard, input.lambda, input.rho)?;
    solver.solve(input.others_minus_z, input.dual, input.ball_radius, input.x_prev)
}

enum Factor<'a> {
    Dense(Cholesky<f64, Dyn>),
    MatrixFree { shard: &'a PartyShard },
}

/// Per-shard x-update solver with the iteration-independent factorization
/// cached across epochs.
pub struct XSolver<'a> {
    shard: &'a PartyShard,
    lambda: f64,
    rho: f64,
    factor: Factor<'a>,
}

impl<'a> XSolver<'a> {
    pub fn new(shard: &'a PartyShard, lambda: f64, rho: f64) -> Result<Self, SolveError> {
        assert!(rho > 0.0, "penalty rho must be positive");
        assert!(lambda >= 0.0, "lambda must be nonnegative");
        let factor = if shard.width() <= DENSE_CHOLESKY_MAX {
            Factor::Dense(factorize(shard.gram(), lambda, rho)?)
        } else {
            Factor::MatrixFree { shard }
        };
        Ok(Self { shard, lambda, rho, factor })
    }

    /// Solve for the given coupling data. `warm` seeds the CG path only.
    pub fn solve(
        &self,
        others_minus_z: &DVector<f64>,
        dual: &DVector<f64>,
        ball_radius: Option<f64>,
        warm: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>, SolveError> {
        // (lambda I + rho G) x = -D^T (y + rho c)
        let pulled = dual + others_minus_z * self.rho;
        let rhs = -self.shard.apply_transpose(&pulled);
        let x = self.solve_shifted(0.0, &rhs, warm)?;
        let radius = match ball_radius {
            Some(r) if x.norm() > r => r,
            _ => return Ok(x),
        };

        // Exact multiplier search: ||x(nu)|| is strictly decreasing in nu.
        let mut lo = 0.0f64;
        let mut hi = self.lambda.max(self.rho).max(1.0);
        let mut guard = 0;
        while self.solve_shifted(hi, &rhs, warm)?.norm() > radius {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(SolveError::BallBracketFailure);
            }
        }
        let mut x = DVector::zeros(self.shard.width());
        for _ in 0..200 {
            let nu = 0.5 * (lo + hi);
            x = self.solve_shifted(nu, &rhs, warm)?;
            let norm = x.norm();
            if (norm - radius).abs() <= BALL_TOL {
                return Ok(x);
            }
            if norm > radius {
                lo = nu;
            } else {
                hi = nu;
            }
        }
        // The interval is exhausted below f64 resolution; the boundary gap is
        // then limited by conditioning, not by the search.
        if (x.norm() - radius).abs() <= 1e-6 * radius.max(1.0) {
            Ok(x)
        } else {
            Err(SolveError::BallBracketFailure)
        }
    }

    fn solve_shifted(&self, nu: f64, rhs: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DVector<f64>, SolveError> {
        match &self.factor {
            Factor::Dense(chol) if nu == 0.0 => Ok(chol.solve(rhs)),
            Factor::Dense(_) => {
                let chol = factorize(self.shard.gram(), self.lambda + nu, self.rho)?;
                Ok(chol.solve(rhs))
            }
            Factor::MatrixFree { shard } => {
                let lam = self.lambda + nu;
                let rho = self.rho;
                conjugate_gradients(
                    |v| {
                        let dv = shard.apply(v);
                        shard.apply_transpose(&dv) * rho + v * lam
                    },
                    rhs,
                    warm,
                )
            }
        }
    }
}

fn factorize(gram: &DMatrix<f64>, lambda: f64, rho: f64) -> Result<Cholesky<f64, Dyn>, SolveError> {
    let d = gram.nrows();
    let mut system = gram * rho;
    for i in 0..d {
        system[(i, i)] += lambda;
    }
    system.cholesky().ok_or(SolveError::RankDeficient)
}

fn conjugate_gradients<F>(apply: F, rhs: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DVector<f64>, SolveError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let tol = CG_TOL * rhs.norm().max(1.0);
    let mut x = warm.cloned().unwrap_or_else(|| DVector::zeros(rhs.len()));
    let mut r = rhs - apply(&x);
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    if rs.sqrt() <= tol {
        return Ok(x);
    }
    for _ in 0..CG_MAX_ITERS {
        let ap = apply(&p);
        let alpha = rs / p.dot(&ap);
        x += &p * alpha;
        r -= ap * alpha;
        let rs_new = r.norm_squared();
        if rs_new.sqrt() <= tol {
            return Ok(x);
        }
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    Err(SolveError::CgNoConvergence { residual: rs.sqrt() })
}

/// Inputs for the entry-wise z-update.
pub struct ZStepInput<'a, L: SeparableLoss> {
    pub loss: &'a L,
    /// w = sum_m D_m x_m (possibly perturbed).
    pub aggregate: &'a DVector<f64>,
    pub dual: &'a DVector<f64>,
    pub rho: f64,
}

/// Minimize l_i(z) - y_i z + rho/2 (w_i - z)^2 per coordinate by safeguarded
/// Newton (bisection fallback inside a sign-change bracket).
pub fn z_step<L: SeparableLoss>(input: &ZStepInput<'_, L>) -> Result<DVector<f64>, SolveError> {
    assert!(input.rho > 0.0, "penalty rho must be positive");
    let n = input.loss.len();
    assert_eq!(input.aggregate.len(), n);
    assert_eq!(input.dual.len(), n);
    let mut z = DVector::zeros(n);
    for i in 0..n {
        z[i] = scalar_minimize(input.loss, i, input.aggregate[i], input.dual[i], input.rho)?;
    }
    Ok(z)
}

fn scalar_minimize<L: SeparableLoss>(loss: &L, i: usize, w: f64, y: f64, rho: f64) -> Result<f64, SolveError> {
    let phi_d = |v: f64| loss.deriv_at(i, v) - y + rho * (v - w);
    let phi_dd = |v: f64| loss.curvature_at(i, v) + rho;

    // Minimizer of the quadratic part alone; exact when the loss vanishes.
    let mut v = w + y / rho;
    let d0 = phi_d(v);
    if d0.abs() <= Z_DERIV_TOL {
        return Ok(v);
    }

    // Bracket a sign change around the start point. phi' is increasing, so a
    // geometric expansion must cross zero.
    let (mut lo, mut hi);
    let mut step = (1.0 + v.abs()).max(1.0 / rho);
    if d0 > 0.0 {
        hi = v;
        lo = v - step;
        let mut guard = 0;
        while phi_d(lo) > 0.0 {
            step *= 2.0;
            lo -= step;
            guard += 1;
            if guard > 200 {
                return Err(SolveError::ZBracketFailure);
            }
        }
    } else {
        lo = v;
        hi = v + step;
        let mut guard = 0;
        while phi_d(hi) < 0.0 {
            step *= 2.0;
            hi += step;
            guard += 1;
            if guard > 200 {
                return Err(SolveError::ZBracketFailure);
            }
        }
    }

    for _ in 0..Z_MAX_ITERS {
        let d = phi_d(v);
        if d.abs() <= Z_DERIV_TOL {
            return Ok(v);
        }
        if d > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let newton = v - d / phi_dd(v);
        v = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Ok(v)
}

/// y + rho (w - z), the exact dual ascent step.
pub fn y_step(y: &DVector<f64>, rho: f64, aggregate: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    y + (aggregate - z) * rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::hooks::ZeroLoss;
    use crate::objective::LogisticLoss;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn x_objective_grad(input: &XStepInput<'_>, x: &DVector<f64>) -> DVector<f64> {
        // lambda x + D^T y + rho D^T (c + D x)
        let fit = input.others_minus_z + input.shard.apply(x);
        x * input.lambda + input.shard.apply_transpose(input.dual) + input.shard.apply_transpose(&fit) * input.rho
    }

    #[test]
    fn x_step_zero_data_term() {
        let shard = PartyShard::new(0, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        let zero = vec(&[0.0, 0.0]);
        let x = x_step(&XStepInput {
            shard: &shard,
            x_prev: None,
            others_minus_z: &zero,
            dual: &zero,
            rho: 1.0,
            lambda: 1.0,
            ball_radius: None,
        })
        .unwrap();
        assert_eq!(x, vec(&[0.0]));
    }

    #[test]
    fn x_step_hand_solved_instance() {
        // (1 + 1) x = -1  =>  x = -0.5
        let shard = PartyShard::new(0, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        let x = x_step(&XStepInput {
            shard: &shard,
            x_prev: None,
            others_minus_z: &vec(&[0.0, 0.0]),
            dual: &vec(&[1.0, 0.0]),
            rho: 1.0,
            lambda: 1.0,
            ball_radius: None,
        })
        .unwrap();
        assert_relative_eq!(x[0], -0.5, max_relative = 1e-14);
    }

    #[test]
    fn x_step_gradient_vanishes_at_solution() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for trial in 0..20 {
            let shard = PartyShard::new(0, DMatrix::from_fn(20, 6, |_, _| rng.random::<f64>() - 0.5));
            let input = XStepInput {
                shard: &shard,
                x_prev: None,
                others_minus_z: &DVector::from_fn(20, |_, _| rng.random::<f64>() - 0.5),
                dual: &DVector::from_fn(20, |_, _| rng.random::<f64>() - 0.5),
                rho: 0.5 + rng.random::<f64>(),
                lambda: 0.1 + rng.random::<f64>(),
                ball_radius: None,
            };
            let x = x_step(&input).unwrap();
            let g = x_objective_grad(&input, &x);
            assert!(g.norm() <= 1e-8, "trial {trial}: gradient norm {}", g.norm());
        }
    }

    #[test]
    fn x_step_optimality_residual_scales_with_rhs() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let shard = PartyShard::new(0, DMatrix::from_fn(30, 5, |_, _| rng.random::<f64>() - 0.5));
        let input = XStepInput {
            shard: &shard,
            x_prev: None,
            others_minus_z: &DVector::from_fn(30, |_, _| 100.0 * (rng.random::<f64>() - 0.5)),
            dual: &DVector::from_fn(30, |_, _| 100.0 * (rng.random::<f64>() - 0.5)),
            rho: 2.0,
            lambda: 0.0,
            ball_radius: None,
        };
        let x = x_step(&input).unwrap();
        let pulled = input.dual + input.others_minus_z * input.rho;
        let rhs = -shard.apply_transpose(&pulled);
        let g = x_objective_grad(&input, &x);
        assert!(g.norm() <= 1e-8 * (1.0 + rhs.norm()));
    }

    #[test]
    fn x_step_rank_deficient_without_lambda_is_an_error() {
        // Two identical columns: D^T D singular, lambda = 0.
        let shard = PartyShard::new(0, DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]));
        let zero = DVector::zeros(3);
        let err = x_step(&XStepInput {
            shard: &shard,
            x_prev: None,
            others_minus_z: &zero,
            dual: &zero,
            rho: 1.0,
            lambda: 0.0,
            ball_radius: None,
        })
        .unwrap_err();
        assert!(matches!(err, SolveError::RankDeficient));
        assert!(err.to_string().contains("full column rank"));
    }

    #[test]
    fn x_step_ball_constraint_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let shard = PartyShard::new(0, DMatrix::from_fn(25, 4, |_, _| rng.random::<f64>() - 0.5));
        let c = DVector::from_fn(25, |_, _| 5.0 * (rng.random::<f64>() - 0.5));
        let y = DVector::from_fn(25, |_, _| 5.0 * (rng.random::<f64>() - 0.5));
        let free = x_step(&XStepInput {
            shard: &shard,
            x_prev: None,
            others_minus_z: &c,
            dual: &y,
            rho: 1.0,
            lambda: 0.01,
            ball_radius: None,
        })
        .unwrap();
        assert!(free.norm() > 0.5, "fixture should produce a large unconstrained step");

        let radius = 0.4 * free.norm();
        let constrained = x_step(&XStepInput {
            shard: &shard,
            x_prev: None,
            others_minus_z: &c,
            dual: &y,
            rho: 1.0,
            lambda: 0.01,
            ball_radius: Some(radius),
        })
        .unwrap();
        assert!(constrained.norm() <= radius + 1e-8);
        assert!((constrained.norm() - radius).abs() <= 1e-8);

        // A radius the free solution already satisfies returns it unchanged.
        let loose = x_step(&XStepInput {
            shard: &shard,
            x_prev: None,
            others_minus_z: &c,
            dual: &y,
            rho: 1.0,
            lambda: 0.01,
            ball_radius: Some(2.0 * free.norm()),
        })
        .unwrap();
        assert_eq!(loose, free);
    }

    #[test]
    fn cg_path_matches_dense_path() {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let shard = PartyShard::new(0, DMatrix::from_fn(30, 6, |_, _| rng.random::<f64>() - 0.5));
        let c = DVector::from_fn(30, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(30, |_, _| rng.random::<f64>() - 0.5);
        let solver = XSolver::new(&shard, 0.3, 1.2).unwrap();
        let dense = solver.solve(&c, &y, None, None).unwrap();

        let pulled = &y + &c * 1.2;
        let rhs = -shard.apply_transpose(&pulled);
        let cg = conjugate_gradients(
            |v| shard.apply_transpose(&shard.apply(v)) * 1.2 + v * 0.3,
            &rhs,
            None,
        )
        .unwrap();
        assert!((dense - cg).norm() <= 1e-8);
    }

    #[test]
    fn z_step_without_loss_is_the_quadratic_minimizer() {
        let loss = ZeroLoss(3);
        let w = vec(&[1.0, -2.0, 0.5]);
        let y = vec(&[0.2, 0.0, -0.4]);
        let z = z_step(&ZStepInput { loss: &loss, aggregate: &w, dual: &y, rho: 2.0 }).unwrap();
        let expect = &w + &y / 2.0;
        assert_eq!(z, expect);
    }

    #[test]
    fn z_step_finds_logistic_fixed_point() {
        // Minimizer of log(1 + e^-z) + z^2/2 solves z = sigmoid(-z).
        let loss = LogisticLoss::new(vec(&[1.0]), 1.0);
        let z = z_step(&ZStepInput { loss: &loss, aggregate: &vec(&[0.0]), dual: &vec(&[0.0]), rho: 1.0 }).unwrap();

        // Independent scalar bisection oracle on the same optimality equation.
        let f = |v: f64| v - crate::objective::sigmoid(-v);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((z[0] - oracle).abs() <= 1e-10);
        assert_relative_eq!(z[0], 0.4011, max_relative = 2e-4);
    }

    #[test]
    fn z_step_huge_rho_approaches_quadratic_solution() {
        let mut rng = ChaCha20Rng::seed_from_u64(35);
        let n = 20;
        let labels = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let loss = LogisticLoss::new(labels, 1.0);
        let w = DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let y = DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let rho = 1e6;
        let z = z_step(&ZStepInput { loss: &loss, aggregate: &w, dual: &y, rho }).unwrap();
        let quad = &w + &y / rho;
        assert!((z - quad).amax() <= 1e-5);
    }

    #[test]
    fn z_step_derivative_is_tiny_at_solution() {
        let mut rng = ChaCha20Rng::seed_from_u64(36);
        let n = 50;
        let labels = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let loss = LogisticLoss::new(labels, 1.0);
        let w = DVector::from_fn(n, |_, _| 4.0 * rng.random::<f64>() - 2.0);
        let y = DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let rho = 0.7;
        let z = z_step(&ZStepInput { loss: &loss, aggregate: &w, dual: &y, rho }).unwrap();
        for i in 0..n {
            let d = loss.deriv_at(i, z[i]) - y[i] + rho * (z[i] - w[i]);
            assert!(d.abs() <= 1e-9, "coordinate {i} derivative {d}");
        }
    }

    #[test]
    fn y_step_arithmetic() {
        let y = y_step(&vec(&[0.0]), 2.0, &vec(&[1.5]), &vec(&[1.0]));
        assert_eq!(y, vec(&[1.0]));
        // w == z leaves the dual unchanged.
        let same = vec(&[0.3, -0.7]);
        let y = y_step(&vec(&[0.1, 0.2]), 5.0, &same, &same);
        assert_eq!(y, vec(&[0.1, 0.2]));
    }

    #[test]
    fn y_step_matches_duplicate_expression() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        for _ in 0..50 {
            let n = 4;
            let y = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            let w = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            let z = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            let rho = rng.random::<f64>() + 0.1;
            let got = y_step(&y, rho, &w, &z);
            for i in 0..n {
                let expect = y[i] + rho * (w[i] - z[i]);
                assert_eq!(got[i].to_bits(), expect.to_bits());
            }
        }
    }
}
