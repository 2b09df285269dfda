//! Loss and regularizer kernels for l2-regularized logistic regression ERM:
//! values, gradients, curvature constants and the proximal operator.

use nalgebra::DVector;
use thiserror::Error;

use crate::dataset::PartyShard;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("length mismatch: scores have {scores} entries, labels {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("dimension mismatch for party {party}: block is {rows}x{cols}, weights have {weights} entries")]
    DimensionMismatch { party: usize, rows: usize, cols: usize, weights: usize },
}

/// Regularization weight and the global loss scale (1 or 1/N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda: f64,
    pub loss_scale: f64,
}

impl ObjectiveConfig {
    pub fn new(lambda: f64, loss_scale: f64) -> Self {
        assert!(lambda >= 0.0, "lambda must be nonnegative");
        assert!(loss_scale > 0.0, "loss scale must be positive");
        Self { lambda, loss_scale }
    }

    pub fn loss_profile(&self) -> LossProfile {
        LossProfile { lipschitz: loss_lipschitz(self.loss_scale), convex: true }
    }
}

/// Gradient-Lipschitz constant of the loss, and whether it is convex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossProfile {
    pub lipschitz: f64,
    pub convex: bool,
}

/// A loss of the form l(z) = sum_i l_i(z_i), exposing the per-coordinate
/// derivatives the entry-wise z-solver needs.
pub trait SeparableLoss {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn value_at(&self, i: usize, z: f64) -> f64;
    fn deriv_at(&self, i: usize, z: f64) -> f64;
    /// Second derivative; must be nonnegative for the convex losses shipped here.
    fn curvature_at(&self, i: usize, z: f64) -> f64;
    fn lipschitz(&self) -> f64;
    fn convex(&self) -> bool {
        true
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        assert_eq!(z.len(), self.len(), "score vector length");
        (0..self.len()).map(|i| self.value_at(i, z[i])).sum()
    }

    fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        assert_eq!(z.len(), self.len(), "score vector length");
        DVector::from_fn(self.len(), |i, _| self.deriv_at(i, z[i]))
    }
}

/// Logistic loss with labels absorbed: l_i(z) = scale * log(1 + exp(-y_i z)).
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLoss {
    labels: DVector<f64>,
    scale: f64,
}

impl LogisticLoss {
    pub fn new(labels: DVector<f64>, scale: f64) -> Self {
        assert!(scale > 0.0, "loss scale must be positive");
        assert!(labels.iter().all(|&y| y == 1.0 || y == -1.0), "labels must be in {{-1, +1}}");
        Self { labels, scale }
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Numerically safe sigmoid.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(t)) without overflow; for t >= 30 the linear term dominates.
fn log1p_exp(t: f64) -> f64 {
    if t >= 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

impl SeparableLoss for LogisticLoss {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn value_at(&self, i: usize, z: f64) -> f64 {
        self.scale * log1p_exp(-self.labels[i] * z)
    }

    fn deriv_at(&self, i: usize, z: f64) -> f64 {
        let y = self.labels[i];
        self.scale * (-y * sigmoid(-y * z))
    }

    fn curvature_at(&self, i: usize, z: f64) -> f64 {
        let s = sigmoid(-self.labels[i] * z);
        self.scale * s * (1.0 - s)
    }

    fn lipschitz(&self) -> f64 {
        loss_lipschitz(self.scale)
    }
}

/// Total logistic loss at scores `z`.
pub fn loss_value(z: &DVector<f64>, labels: &DVector<f64>, scale: f64) -> Result<f64, ObjectiveError> {
    if z.len() != labels.len() {
        return Err(ObjectiveError::LengthMismatch { scores: z.len(), labels: labels.len() });
    }
    Ok(LogisticLoss::new(labels.clone(), scale).value(z))
}

/// Gradient of the logistic loss at scores `z`.
pub fn loss_grad(z: &DVector<f64>, labels: &DVector<f64>, scale: f64) -> Result<DVector<f64>, ObjectiveError> {
    if z.len() != labels.len() {
        return Err(ObjectiveError::LengthMismatch { scores: z.len(), labels: labels.len() });
    }
    Ok(LogisticLoss::new(labels.clone(), scale).grad(z))
}

/// Gradient-Lipschitz constant of the (separable) logistic loss.
pub fn loss_lipschitz(loss_scale: f64) -> f64 {
    loss_scale * 0.25
}

/// R_m(x) = ||x||^2 / 2.
pub fn reg_value(x: &DVector<f64>) -> f64 {
    0.5 * x.norm_squared()
}

pub fn reg_grad(x: &DVector<f64>) -> DVector<f64> {
    x.clone()
}

/// Upper bound on |R_m''|; constant for the quadratic regularizer.
pub fn reg_curvature() -> f64 {
    1.0
}

/// prox of w * ||.||^2/2 at v, i.e. argmin_x w/2 ||x||^2 + 1/2 ||x - v||^2.
pub fn prox_reg(v: &DVector<f64>, w: f64) -> DVector<f64> {
    assert!(w >= 0.0, "prox weight must be nonnegative");
    v / (1.0 + w)
}

/// Same prox restricted to the l2 ball of the given radius. For radially
/// symmetric objectives the constrained minimizer is the scaled point
/// projected onto the ball.
pub fn prox_reg_ball(v: &DVector<f64>, w: f64, ball: Option<f64>) -> DVector<f64> {
    let p = prox_reg(v, w);
    match ball {
        Some(r) => {
            let n = p.norm();
            if n > r {
                p * (r / n)
            } else {
                p
            }
        }
        None => p,
    }
}

/// l(sum_m D_m x_m) + lambda * sum_m R_m(x_m).
pub fn full_objective<L: SeparableLoss>(
    shards: &[PartyShard],
    xs: &[DVector<f64>],
    loss: &L,
    lambda: f64,
) -> Result<f64, ObjectiveError> {
    assert_eq!(shards.len(), xs.len(), "one weight vector per shard");
    let n = loss.len();
    let mut scores = DVector::<f64>::zeros(n);
    let mut reg = 0.0;
    for (shard, x) in shards.iter().zip(xs) {
        if shard.width() != x.len() || shard.n_samples() != n {
            return Err(ObjectiveError::DimensionMismatch {
                party: shard.party_id(),
                rows: shard.n_samples(),
                cols: shard.width(),
                weights: x.len(),
            });
        }
        scores += shard.apply(x);
        reg += reg_value(x);
    }
    Ok(loss.value(&scores) + lambda * reg)
}

#[cfg(test)]
pub(crate) mod hooks {
    use super::*;

    /// l == 0: isolates the quadratic part of the z subproblem.
    pub struct ZeroLoss(pub usize);

    impl SeparableLoss for ZeroLoss {
        fn len(&self) -> usize {
            self.0
        }
        fn value_at(&self, _: usize, _: f64) -> f64 {
            0.0
        }
        fn deriv_at(&self, _: usize, _: f64) -> f64 {
            0.0
        }
        fn curvature_at(&self, _: usize, _: f64) -> f64 {
            0.0
        }
        fn lipschitz(&self) -> f64 {
            0.0
        }
    }

    /// l_i(z) = (z - a_i)^2 / 2: analytically tractable stationary points.
    pub struct QuadraticLoss(pub DVector<f64>);

    impl SeparableLoss for QuadraticLoss {
        fn len(&self) -> usize {
            self.0.len()
        }
        fn value_at(&self, i: usize, z: f64) -> f64 {
            0.5 * (z - self.0[i]).powi(2)
        }
        fn deriv_at(&self, i: usize, z: f64) -> f64 {
            z - self.0[i]
        }
        fn curvature_at(&self, _: usize, _: f64) -> f64 {
            1.0
        }
        fn lipschitz(&self) -> f64 {
            1.0
        }
    }
}
