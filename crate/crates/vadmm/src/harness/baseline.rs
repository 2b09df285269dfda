//! Centralized and local-only logistic regression reference models, trained
//! by first-order descent, plus the shared test-set evaluator.

use nalgebra::{DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::harness::HarnessError;
use crate::objective::{sigmoid, LogisticLoss, SeparableLoss};

#[derive(Debug, Clone, Copy)]
pub struct BaselineOptions {
    pub lambda: f64,
    pub loss_scale: f64,
    pub max_steps: usize,
    pub init_step: f64,
    pub grad_tol: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self { lambda: 1e-3, loss_scale: 1.0, max_steps: 5000, init_step: 1.0, grad_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub weights: DVector<f64>,
    pub steps: usize,
    pub grad_norm: f64,
    pub train_objective: f64,
    pub test_log_loss: f64,
    pub test_accuracy: f64,
}

/// Full-feature l2-regularized logistic regression by gradient descent with
/// backtracking line search (with momentum and adaptive restart layered on
/// so ill-conditioned instances still reach the gradient tolerance), then
/// evaluated on the test set.
pub fn baseline_centralized(
    train: &LabeledDataset,
    test: &LabeledDataset,
    opts: &BaselineOptions,
) -> Result<BaselineFit, HarnessError> {
    fit_block(train.features(), train.labels(), test.features(), test.labels(), opts)
}

/// The same reference restricted to the first `local_cols` feature columns
/// (party 1's block).
pub fn baseline_local(
    train: &LabeledDataset,
    test: &LabeledDataset,
    opts: &BaselineOptions,
    local_cols: usize,
) -> Result<BaselineFit, HarnessError> {
    if local_cols == 0 || local_cols > train.n_features() {
        return Err(HarnessError::Config(format!(
            "local baseline needs a column count in 1..={}, got {local_cols}",
            train.n_features()
        )));
    }
    let train_block = train.features().columns(0, local_cols).into_owned();
    let test_block = test.features().columns(0, local_cols).into_owned();
    fit_block(&train_block, train.labels(), &test_block, test.labels(), opts)
}

fn fit_block(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    test_x: &DMatrix<f64>,
    test_y: &DVector<f64>,
    opts: &BaselineOptions,
) -> Result<BaselineFit, HarnessError> {
    let loss = LogisticLoss::new(train_y.clone(), opts.loss_scale);
    let d = train_x.ncols();

    let value = |w: &DVector<f64>| -> f64 {
        let scores = train_x * w;
        loss.value(&scores) + 0.5 * opts.lambda * w.norm_squared()
    };
    let value_grad = |w: &DVector<f64>| -> (f64, DVector<f64>) {
        let scores = train_x * w;
        let g = train_x.tr_mul(&loss.grad(&scores)) + w * opts.lambda;
        (loss.value(&scores) + 0.5 * opts.lambda * w.norm_squared(), g)
    };

    let mut w = DVector::<f64>::zeros(d);
    let mut w_prev = w.clone();
    let mut f_curr = value(&w);
    let mut step = opts.init_step;
    let mut t_momentum = 1.0f64;
    let mut steps_taken = 0;
    let mut grad_norm = f64::INFINITY;
    let debug_trace = std::env::var("VADMM_BASELINE_TRACE").is_ok();

    for k in 0..opts.max_steps {
        if debug_trace && k % 500 == 0 {
            let (_, g) = value_grad(&w);
            eprintln!("step {k}: f {f_curr:.6} grad {:.3e} step {step:.3e} t {t_momentum:.1}", g.norm());
        }
        steps_taken = k + 1;
        let (_, g_here) = value_grad(&w);
        grad_norm = g_here.norm();
        if grad_norm <= opts.grad_tol {
            steps_taken = k;
            break;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_momentum * t_momentum).sqrt());
        let beta = (t_momentum - 1.0) / t_next;
        let probe = &w + (&w - &w_prev) * beta;
        let (f_probe, g_probe) = value_grad(&probe);

        // Backtracking from the momentum point.
        let (mut candidate, mut f_candidate, mut s) = backtrack(&value, &probe, &g_probe, f_probe, step);

        if f_candidate > f_curr {
            // Momentum overshoot: restart and take a plain descent step.
            t_momentum = 1.0;
            let (c2, f2, s2) = backtrack(&value, &w, &g_here, f_curr, step);
            if f2 > f_curr + f_curr.abs() * 1e-12 {
                return Err(HarnessError::Baseline(format!(
                    "line search failed to find descent at step {k} (objective {f_curr})"
                )));
            }
            if f2 >= f_curr && s2 < 1e-16 {
                // No representable progress left at this scale.
                break;
            }
            candidate = c2;
            f_candidate = f2;
            s = s2;
        } else if g_probe.dot(&(&candidate - &w)) > 0.0 {
            // Momentum is pointing uphill: drop it but keep the step.
            t_momentum = 1.0;
        } else {
            t_momentum = t_next;
        }

        w_prev = std::mem::replace(&mut w, candidate);
        f_curr = f_candidate;
        step = (s * 1.5).min(1e6);
    }

    let (test_log_loss, test_accuracy) = evaluate_scores(&(test_x * &w), test_y)?;
    Ok(BaselineFit {
        train_objective: f_curr,
        weights: w,
        steps: steps_taken,
        grad_norm,
        test_log_loss,
        test_accuracy,
    })
}

/// Halve the step until the Armijo decrease holds; at floating-point
/// resolution, settle for not getting worse.
fn backtrack<F: Fn(&DVector<f64>) -> f64>(
    value: &F,
    from: &DVector<f64>,
    grad: &DVector<f64>,
    f_from: f64,
    init_step: f64,
) -> (DVector<f64>, f64, f64) {
    let gnorm2 = grad.norm_squared();
    let mut s = init_step;
    loop {
        let candidate = from - grad * s;
        let f_candidate = value(&candidate);
        if f_candidate <= f_from - 0.5 * s * gnorm2 || (s < 1e-16 && f_candidate <= f_from) || s < 1e-18 {
            return (candidate, f_candidate, s);
        }
        s *= 0.5;
    }
}

/// Mean logistic log loss and sign accuracy (ties predict +1) at the given
/// scores.
pub fn evaluate_scores(scores: &DVector<f64>, labels: &DVector<f64>) -> Result<(f64, f64), HarnessError> {
    if scores.len() != labels.len() {
        return Err(HarnessError::Config(format!(
            "evaluation length mismatch: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..labels.len() {
        let t = -labels[i] * scores[i];
        loss += if t >= 30.0 { t } else { t.exp().ln_1p() };
        let predicted = if scores[i] >= 0.0 { 1.0 } else { -1.0 };
        if predicted == labels[i] {
            correct += 1;
        }
    }
    Ok((loss / n, correct as f64 / n))
}

/// Evaluate a column-partitioned model: scores are the sum of per-party
/// test-block contributions.
pub fn evaluate_model(
    test_blocks: &[DMatrix<f64>],
    xs: &[DVector<f64>],
    labels: &DVector<f64>,
) -> Result<(f64, f64), HarnessError> {
    assert_eq!(test_blocks.len(), xs.len());
    let n = labels.len();
    let mut scores = DVector::<f64>::zeros(n);
    for (block, x) in test_blocks.iter().zip(xs) {
        if block.ncols() != x.len() || block.nrows() != n {
            return Err(HarnessError::Config(format!(
                "evaluation dimension mismatch: block {}x{} vs {} weights and {} labels",
                block.nrows(),
                block.ncols(),
                x.len(),
                n
            )));
        }
        scores += block * x;
    }
    evaluate_scores(&scores, labels)
}

/// Probability the label is +1 under the fitted model, for inspection.
pub fn predict_proba(scores: &DVector<f64>) -> DVector<f64> {
    scores.map(sigmoid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn toy() -> (LabeledDataset, LabeledDataset) {
        // Two separable points on the axes.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_row_slice(&[1.0, -1.0]);
        let ds = LabeledDataset::new(x, y);
        (ds.clone(), ds)
    }

    #[test]
    fn huge_lambda_shrinks_the_model_to_zero() {
        let (train, test) = toy();
        let opts = BaselineOptions { lambda: 1e9, ..Default::default() };
        let fit = baseline_centralized(&train, &test, &opts).unwrap();
        assert!(fit.weights.norm() < 1e-6);
        assert_relative_eq!(fit.test_log_loss, std::f64::consts::LN_2, max_relative = 1e-4);
    }

    #[test]
    fn two_point_fit_matches_grid_search() {
        let (train, test) = toy();
        let opts = BaselineOptions { lambda: 0.1, ..Default::default() };
        let fit = baseline_centralized(&train, &test, &opts).unwrap();
        assert!(fit.grad_norm <= opts.grad_tol);

        // The objective separates per coordinate; scan each on a fine grid.
        let obj = |w: f64| (1.0f64 + (-w).exp()).ln() + 0.05 * w * w;
        let mut best = (f64::INFINITY, 0.0);
        let mut w = 0.0;
        while w <= 3.0 {
            if obj(w) < best.0 {
                best = (obj(w), w);
            }
            w += 1e-4;
        }
        assert!((fit.weights[0] - best.1).abs() <= 1e-3);
        assert!((fit.weights[1] + best.1).abs() <= 1e-3);
    }

    #[test]
    fn local_baseline_never_beats_centralized_on_train() {
        let pair = crate::harness::fixtures::gisette_small(5).head(300, 200);
        let opts = BaselineOptions { lambda: 0.5, max_steps: 2000, ..Default::default() };
        let central = baseline_centralized(&pair.train, &pair.test, &opts).unwrap();
        let local = baseline_local(&pair.train, &pair.test, &opts, 200).unwrap();
        // The restricted model is nested in the full one.
        assert!(local.train_objective >= central.train_objective - 1e-9);
    }

    #[test]
    fn local_baseline_rejects_empty_block() {
        let (train, test) = toy();
        assert!(baseline_local(&train, &test, &BaselineOptions::default(), 0).is_err());
        // Full-width local block equals the centralized model.
        let opts = BaselineOptions { lambda: 0.3, ..Default::default() };
        let full = baseline_centralized(&train, &test, &opts).unwrap();
        let local = baseline_local(&train, &test, &opts, 2).unwrap();
        assert_relative_eq!(full.test_log_loss, local.test_log_loss, max_relative = 1e-10);
    }

    #[test]
    fn evaluator_zero_model_and_saturated_model() {
        let labels = DVector::from_row_slice(&[1.0, 1.0, -1.0, 1.0]);
        let zero = DVector::zeros(4);
        let (ll, acc) = evaluate_scores(&zero, &labels).unwrap();
        assert_relative_eq!(ll, std::f64::consts::LN_2, max_relative = 1e-12);
        // Zero scores predict +1 everywhere: accuracy is the +1 class rate.
        assert_relative_eq!(acc, 0.75, max_relative = 1e-12);

        let huge = DVector::from_row_slice(&[50.0, 50.0, -50.0, 50.0]);
        let (ll, acc) = evaluate_scores(&huge, &labels).unwrap();
        assert!(ll < 1e-20);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn evaluator_matches_duplicate_implementation() {
        let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(40);
        use rand::Rng;
        let n = 31;
        let labels = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let scores = DVector::from_fn(n, |_, _| 6.0 * rng.random::<f64>() - 3.0);
        let (ll, acc) = evaluate_scores(&scores, &labels).unwrap();

        let mut oracle_ll = 0.0;
        let mut oracle_acc = 0.0;
        for i in 0..n {
            oracle_ll += (1.0 + (-labels[i] * scores[i]).exp()).ln();
            let pred = if scores[i] >= 0.0 { 1.0 } else { -1.0 };
            if pred == labels[i] {
                oracle_acc += 1.0;
            }
        }
        assert_relative_eq!(ll, oracle_ll / n as f64, max_relative = 1e-12);
        assert_relative_eq!(acc, oracle_acc / n as f64, max_relative = 1e-15);
    }

    #[test]
    fn evaluator_rejects_dimension_mismatch() {
        let labels = DVector::from_row_slice(&[1.0, -1.0]);
        let scores = DVector::zeros(3);
        assert!(evaluate_scores(&scores, &labels).is_err());
    }
}
