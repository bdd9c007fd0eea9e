//! Central finite-difference check of the adapter gradient.

use ndarray::Array2;

use crate::adapter::{backward, batch_logits, forward, AdapterParams, TextBank};
use crate::error::Result;
use crate::label_weighting::Targets;
use crate::objective::WeightedObjective;

/// `|a - n| / max(|a| + |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest per-entry relative error over every W1 and W2 entry.
    pub max_rel_err: f64,
    /// `||a - n|| / max(||a|| + ||n||, 1e-8)` over all entries at once.
    pub norm_rel_err: f64,
    /// Largest absolute difference between analytic and numeric entries.
    pub max_abs_err: f64,
    /// Entries whose analytic gradient exceeds 1e-6 in magnitude.
    pub live: usize,
    /// Analytic and numeric values at the worst entry.
    pub worst: (f64, f64),
}

/// Batch-mean weighted loss through the adapter, targets held fixed.
pub fn batch_loss(
    x: &Array2<f64>,
    text: &TextBank,
    p: &AdapterParams,
    tau: f64,
    targets: &[Targets],
    objective: &WeightedObjective,
) -> Result<f64> {
    let z = batch_logits(&forward(x, p)?, text, tau)?;
    Ok(objective.batch(&z, targets)?.0)
}

/// Compares `backward` against central differences with the given step.
pub fn check_adapter_gradient(
    x: &Array2<f64>,
    text: &TextBank,
    p: &AdapterParams,
    tau: f64,
    targets: &[Targets],
    step: f64,
) -> Result<GradCheck> {
    let objective = WeightedObjective::default();
    let z = batch_logits(&forward(x, p)?, text, tau)?;
    let (_, logit_grads) = objective.batch(&z, targets)?;
    let g = backward(x, text, p, tau, &logit_grads)?;

    let mut out = GradCheck {
        max_rel_err: 0.0,
        norm_rel_err: 0.0,
        max_abs_err: 0.0,
        live: 0,
        worst: (0.0, 0.0),
    };
    let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
    for layer in 0..2 {
        let (analytic, dim) = if layer == 0 {
            (&g.w1, p.w1.dim())
        } else {
            (&g.w2, p.w2.dim())
        };
        for i in 0..dim.0 {
            for j in 0..dim.1 {
                let mut plus = p.clone();
                let mut minus = p.clone();
                if layer == 0 {
                    plus.w1[[i, j]] += step;
                    minus.w1[[i, j]] -= step;
                } else {
                    plus.w2[[i, j]] += step;
                    minus.w2[[i, j]] -= step;
                }
                let lp = batch_loss(x, text, &plus, tau, targets, &objective)?;
                let lm = batch_loss(x, text, &minus, tau, targets, &objective)?;
                let numeric = (lp - lm) / (2.0 * step);
                let a = analytic[[i, j]];
                diff_sq += (a - numeric) * (a - numeric);
                a_sq += a * a;
                n_sq += numeric * numeric;
                out.max_abs_err = out.max_abs_err.max((a - numeric).abs());
                let err = relative_error(a, numeric);
                if err > out.max_rel_err {
                    out.max_rel_err = err;
                    out.worst = (a, numeric);
                }
                if a.abs() > 1e-6 {
                    out.live += 1;
                }
            }
        }
    }
    out.norm_rel_err = diff_sq.sqrt() / (a_sq.sqrt() + n_sq.sqrt()).max(1e-8);
    Ok(out)
}
