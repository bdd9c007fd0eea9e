use std::f64::consts::PI;

use ndarray::{Array2, Zip};

use super::{AdapterConfig, AdapterGrads, AdapterParams, Moments};
use crate::error::{CrofError, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Cosine annealing from `base_lr` at step 0 towards 0 at `total_steps`.
pub fn cosine_lr(base_lr: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    base_lr * 0.5 * (1.0 + (PI * step as f64 / total_steps as f64).cos())
}

fn adamw(
    w: &mut Array2<f64>,
    g: &Array2<f64>,
    mom: &mut Moments,
    lr: f64,
    decay: f64,
    bc1: f64,
    bc2: f64,
) {
    Zip::from(w)
        .and(g)
        .and(&mut mom.m)
        .and(&mut mom.v)
        .for_each(|w, &g, m, v| {
            *w -= lr * decay * *w;
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        });
}

/// One AdamW update with decoupled weight decay at the cosine-scheduled rate
/// for `step` (0-based) out of `total_steps`.
pub fn optimizer_step(
    p: &mut AdapterParams,
    grads: &AdapterGrads,
    step: u64,
    total_steps: u64,
    cfg: &AdapterConfig,
) -> Result<()> {
    if step >= total_steps {
        return Err(CrofError::Config(format!(
            "step {step} is past the schedule of {total_steps} steps"
        )));
    }
    if grads.w1.dim() != p.w1.dim() || grads.w2.dim() != p.w2.dim() {
        return Err(CrofError::Shape("gradient shapes do not match parameters".into()));
    }
    let lr = cosine_lr(cfg.lr, step, total_steps);
    let t = p.step() + 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    adamw(&mut p.w1, &grads.w1, &mut p.moments1, lr, cfg.weight_decay, bc1, bc2);
    adamw(&mut p.w2, &grads.w2, &mut p.moments2, lr, cfg.weight_decay, bc1, bc2);
    p.set_step(t);
    Ok(())
}
