//! Weighted multi-label objective.
//!
//! A sample with soft targets `{(c_k, w_k)}` contributes
//! `sum_k w_k * base(z, c_k)`. The base loss is pluggable; the shipped one is
//! cross-entropy, for which the logit gradient is `p - sum_k w_k onehot(c_k)`.

use std::sync::LazyLock;

use ndarray::{Array1, Array2, ArrayView1};

use crate::adapter::{ce_loss, probabilities};
use crate::error::{CrofError, Result};
use crate::label_weighting::Targets;
use crate::registry::Registry;

/// A per-sample loss on a single hard label, differentiable in the logits.
pub trait BaseLoss: Send + Sync {
    fn name(&self) -> &'static str;

    fn loss(&self, z: ArrayView1<f64>, class: usize) -> f64;

    /// Adds `scale * d loss(z, class) / dz` to `grad`.
    fn accumulate_grad(&self, z: ArrayView1<f64>, class: usize, scale: f64, grad: &mut Array1<f64>);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CrossEntropy;

impl BaseLoss for CrossEntropy {
    fn name(&self) -> &'static str {
        "ce"
    }

    fn loss(&self, z: ArrayView1<f64>, class: usize) -> f64 {
        ce_loss(z, class)
    }

    fn accumulate_grad(&self, z: ArrayView1<f64>, class: usize, scale: f64, grad: &mut Array1<f64>) {
        let p = probabilities(z);
        for (i, (g, pi)) in grad.iter_mut().zip(p.iter()).enumerate() {
            let y = if i == class { 1.0 } else { 0.0 };
            *g += scale * (pi - y);
        }
    }
}

pub type LossRegistry = Registry<dyn BaseLoss>;

static BASE_LOSSES: LazyLock<LossRegistry> =
    LazyLock::new(|| LossRegistry::new("base loss").with("ce", |_| Box::new(CrossEntropy)));

pub fn base_losses() -> &'static LossRegistry {
    &BASE_LOSSES
}

/// Logits of one sample together with its soft targets.
#[derive(Debug, Clone, Copy)]
pub struct SampleObjective<'a> {
    pub z: ArrayView1<'a, f64>,
    pub targets: &'a Targets,
}

impl<'a> SampleObjective<'a> {
    pub fn new(z: ArrayView1<'a, f64>, targets: &'a Targets) -> Result<Self> {
        targets.validate(z.len())?;
        Ok(Self { z, targets })
    }
}

pub struct WeightedObjective {
    base: Box<dyn BaseLoss>,
}

impl std::fmt::Debug for WeightedObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightedObjective")
            .field("base", &self.base.name())
            .finish()
    }
}

impl Default for WeightedObjective {
    fn default() -> Self {
        Self::new(Box::new(CrossEntropy))
    }
}

impl WeightedObjective {
    pub fn new(base: Box<dyn BaseLoss>) -> Self {
        Self { base }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        base_losses().build(name, &()).map(Self::new)
    }

    pub fn base(&self) -> &dyn BaseLoss {
        self.base.as_ref()
    }

    /// `sum_k w_k * base(z, c_k)`, skipping zero weights.
    pub fn loss(&self, so: &SampleObjective) -> f64 {
        let mut total = 0.0;
        for (&c, &w) in so.targets.candidates.iter().zip(&so.targets.weights) {
            if w != 0.0 {
                total += w * self.base.loss(so.z, c);
            }
        }
        total
    }

    pub fn gradient(&self, so: &SampleObjective) -> Array1<f64> {
        let mut grad = Array1::zeros(so.z.len());
        for (&c, &w) in so.targets.candidates.iter().zip(&so.targets.weights) {
            if w != 0.0 {
                self.base.accumulate_grad(so.z, c, w, &mut grad);
            }
        }
        grad
    }

    /// Batch-mean loss and the per-sample (unscaled) logit gradients.
    pub fn batch(&self, z: &Array2<f64>, targets: &[Targets]) -> Result<(f64, Array2<f64>)> {
        if z.nrows() != targets.len() {
            return Err(CrofError::Shape(format!(
                "{} logit rows for {} target sets",
                z.nrows(),
                targets.len()
            )));
        }
        let mut grads = Array2::zeros(z.dim());
        let mut total = 0.0;
        for (b, t) in targets.iter().enumerate() {
            let so = SampleObjective::new(z.row(b), t)?;
            total += self.loss(&so);
            grads.row_mut(b).assign(&self.gradient(&so));
        }
        let mean = if targets.is_empty() {
            0.0
        } else {
            total / targets.len() as f64
        };
        Ok((mean, grads))
    }
}

/// Weighted cross-entropy of one sample.
pub fn weighted_loss(so: &SampleObjective) -> f64 {
    WeightedObjective::default().loss(so)
}

/// `p - sum_k w_k onehot(c_k)`.
pub fn logit_gradient(so: &SampleObjective) -> Array1<f64> {
    WeightedObjective::default().gradient(so)
}

/// Cross-entropy on a single hard label and its logit gradient.
pub fn plain_ce(z: ArrayView1<f64>, label: usize) -> Result<(f64, Array1<f64>)> {
    if label >= z.len() {
        return Err(CrofError::Index(format!(
            "label {label} out of range for {} classes",
            z.len()
        )));
    }
    let mut grad = Array1::zeros(z.len());
    CrossEntropy.accumulate_grad(z, label, 1.0, &mut grad);
    Ok((CrossEntropy.loss(z, label), grad))
}
