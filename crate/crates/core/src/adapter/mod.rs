//! Residual two-layer adapter over frozen image features.
//!
//! ```text
//! X* = (1 - lambda) X + lambda * ReLU(X W1) W2
//! z_i = cos(X*, e_i) / tau
//! p   = softmax(z)
//! ```
//!
//! Everything downstream of the cosine stays in the logit domain; `exp(z)` is
//! never formed on its own because `tau` is small (logit scale ~100).

mod io;
mod optim;

pub use io::{load_params, save_params};
pub use optim::{cosine_lr, optimizer_step, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding_store::EmbeddingMatrix;
use crate::error::{CrofError, Result};

pub const DEFAULT_HIDDEN_RATIO: usize = 4;
pub const DEFAULT_LAMBDA: f64 = 0.2;
pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-2;
pub const DEFAULT_EPOCHS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    /// Hidden width is `max(1, dims / hidden_ratio)`.
    pub hidden_ratio: usize,
    pub lambda: f64,
    pub tau: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            hidden_ratio: DEFAULT_HIDDEN_RATIO,
            lambda: DEFAULT_LAMBDA,
            tau: DEFAULT_TAU,
            lr: DEFAULT_LR,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_ratio == 0 {
            return Err(CrofError::Config("hidden_ratio must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(CrofError::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(CrofError::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CrofError::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(CrofError::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn hidden_width(&self, dims: usize) -> usize {
        (dims / self.hidden_ratio.max(1)).max(1)
    }
}

/// First and second AdamW moments for one weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
}

impl Moments {
    fn zeros(shape: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    /// `dims x hidden`
    pub w1: Array2<f64>,
    /// `hidden x dims`
    pub w2: Array2<f64>,
    lambda: f64,
    pub(crate) moments1: Moments,
    pub(crate) moments2: Moments,
    step: u64,
}

impl AdapterParams {
    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>, lambda: f64) -> Result<Self> {
        let (d, h) = w1.dim();
        if w2.dim() != (h, d) {
            return Err(CrofError::Shape(format!(
                "W1 is {d}x{h} but W2 is {}x{}",
                w2.nrows(),
                w2.ncols()
            )));
        }
        if h == 0 {
            return Err(CrofError::Shape("hidden width must be >= 1".into()));
        }
        if w1.iter().chain(w2.iter()).any(|v| !v.is_finite()) {
            return Err(CrofError::Value("adapter weights must be finite".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(CrofError::Config(format!("lambda {lambda} outside [0, 1]")));
        }
        Ok(Self {
            moments1: Moments::zeros((d, h)),
            moments2: Moments::zeros((h, d)),
            w1,
            w2,
            lambda,
            step: 0,
        })
    }

    pub fn dims(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` init, W1 drawn before W2.
pub fn init_params(dims: usize, cfg: &AdapterConfig) -> Result<AdapterParams> {
    cfg.validate()?;
    if dims < 1 {
        return Err(CrofError::Shape("dims must be >= 1".into()));
    }
    let h = cfg.hidden_width(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b1 = 1.0 / (dims as f64).sqrt();
    let w1 = Array2::from_shape_simple_fn((dims, h), || rng.random_range(-b1..=b1));
    let b2 = 1.0 / (h as f64).sqrt();
    let w2 = Array2::from_shape_simple_fn((h, dims), || rng.random_range(-b2..=b2));
    AdapterParams::from_weights(w1, w2, cfg.lambda)
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `X W1`
    pub pre: Array2<f64>,
    /// `ReLU(X W1)`
    pub hidden: Array2<f64>,
    /// `X*`
    pub out: Array2<f64>,
}

fn check_dims(x: &Array2<f64>, p: &AdapterParams) -> Result<()> {
    if x.ncols() != p.dims() {
        return Err(CrofError::Shape(format!(
            "features have {} dims, adapter expects {}",
            x.ncols(),
            p.dims()
        )));
    }
    Ok(())
}

pub fn forward_pass(x: &Array2<f64>, p: &AdapterParams) -> Result<ForwardPass> {
    check_dims(x, p)?;
    let pre = x.dot(&p.w1);
    let hidden = pre.mapv(|v| v.max(0.0));
    let branch = hidden.dot(&p.w2);
    let lambda = p.lambda;
    let out = if lambda == 0.0 {
        x.clone()
    } else {
        x * (1.0 - lambda) + &(branch * lambda)
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(CrofError::Value("adapter output is not finite".into()));
    }
    Ok(ForwardPass { pre, hidden, out })
}

pub fn forward(x: &Array2<f64>, p: &AdapterParams) -> Result<Array2<f64>> {
    forward_pass(x, p).map(|f| f.out)
}

/// Class text embeddings with rows renormalized in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextBank {
    rows: Array2<f64>,
}

impl TextBank {
    pub fn from_matrix(m: &EmbeddingMatrix) -> Result<Self> {
        Self::from_array(m.to_array())
    }

    pub fn from_array(mut rows: Array2<f64>) -> Result<Self> {
        for (i, mut row) in rows.rows_mut().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if n < 1e-12 {
                return Err(CrofError::Value(format!("text embedding {i} has zero norm")));
            }
            row.mapv_inplace(|v| v / n);
        }
        Ok(Self { rows })
    }

    pub fn n_classes(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dims(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }
}

/// `z_i = cos(x_star, e_i) / tau`.
pub fn similarities(x_star: ArrayView1<f64>, text: &TextBank, tau: f64) -> Result<Array1<f64>> {
    if x_star.len() != text.dims() {
        return Err(CrofError::Shape(format!(
            "feature has {} dims, text has {}",
            x_star.len(),
            text.dims()
        )));
    }
    let norm = x_star.dot(&x_star).sqrt();
    if norm.is_nan() || norm <= 1e-12 {
        return Err(CrofError::DegenerateFeature { row: 0 });
    }
    Ok(text.rows.dot(&x_star) / (norm * tau))
}

/// Row-wise `similarities` over a batch of adapted features.
pub fn batch_logits(x_star: &Array2<f64>, text: &TextBank, tau: f64) -> Result<Array2<f64>> {
    if x_star.ncols() != text.dims() {
        return Err(CrofError::Shape(format!(
            "features have {} dims, text has {}",
            x_star.ncols(),
            text.dims()
        )));
    }
    let mut z = x_star.dot(&text.rows.t());
    for (b, mut row) in z.rows_mut().into_iter().enumerate() {
        let x = x_star.row(b);
        let norm = x.dot(&x).sqrt();
        if norm.is_nan() || norm <= 1e-12 {
            return Err(CrofError::DegenerateFeature { row: b });
        }
        let scale = norm * tau;
        row.mapv_inplace(|v| v / scale);
    }
    Ok(z)
}

pub fn log_sum_exp(z: ArrayView1<f64>) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax.
pub fn probabilities(z: ArrayView1<f64>) -> Array1<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// `-log p_label` evaluated as `logsumexp(z) - z_label`.
pub fn ce_loss(z: ArrayView1<f64>, label: usize) -> f64 {
    log_sum_exp(z) - z[label]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl AdapterGrads {
    pub fn zeros_like(p: &AdapterParams) -> Self {
        Self {
            w1: Array2::zeros(p.w1.dim()),
            w2: Array2::zeros(p.w2.dim()),
        }
    }
}

/// Gradients of the batch-mean loss w.r.t. W1 and W2, given per-sample
/// gradients of the loss w.r.t. the logits (`batch x n_classes`).
///
/// The cosine normalizes `X*`, so the chain passes through the projection
/// `(I - u u^T) / |X*|` with `u = X* / |X*|`.
pub fn backward(
    x: &Array2<f64>,
    text: &TextBank,
    p: &AdapterParams,
    tau: f64,
    logit_grads: &Array2<f64>,
) -> Result<AdapterGrads> {
    let fwd = forward_pass(x, p)?;
    backward_from(x, &fwd, text, p, tau, logit_grads)
}

/// `backward` reusing an existing forward pass.
pub fn backward_from(
    x: &Array2<f64>,
    fwd: &ForwardPass,
    text: &TextBank,
    p: &AdapterParams,
    tau: f64,
    logit_grads: &Array2<f64>,
) -> Result<AdapterGrads> {
    check_dims(x, p)?;
    let batch = x.nrows();
    if logit_grads.dim() != (batch, text.n_classes()) {
        return Err(CrofError::Shape(format!(
            "logit gradients are {}x{}, expected {batch}x{}",
            logit_grads.nrows(),
            logit_grads.ncols(),
            text.n_classes()
        )));
    }
    if text.dims() != p.dims() {
        return Err(CrofError::Shape(format!(
            "text has {} dims, adapter expects {}",
            text.dims(),
            p.dims()
        )));
    }
    if batch == 0 || p.lambda == 0.0 {
        return Ok(AdapterGrads::zeros_like(p));
    }

    // dL/du for u = X*/|X*|
    let mut g_out = logit_grads.dot(&text.rows) / tau;
    for (b, mut g) in g_out.axis_iter_mut(Axis(0)).enumerate() {
        let y = fwd.out.row(b);
        let norm = y.dot(&y).sqrt();
        if norm.is_nan() || norm <= 1e-12 {
            return Err(CrofError::DegenerateFeature { row: b });
        }
        let radial = y.dot(&g) / norm;
        g.zip_mut_with(&y, |gi, &yi| *gi = (*gi - radial * yi / norm) / norm);
    }

    let g_branch = g_out * (p.lambda / batch as f64);
    let w2 = fwd.hidden.t().dot(&g_branch);
    let mut g_pre = g_branch.dot(&p.w2.t());
    g_pre.zip_mut_with(&fwd.pre, |g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = x.t().dot(&g_pre);
    Ok(AdapterGrads { w1, w2 })
}
