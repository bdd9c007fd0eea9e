//! Fine-tuning loop, evaluation and noise-ratio sweeps.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adapter::{
    backward_from, batch_logits, forward, forward_pass, init_params, optimizer_step,
    AdapterConfig, AdapterParams, TextBank, DEFAULT_EPOCHS, DEFAULT_HIDDEN_RATIO, DEFAULT_LAMBDA,
    DEFAULT_LR, DEFAULT_TAU, DEFAULT_WEIGHT_DECAY,
};
use crate::embedding_store::{
    generate_synthetic, inject_noise, EmbeddingMatrix, FewShotDataset, NoiseSpec, SynthSpec,
};
use crate::error::{CrofError, Result};
use crate::label_weighting::{
    weightings, TargetWeighting, Targets, WeightParams, WeightingArgs, DEFAULT_ALPHA,
    DEFAULT_BETA, DEFAULT_GAMMA, DEFAULT_TOP_K,
};
use crate::objective::{base_losses, WeightedObjective};

pub const DEFAULT_BATCH_SIZE: usize = 16;

/// Ablation switches: fused prompts, adapter fine-tuning, label weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Toggles {
    pub use_tpg: bool,
    pub use_ft: bool,
    pub use_wt: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self::ALL
    }
}

impl Toggles {
    pub const ALL: Toggles = Toggles {
        use_tpg: true,
        use_ft: true,
        use_wt: true,
    };
    pub const NONE: Toggles = Toggles {
        use_tpg: false,
        use_ft: false,
        use_wt: false,
    };
}

impl fmt::Display for Toggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.use_tpg, "tpg"), (self.use_ft, "ft"), (self.use_wt, "wt")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for Toggles {
    type Err = CrofError;

    /// Parses `none` or a `+`-joined subset of `tpg`, `ft`, `wt`.
    fn from_str(s: &str) -> Result<Self> {
        let mut t = Toggles::NONE;
        let s = s.trim();
        if s == "none" {
            return Ok(t);
        }
        for part in s.split('+') {
            match part.trim() {
                "tpg" => t.use_tpg = true,
                "ft" => t.use_ft = true,
                "wt" => t.use_wt = true,
                other => {
                    return Err(CrofError::Config(format!(
                        "unknown toggle `{other}` (expected tpg, ft, wt or none)"
                    )))
                }
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub top_k: usize,
    pub tau: f64,
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden_ratio: usize,
    pub epochs: usize,
    /// Samples per optimizer step; 0 means the full train split.
    pub batch_size: usize,
    pub seed: u64,
    pub toggles: Toggles,
    /// Weighting strategy used when `use_wt` is on.
    pub weighting: String,
    pub base_loss: String,
    pub noise: NoiseSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            top_k: DEFAULT_TOP_K,
            tau: DEFAULT_TAU,
            lambda: DEFAULT_LAMBDA,
            lr: DEFAULT_LR,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            hidden_ratio: DEFAULT_HIDDEN_RATIO,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            toggles: Toggles::default(),
            weighting: "topk".into(),
            base_loss: "ce".into(),
            noise: NoiseSpec::clean(),
        }
    }
}

impl TrainConfig {
    pub fn weight_params(&self) -> WeightParams {
        WeightParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn adapter_config(&self) -> AdapterConfig {
        AdapterConfig {
            hidden_ratio: self.hidden_ratio,
            lambda: self.lambda,
            tau: self.tau,
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    /// The strategy actually used: `onehot` when weighting is toggled off.
    pub fn weighting_name(&self) -> &str {
        if self.toggles.use_wt {
            &self.weighting
        } else {
            "onehot"
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weight_params().validate()?;
        if self.top_k == 0 {
            return Err(CrofError::Config("top_k must be >= 1".into()));
        }
        self.adapter_config().validate()?;
        self.noise.validate()?;
        weightings().build(&self.weighting, &self.weighting_args())?;
        base_losses().build(&self.base_loss, &())?;
        Ok(())
    }

    fn weighting_args(&self) -> WeightingArgs {
        WeightingArgs {
            params: self.weight_params(),
            k: self.top_k,
        }
    }

    fn build_weighting(&self) -> Result<Box<dyn TargetWeighting>> {
        weightings().build(self.weighting_name(), &self.weighting_args())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    /// Percent, in `[0, 100]`.
    pub accuracy: f64,
    pub loss: f64,
}

/// One row per epoch (epoch 0 is before any update): test accuracy against
/// clean labels and the mean training objective.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub rows: Vec<MetricRow>,
}

impl Metrics {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().map(|r| r.accuracy)
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.accuracy).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,accuracy,loss\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.split, r.accuracy, r.loss));
        }
        out
    }
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn logits_for(
    x: &Array2<f64>,
    text: &TextBank,
    params: Option<&AdapterParams>,
    tau: f64,
) -> Result<Array2<f64>> {
    match params {
        Some(p) => batch_logits(&forward(x, p)?, text, tau),
        None => batch_logits(x, text, tau),
    }
}

fn accuracy_of(z: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = z
        .axis_iter(Axis(0))
        .zip(labels)
        .filter(|(row, &y)| argmax(*row) == y)
        .count();
    100.0 * hits as f64 / labels.len() as f64
}

/// Top-1 accuracy (percent) of the argmax cosine, through the adapter when
/// `params` is given.
pub fn evaluate(
    images: &EmbeddingMatrix,
    labels: &[usize],
    text: &EmbeddingMatrix,
    params: Option<&AdapterParams>,
    tau: f64,
) -> Result<f64> {
    if labels.len() != images.rows() {
        return Err(CrofError::Length(format!(
            "{} labels for {} images",
            labels.len(),
            images.rows()
        )));
    }
    let text = TextBank::from_matrix(text)?;
    let z = logits_for(&images.to_array(), &text, params, tau)?;
    Ok(accuracy_of(&z, labels))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AdapterParams,
    pub metrics: Metrics,
}

struct Session<'a> {
    cfg: &'a TrainConfig,
    text: TextBank,
    weighting: Box<dyn TargetWeighting>,
    objective: WeightedObjective,
    x_train: Array2<f64>,
    y_noisy: Vec<usize>,
    x_test: Array2<f64>,
    y_test: Vec<usize>,
}

impl Session<'_> {
    fn targets(
        &self,
        z: &Array2<f64>,
        labels: &[usize],
        observer: &mut dyn FnMut(&Targets),
    ) -> Result<Vec<Targets>> {
        let n = self.text.n_classes();
        z.axis_iter(Axis(0))
            .zip(labels)
            .map(|(row, &y)| {
                let row = row.to_vec();
                let t = self.weighting.targets(&row, y)?;
                t.validate(n)?;
                observer(&t);
                Ok(t)
            })
            .collect()
    }

    fn eval_row(
        &self,
        epoch: usize,
        params: Option<&AdapterParams>,
        observer: &mut dyn FnMut(&Targets),
    ) -> Result<MetricRow> {
        let tau = self.cfg.tau;
        let z_train = logits_for(&self.x_train, &self.text, params, tau)?;
        let targets = self.targets(&z_train, &self.y_noisy, observer)?;
        let (loss, _) = self.objective.batch(&z_train, &targets)?;
        let z_test = logits_for(&self.x_test, &self.text, params, tau)?;
        Ok(MetricRow {
            epoch,
            split: Split::Test,
            accuracy: accuracy_of(&z_test, &self.y_test),
            loss,
        })
    }
}

/// Fine-tunes the adapter on the noisy train labels.
///
/// `text_fused` is used when `use_tpg` is on, `text_plain` otherwise. With
/// `use_ft` off nothing is trained and the single metrics row is the
/// zero-shot (adapter-free) evaluation.
pub fn train(
    ds: &FewShotDataset,
    text_fused: Option<&EmbeddingMatrix>,
    text_plain: &EmbeddingMatrix,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(ds, text_fused, text_plain, cfg, &mut |_| {})
}

/// `train`, calling `observer` on every soft-target set it builds.
pub fn train_observed(
    ds: &FewShotDataset,
    text_fused: Option<&EmbeddingMatrix>,
    text_plain: &EmbeddingMatrix,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Targets),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let text = if cfg.toggles.use_tpg {
        text_fused.ok_or_else(|| {
            CrofError::Config("prompt fusion is on but no fused text embeddings were given".into())
        })?
    } else {
        text_plain
    };
    if text.rows() != ds.n_classes() || text.dims() != ds.images().dims() {
        return Err(CrofError::Shape(format!(
            "text embeddings are {}x{}, dataset has {} classes of {} dims",
            text.rows(),
            text.dims(),
            ds.n_classes(),
            ds.images().dims()
        )));
    }

    let train_rows = ds.train_range();
    let session = Session {
        cfg,
        text: TextBank::from_matrix(text)?,
        weighting: cfg.build_weighting()?,
        objective: WeightedObjective::from_name(&cfg.base_loss)?,
        x_train: ds.train_images()?.to_array(),
        y_noisy: ds.noisy_labels()[train_rows].to_vec(),
        x_test: ds.test_images()?.to_array(),
        y_test: ds.clean_labels()[ds.test_range()].to_vec(),
    };

    let adapter_cfg = cfg.adapter_config();
    let mut params = init_params(ds.images().dims(), &adapter_cfg)?;
    let mut metrics = Metrics::default();

    if !cfg.toggles.use_ft {
        metrics.rows.push(session.eval_row(0, None, observer)?);
        return Ok(TrainOutcome { params, metrics });
    }

    metrics.rows.push(session.eval_row(0, Some(&params), observer)?);
    let n_train = session.x_train.nrows();
    let batch = if cfg.batch_size == 0 || cfg.batch_size >= n_train {
        n_train.max(1)
    } else {
        cfg.batch_size
    };
    let batches_per_epoch = n_train.div_ceil(batch) as u64;
    let total_steps = cfg.epochs as u64 * batches_per_epoch;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut step = 0u64;

    for epoch in 1..=cfg.epochs {
        if batch < n_train {
            order.shuffle(&mut shuffle_rng);
        }
        for chunk in order.chunks(batch) {
            let xb = session.x_train.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| session.y_noisy[i]).collect();
            let fwd = forward_pass(&xb, &params)?;
            let z = batch_logits(&fwd.out, &session.text, cfg.tau)?;
            let targets = session.targets(&z, &yb, observer)?;
            let (_, logit_grads) = session.objective.batch(&z, &targets)?;
            let grads = backward_from(&xb, &fwd, &session.text, &params, cfg.tau, &logit_grads)?;
            optimizer_step(&mut params, &grads, step, total_steps, &adapter_cfg)?;
            step += 1;
        }
        let row = session.eval_row(epoch, Some(&params), observer)?;
        log::debug!("epoch {epoch}: accuracy {:.2}, loss {:.4}", row.accuracy, row.loss);
        metrics.rows.push(row);
    }

    Ok(TrainOutcome { params, metrics })
}

/// Where each sweep cell gets its clean data from.
#[derive(Debug, Clone)]
pub enum SweepData {
    /// One dataset shared by every cell.
    Fixed {
        dataset: FewShotDataset,
        text_plain: EmbeddingMatrix,
        text_fused: Option<EmbeddingMatrix>,
    },
    /// A fresh synthetic dataset per cell seed (`spec.seed` is replaced).
    /// The prototypes serve as the plain text embeddings; there is no fused set.
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub toggles: Toggles,
    pub seed: u64,
    pub final_acc: f64,
    pub best_acc: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("delta,toggles,seed,final_acc,best_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.delta, r.toggles, r.seed, r.final_acc, r.best_acc
        ));
    }
    out
}

fn run_cell(
    base: &TrainConfig,
    data: &SweepData,
    delta: f64,
    toggles: Toggles,
    seed: u64,
) -> Result<SweepRow> {
    let noise = NoiseSpec::new(base.noise.kind.clone(), delta, seed);
    let cfg = TrainConfig {
        seed,
        toggles,
        noise: noise.clone(),
        ..base.clone()
    };
    let outcome = match data {
        SweepData::Fixed {
            dataset,
            text_plain,
            text_fused,
        } => {
            let noisy = inject_noise(dataset, &noise)?;
            train(&noisy, text_fused.as_ref(), text_plain, &cfg)?
        }
        SweepData::Synthetic(spec) => {
            let (ds, protos) = generate_synthetic(&SynthSpec { seed, ..*spec })?;
            let noisy = inject_noise(&ds, &noise)?;
            train(&noisy, None, &protos, &cfg)?
        }
    };
    let m = &outcome.metrics;
    Ok(SweepRow {
        delta,
        toggles,
        seed,
        final_acc: m.final_accuracy().unwrap_or(0.0),
        best_acc: m.best_accuracy().unwrap_or(0.0),
    })
}

/// Trains every `(delta, toggles, seed)` cell. Cells run in parallel; rows
/// come back in `deltas x toggle_sets x seeds` order.
pub fn sweep(
    base: &TrainConfig,
    data: &SweepData,
    deltas: &[f64],
    toggle_sets: &[Toggles],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    base.validate()?;
    for &d in deltas {
        NoiseSpec::new(base.noise.kind.clone(), d, 0).validate()?;
    }
    let cells: Vec<(f64, Toggles, u64)> = deltas
        .iter()
        .flat_map(|&d| {
            toggle_sets
                .iter()
                .flat_map(move |&t| seeds.iter().map(move |&s| (d, t, s)))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(d, t, s)| {
            let row = run_cell(base, data, d, t, s)?;
            log::debug!("sweep cell delta={d} toggles={t} seed={s}: {:.2}", row.final_acc);
            Ok(row)
        })
        .collect()
}
