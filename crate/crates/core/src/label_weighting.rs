//! Top-K multiple-label weighting.
//!
//! Given a sample's logits and its (possibly wrong) annotated label, the
//! classes are ranked by similarity and the annotated label's 1-based rank
//! `r` selects one of three weightings over the top-K candidates:
//!
//! * `r = 1`: one-hot on the annotated label.
//! * `1 < r <= K`: the annotated label keeps `a = alpha * gamma^(r-2)`, the
//!   top-1 class gets `(1 - a) * beta`, and the remaining candidates split
//!   `(1 - a) * (1 - beta)` in proportion to their similarity gap to top-1.
//! * `r > K`: the annotated label is dropped, the top-1 class gets `beta` and
//!   the other `K - 1` candidates split `1 - beta` by similarity gap.
//!
//! Raw weights are then reweighted by similarity, `w*_i ∝ s_i * w_i` with
//! `s_i = exp(z_i)`. All similarity arithmetic is done relative to the top-1
//! logit so that `exp` never overflows at small temperatures.

use std::sync::LazyLock;

use crate::error::{CrofError, Result};
use crate::registry::Registry;

pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 0.8;
pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_TOP_K: usize = 3;

/// Tolerance for the simplex checks on weight vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Classes sorted by descending logit, with the annotated label's rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSimilarities {
    order: Vec<usize>,
    logits: Vec<f64>,
    rank: usize,
    k: usize,
}

impl RankedSimilarities {
    /// Class indices, best first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Logits in `order`, non-increasing.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// 1-based rank of the annotated label.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_classes(&self) -> usize {
        self.order.len()
    }

    pub fn original(&self) -> usize {
        self.order[self.rank - 1]
    }

    pub fn scenario(&self) -> Scenario {
        if self.rank == 1 {
            Scenario::OneHot
        } else if self.rank <= self.k {
            Scenario::InTopK
        } else {
            Scenario::OutsideTopK
        }
    }

    /// `(s_1 - s_i) / s_1`, accurate when the gap is tiny.
    fn relative_gap(&self, i: usize) -> f64 {
        -(self.logits[i] - self.logits[0]).exp_m1()
    }
}

/// Which weighting rule applies, by the annotated label's rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Rank 1.
    OneHot,
    /// Rank in `2..=K`.
    InTopK,
    /// Rank beyond `K`; the annotated label is discarded.
    OutsideTopK,
}

impl Scenario {
    pub fn id(self) -> u8 {
        match self {
            Scenario::OneHot => 1,
            Scenario::InTopK => 2,
            Scenario::OutsideTopK => 3,
        }
    }
}

/// Ranks all classes by descending logit. Ties keep index order, except that
/// the annotated label goes first among the classes it ties with. `k` is
/// clamped to the number of classes.
pub fn rank_original(z: &[f64], original: usize, k: usize) -> Result<RankedSimilarities> {
    let n = z.len();
    if original >= n {
        return Err(CrofError::Index(format!(
            "label {original} out of range for {n} classes"
        )));
    }
    if k == 0 {
        return Err(CrofError::Config("top-K must be >= 1".into()));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(CrofError::Value(format!("logit {i} is not finite")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        // finite, so partial_cmp is total; and -0.0 ties with 0.0
        z[b].partial_cmp(&z[a])
            .expect("finite logits")
            .then_with(|| (a != original).cmp(&(b != original)))
            .then_with(|| a.cmp(&b))
    });
    let rank = order.iter().position(|&c| c == original).unwrap() + 1;
    let logits = order.iter().map(|&c| z[c]).collect();
    Ok(RankedSimilarities {
        order,
        logits,
        rank,
        k: k.min(n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    /// Loyalty to the annotated label.
    pub alpha: f64,
    /// Confidence in the top-1 class.
    pub beta: f64,
    /// Per-rank decay of the annotated label's weight.
    pub gamma: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl WeightParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self { alpha, beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CrofError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Weight kept by an annotated label at rank `r >= 2`.
    pub fn loyalty(&self, rank: usize) -> f64 {
        self.alpha * self.gamma.powi(rank as i32 - 2)
    }
}

/// Weights over the top-K candidates, in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub candidates: Vec<usize>,
    /// Raw scenario weights.
    pub w: Vec<f64>,
    /// Similarity-normalized weights; `None` until `normalize_weights`.
    pub w_star: Option<Vec<f64>>,
    pub scenario: Scenario,
}

fn check_simplex(w: &[f64], what: &str) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(CrofError::Invariant(format!("{what} sums to {sum}")));
    }
    if let Some(v) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CrofError::Invariant(format!("{what} has component {v} outside [0, 1]")));
    }
    Ok(())
}

impl WeightVector {
    pub fn validate(&self) -> Result<()> {
        check_simplex(&self.w, "raw weight vector")?;
        if let Some(ws) = &self.w_star {
            check_simplex(ws, "normalized weight vector")?;
        }
        Ok(())
    }
}

/// Splits `mass` over sorted positions `set` in proportion to their gap to
/// the top-1 similarity. All-zero gaps fall back to a uniform split.
fn share_by_gap(rs: &RankedSimilarities, set: &[usize], mass: f64, w: &mut [f64]) {
    if set.is_empty() {
        return;
    }
    let gaps: Vec<f64> = set.iter().map(|&i| rs.relative_gap(i)).collect();
    let total: f64 = gaps.iter().sum();
    if total > 0.0 {
        for (&i, g) in set.iter().zip(&gaps) {
            w[i] = mass * g / total;
        }
    } else {
        let each = mass / set.len() as f64;
        for &i in set {
            w[i] = each;
        }
    }
}

/// Raw scenario weights over the top-K candidates.
///
/// When the leftover set is empty (`K = 2` with the label at rank 2, or
/// `K = 1` with the label outside the top-1) its mass goes to the top-1
/// class, keeping the weights on the simplex.
pub fn compute_weights(rs: &RankedSimilarities, params: &WeightParams) -> Result<WeightVector> {
    params.validate()?;
    let k = rs.k;
    let candidates = rs.order[..k].to_vec();
    let mut w = vec![0.0; k];
    let scenario = rs.scenario();
    match scenario {
        Scenario::OneHot => w[0] = 1.0,
        Scenario::InTopK => {
            let r = rs.rank - 1;
            let loyal = params.loyalty(rs.rank);
            w[r] = loyal;
            let rest: Vec<usize> = (1..k).filter(|&i| i != r).collect();
            if rest.is_empty() {
                w[0] = 1.0 - loyal;
            } else {
                w[0] = (1.0 - loyal) * params.beta;
                share_by_gap(rs, &rest, (1.0 - loyal) * (1.0 - params.beta), &mut w);
            }
        }
        Scenario::OutsideTopK => {
            let rest: Vec<usize> = (1..k).collect();
            if rest.is_empty() {
                w[0] = 1.0;
            } else {
                w[0] = params.beta;
                share_by_gap(rs, &rest, 1.0 - params.beta, &mut w);
            }
        }
    }
    Ok(WeightVector {
        candidates,
        w,
        w_star: None,
        scenario,
    })
}

/// `w*_i = s_i w_i / sum_j s_j w_j`, evaluated as a softmax over
/// `(z_i - z_1) + ln w_i` on the positive weights. Zero weights stay zero.
pub fn normalize_weights(wv: &WeightVector, rs: &RankedSimilarities) -> Result<WeightVector> {
    if wv.w.len() != rs.k {
        return Err(CrofError::Shape(format!(
            "{} weights for top-{} ranking",
            wv.w.len(),
            rs.k
        )));
    }
    let scores: Vec<Option<f64>> = wv
        .w
        .iter()
        .enumerate()
        .map(|(i, &w)| (w > 0.0).then(|| (rs.logits[i] - rs.logits[0]) + w.ln()))
        .collect();
    let max = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(CrofError::Invariant("all raw weights are zero".into()));
    }
    let e: Vec<f64> = scores
        .iter()
        .map(|s| s.map_or(0.0, |s| (s - max).exp()))
        .collect();
    let total: f64 = e.iter().sum();
    let mut out = wv.clone();
    out.w_star = Some(e.iter().map(|v| v / total).collect());
    Ok(out)
}

/// Ranks, weights and normalizes one sample.
pub fn weigh_sample(
    z: &[f64],
    original: usize,
    k: usize,
    params: &WeightParams,
) -> Result<(RankedSimilarities, WeightVector)> {
    let rs = rank_original(z, original, k)?;
    let wv = normalize_weights(&compute_weights(&rs, params)?, &rs)?;
    Ok((rs, wv))
}

/// Largest rank `r` at which the annotated label still outweighs the top-1
/// class in the in-top-K scenario, i.e. the largest integer with
/// `r < 2 + ln(beta / (alpha (1 + beta))) / ln(gamma)`.
///
/// Returns 1 when `beta / (alpha (1 + beta)) >= 1`: then no rank beyond the
/// first satisfies the inequality.
pub fn max_trusted_rank(params: &WeightParams) -> Result<usize> {
    params.validate()?;
    let ratio = params.beta / (params.alpha * (1.0 + params.beta));
    if ratio >= 1.0 {
        return Ok(1);
    }
    let bound = 2.0 + ratio.ln() / params.gamma.ln();
    Ok((bound.ceil() as usize).saturating_sub(1).max(1))
}

/// Per-sample soft targets: candidate classes and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub candidates: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Targets {
    pub fn one_hot(label: usize) -> Self {
        Self {
            candidates: vec![label],
            weights: vec![1.0],
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.candidates.len() != self.weights.len() {
            return Err(CrofError::Invariant("candidate/weight length mismatch".into()));
        }
        if let Some(c) = self.candidates.iter().find(|&&c| c >= n_classes) {
            return Err(CrofError::Invariant(format!("candidate {c} >= {n_classes}")));
        }
        check_simplex(&self.weights, "target weights")
    }
}

/// Turns a sample's logits and annotated label into soft targets. The
/// targets are treated as constants when differentiating the loss.
pub trait TargetWeighting: Send + Sync {
    fn name(&self) -> &'static str;
    fn targets(&self, logits: &[f64], label: usize) -> Result<Targets>;
}

/// Trust the annotated label outright (plain cross-entropy training).
#[derive(Debug, Default, Clone, Copy)]
pub struct OneHotWeighting;

impl TargetWeighting for OneHotWeighting {
    fn name(&self) -> &'static str {
        "onehot"
    }

    fn targets(&self, logits: &[f64], label: usize) -> Result<Targets> {
        if label >= logits.len() {
            return Err(CrofError::Index(format!(
                "label {label} out of range for {} classes",
                logits.len()
            )));
        }
        Ok(Targets::one_hot(label))
    }
}

/// Rank-aware top-K weighting with similarity normalization.
#[derive(Debug, Clone, Copy)]
pub struct TopKWeighting {
    pub params: WeightParams,
    pub k: usize,
}

impl TargetWeighting for TopKWeighting {
    fn name(&self) -> &'static str {
        "topk"
    }

    fn targets(&self, logits: &[f64], label: usize) -> Result<Targets> {
        let (_, wv) = weigh_sample(logits, label, self.k, &self.params)?;
        Ok(Targets {
            candidates: wv.candidates,
            weights: wv.w_star.expect("normalized"),
        })
    }
}

/// Construction arguments shared by every weighting strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingArgs {
    pub params: WeightParams,
    pub k: usize,
}

pub type WeightingRegistry = Registry<dyn TargetWeighting, WeightingArgs>;

static WEIGHTINGS: LazyLock<WeightingRegistry> = LazyLock::new(|| {
    WeightingRegistry::new("label weighting")
        .with("onehot", |_| Box::new(OneHotWeighting))
        .with("topk", |a| {
            Box::new(TopKWeighting {
                params: a.params,
                k: a.k,
            })
        })
});

pub fn weightings() -> &'static WeightingRegistry {
    &WEIGHTINGS
}
