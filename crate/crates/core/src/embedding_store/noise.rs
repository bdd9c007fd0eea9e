//! Label-noise models and per-class noise injection.

use std::sync::LazyLock;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::FewShotDataset;
use crate::error::{CrofError, Result};
use crate::registry::Registry;

/// Picks the corrupted label for a sample whose true class is `clean`.
///
/// Implementations must never return `clean`.
pub trait NoiseModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn corrupt(&self, clean: usize, n_classes: usize, rng: &mut dyn RngCore) -> usize;
}

/// Uniform replacement over the other `n - 1` classes.
#[derive(Debug, Default, Clone, Copy)]
pub struct Symmetric;

impl NoiseModel for Symmetric {
    fn name(&self) -> &'static str {
        "symmetric"
    }

    fn corrupt(&self, clean: usize, n_classes: usize, rng: &mut dyn RngCore) -> usize {
        let draw = rng.random_range(0..n_classes - 1);
        if draw >= clean {
            draw + 1
        } else {
            draw
        }
    }
}

/// Fixed confusion map `c -> (c + 1) mod n`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Asymmetric;

impl NoiseModel for Asymmetric {
    fn name(&self) -> &'static str {
        "asymmetric"
    }

    fn corrupt(&self, clean: usize, n_classes: usize, _rng: &mut dyn RngCore) -> usize {
        (clean + 1) % n_classes
    }
}

pub type NoiseRegistry = Registry<dyn NoiseModel>;

static NOISE_MODELS: LazyLock<NoiseRegistry> = LazyLock::new(|| {
    NoiseRegistry::new("noise model")
        .with("symmetric", |_| Box::new(Symmetric))
        .with("asymmetric", |_| Box::new(Asymmetric))
});

pub fn noise_models() -> &'static NoiseRegistry {
    &NOISE_MODELS
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Registered noise model name.
    pub kind: String,
    pub delta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: impl Into<String>, delta: f64, seed: u64) -> Self {
        Self {
            kind: kind.into(),
            delta,
            seed,
        }
    }

    pub fn clean() -> Self {
        Self::new("symmetric", 0.0, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(CrofError::Config(format!(
                "noise ratio must lie in [0, 1], got {}",
                self.delta
            )));
        }
        noise_models().build(&self.kind, &()).map(|_| ())
    }
}

/// Number of corrupted train samples per class: `floor(delta * shots + 0.5)`.
pub fn corrupted_per_class(delta: f64, shots: usize) -> usize {
    (delta * shots as f64 + 0.5).floor() as usize
}

/// Corrupts exactly `corrupted_per_class(delta, shots)` train labels in every
/// class. Test labels are untouched.
pub fn inject_noise(ds: &FewShotDataset, spec: &NoiseSpec) -> Result<FewShotDataset> {
    spec.validate()?;
    let model = noise_models().build(&spec.kind, &())?;
    let train = ds.train_range();
    if ds.noisy_labels()[train.clone()] != ds.clean_labels()[train.clone()] {
        return Err(CrofError::Invariant(
            "train split already carries noisy labels".into(),
        ));
    }

    let n = ds.n_classes();
    let per_class = corrupted_per_class(spec.delta, ds.shots());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noisy = ds.clean_labels().to_vec();
    for c in 0..n {
        let members: Vec<usize> = train.clone().filter(|&i| ds.clean_labels()[i] == c).collect();
        let mut picked = index::sample(&mut rng, members.len(), per_class).into_vec();
        picked.sort_unstable();
        for p in picked {
            let i = members[p];
            let label = model.corrupt(c, n, &mut rng);
            debug_assert_ne!(label, c);
            noisy[i] = label;
        }
    }
    ds.clone().with_noisy_labels(noisy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_store::synth::{generate_synthetic, SynthSpec};

    fn dataset(n: usize, shots: usize) -> FewShotDataset {
        generate_synthetic(&SynthSpec {
            n_classes: n,
            dims: 4,
            shots,
            test_per_class: 2,
            sigma: 0.1,
            seed: 3,
        })
        .unwrap()
        .0
    }

    fn corrupted_counts(ds: &FewShotDataset) -> Vec<usize> {
        let mut counts = vec![0; ds.n_classes()];
        for i in ds.train_range() {
            if ds.noisy_labels()[i] != ds.clean_labels()[i] {
                counts[ds.clean_labels()[i]] += 1;
            }
        }
        counts
    }

    #[test]
    fn zero_delta_is_identity() {
        let ds = dataset(4, 5);
        let out = inject_noise(&ds, &NoiseSpec::new("symmetric", 0.0, 1)).unwrap();
        assert_eq!(out.noisy_labels(), ds.clean_labels());
    }

    #[test]
    fn full_delta_corrupts_every_train_label() {
        let ds = dataset(4, 5);
        let out = inject_noise(&ds, &NoiseSpec::new("symmetric", 1.0, 1)).unwrap();
        for i in out.train_range() {
            assert_ne!(out.noisy_labels()[i], out.clean_labels()[i]);
        }
    }

    #[test]
    fn ten_classes_forty_percent() {
        let ds = dataset(10, 10);
        let out = inject_noise(&ds, &NoiseSpec::new("symmetric", 0.4, 5)).unwrap();
        let counts = corrupted_counts(&out);
        assert_eq!(counts, vec![4; 10]);
        assert_eq!(counts.iter().sum::<usize>(), 40);
        assert_eq!(
            out.noisy_labels()[out.test_range()],
            out.clean_labels()[out.test_range()]
        );
    }

    #[test]
    fn asymmetric_maps_to_next_class() {
        let ds = dataset(5, 4);
        let out = inject_noise(&ds, &NoiseSpec::new("asymmetric", 0.5, 2)).unwrap();
        for i in out.train_range() {
            let (c, y) = (out.clean_labels()[i], out.noisy_labels()[i]);
            assert!(y == c || y == (c + 1) % 5);
        }
        assert_eq!(corrupted_counts(&out), vec![2; 5]);
    }

    #[test]
    fn rejects_bad_delta_unknown_kind_and_double_injection() {
        let ds = dataset(3, 4);
        assert!(matches!(
            inject_noise(&ds, &NoiseSpec::new("symmetric", 1.5, 0)),
            Err(CrofError::Config(_))
        ));
        assert!(matches!(
            inject_noise(&ds, &NoiseSpec::new("pairflip", 0.5, 0)),
            Err(CrofError::UnknownStrategy { .. })
        ));
        let once = inject_noise(&ds, &NoiseSpec::new("symmetric", 0.5, 0)).unwrap();
        assert!(matches!(
            inject_noise(&once, &NoiseSpec::new("symmetric", 0.5, 0)),
            Err(CrofError::Invariant(_))
        ));
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(corrupted_per_class(0.25, 10), 3);
        assert_eq!(corrupted_per_class(0.24, 10), 2);
        assert_eq!(corrupted_per_class(0.4, 10), 4);
        assert_eq!(corrupted_per_class(0.5, 5), 3);
    }
}
