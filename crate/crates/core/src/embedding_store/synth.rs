use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{default_class_names, FewShotDataset};
use super::matrix::EmbeddingMatrix;
use crate::error::{CrofError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub dims: usize,
    pub shots: usize,
    pub test_per_class: usize,
    pub sigma: f64,
    pub seed: u64,
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

/// Gaussian clusters around random unit prototypes.
///
/// Returns the dataset (train rows first, class-major) and the `n_classes x dims`
/// prototype matrix, which doubles as the class text embeddings. Noisy labels
/// start equal to the clean labels.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(FewShotDataset, EmbeddingMatrix)> {
    let SynthSpec {
        n_classes,
        dims,
        shots,
        test_per_class,
        sigma,
        seed,
    } = *spec;
    if n_classes < 2 || dims < 2 {
        return Err(CrofError::Config(format!(
            "need n_classes >= 2 and dims >= 2, got {n_classes} and {dims}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CrofError::Config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if shots + test_per_class == 0 {
        return Err(CrofError::Config("shots + test_per_class must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |n: usize| -> Array1<f64> {
        Array1::from_iter((0..n).map(|_| StandardNormal.sample(&mut rng)))
    };

    let mut protos = Array2::<f64>::zeros((n_classes, dims));
    for mut row in protos.rows_mut() {
        row.assign(&unit(gauss(dims)));
    }

    let n_rows = n_classes * (shots + test_per_class);
    let mut images = Array2::<f64>::zeros((n_rows, dims));
    let mut labels = Vec::with_capacity(n_rows);
    let mut r = 0;
    for per_class in [shots, test_per_class] {
        for c in 0..n_classes {
            for _ in 0..per_class {
                let noise = gauss(dims);
                let v = if sigma == 0.0 {
                    protos.row(c).to_owned()
                } else {
                    unit(&protos.row(c) + &(noise * sigma))
                };
                images.row_mut(r).assign(&v);
                labels.push(c);
                r += 1;
            }
        }
    }

    let images = EmbeddingMatrix::from_array(&images, true)?;
    let protos = EmbeddingMatrix::from_array(&protos, true)?;
    let ds = FewShotDataset::new(
        images,
        labels.clone(),
        labels,
        n_classes,
        shots,
        default_class_names(n_classes),
    )?;
    Ok((ds, protos))
}
