use std::ops::Range;

use super::matrix::EmbeddingMatrix;
use crate::error::{CrofError, Result};

/// Image embeddings with clean and noisy labels.
///
/// The first `n_train` rows form the train split (exactly `shots` rows per
/// class); the remaining rows are the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotDataset {
    images: EmbeddingMatrix,
    clean_labels: Vec<usize>,
    noisy_labels: Vec<usize>,
    n_classes: usize,
    shots: usize,
    n_train: usize,
    class_names: Vec<String>,
}

impl FewShotDataset {
    pub fn new(
        images: EmbeddingMatrix,
        clean_labels: Vec<usize>,
        noisy_labels: Vec<usize>,
        n_classes: usize,
        shots: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let rows = images.rows();
        if clean_labels.len() != rows || noisy_labels.len() != rows {
            return Err(CrofError::Length(format!(
                "{rows} images but {} clean / {} noisy labels",
                clean_labels.len(),
                noisy_labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(CrofError::Config(format!("need at least 2 classes, got {n_classes}")));
        }
        if class_names.len() != n_classes {
            return Err(CrofError::Length(format!(
                "{} class names for {n_classes} classes",
                class_names.len()
            )));
        }
        if let Some(&bad) = clean_labels.iter().chain(&noisy_labels).find(|&&l| l >= n_classes) {
            return Err(CrofError::Index(format!("label {bad} >= {n_classes} classes")));
        }
        let n_train = n_classes * shots;
        if n_train > rows {
            return Err(CrofError::Length(format!(
                "train split needs {n_train} rows, dataset has {rows}"
            )));
        }
        let mut counts = vec![0usize; n_classes];
        for &l in &clean_labels[..n_train] {
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&k| k != shots) {
            return Err(CrofError::Invariant(format!(
                "train split has {} samples of class {c}, expected {shots}",
                counts[c]
            )));
        }
        Ok(Self {
            images,
            clean_labels,
            noisy_labels,
            n_classes,
            shots,
            n_train,
            class_names,
        })
    }

    pub fn images(&self) -> &EmbeddingMatrix {
        &self.images
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.n_train
    }

    pub fn test_range(&self) -> Range<usize> {
        self.n_train..self.images.rows()
    }

    pub fn train_images(&self) -> Result<EmbeddingMatrix> {
        self.images.select_rows(&self.train_range().collect::<Vec<_>>())
    }

    pub fn test_images(&self) -> Result<EmbeddingMatrix> {
        self.images.select_rows(&self.test_range().collect::<Vec<_>>())
    }

    /// Replaces the noisy labels. The test split must keep its clean labels.
    pub fn with_noisy_labels(mut self, noisy: Vec<usize>) -> Result<Self> {
        if noisy.len() != self.clean_labels.len() {
            return Err(CrofError::Length(format!(
                "{} noisy labels for {} rows",
                noisy.len(),
                self.clean_labels.len()
            )));
        }
        if let Some(&bad) = noisy.iter().find(|&&l| l >= self.n_classes) {
            return Err(CrofError::Index(format!("label {bad} >= {} classes", self.n_classes)));
        }
        let r = self.test_range();
        if noisy[r.clone()] != self.clean_labels[r] {
            return Err(CrofError::Invariant("noisy labels alter the test split".into()));
        }
        self.noisy_labels = noisy;
        Ok(self)
    }
}

pub fn default_class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class_{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FewShotDataset {
        let images = EmbeddingMatrix::new(5, 2, vec![1., 0., 0., 1., 1., 0., 0., 1., 1., 1.], false)
            .unwrap();
        let labels = vec![0, 1, 0, 1, 0];
        FewShotDataset::new(images, labels.clone(), labels, 2, 2, default_class_names(2)).unwrap()
    }

    #[test]
    fn splits() {
        let ds = tiny();
        assert_eq!(ds.train_range(), 0..4);
        assert_eq!(ds.test_range(), 4..5);
        assert_eq!(ds.test_images().unwrap().row(0), &[1.0, 1.0]);
    }

    #[test]
    fn rejects_unbalanced_train_split() {
        let images = EmbeddingMatrix::new(4, 2, vec![0.5; 8], false).unwrap();
        let labels = vec![0, 0, 0, 1];
        let err = FewShotDataset::new(images, labels.clone(), labels, 2, 2, default_class_names(2));
        assert!(matches!(err, Err(CrofError::Invariant(_))));
    }

    #[test]
    fn noisy_labels_may_not_touch_test_split() {
        let ds = tiny();
        assert!(ds.clone().with_noisy_labels(vec![1, 1, 0, 1, 0]).is_ok());
        assert!(matches!(
            ds.with_noisy_labels(vec![0, 1, 0, 1, 1]),
            Err(CrofError::Invariant(_))
        ));
    }
}
