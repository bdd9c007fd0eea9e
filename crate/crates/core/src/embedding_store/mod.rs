//! Embedding and label persistence, synthetic data, and label-noise injection.

mod dataset;
mod format;
mod matrix;
mod noise;
mod synth;

pub use dataset::{default_class_names, FewShotDataset};
pub use format::{
    decode_embeddings, encode_embeddings, load_class_names, load_embeddings, load_labels,
    save_class_names, save_embeddings, save_labels, HEADER_LEN, MAGIC,
};
pub use matrix::{EmbeddingMatrix, UNIT_NORM_TOL};
pub use noise::{
    corrupted_per_class, inject_noise, noise_models, Asymmetric, NoiseModel, NoiseRegistry,
    NoiseSpec, Symmetric,
};
pub use synth::{generate_synthetic, SynthSpec};
