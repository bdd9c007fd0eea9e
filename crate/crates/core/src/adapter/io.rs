//! Adapter weights on disk: `w1.emb` and `w2.emb` (CROFEMB1) plus
//! `adapter.txt` holding `lambda`, `hidden` and `step` as `key = value` lines.
//!
//! Both files hold `hidden x dims` matrices, so `w1.emb` stores W1 transposed.
//! Weights are stored as `f32`; optimizer moments are not persisted.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::AdapterParams;
use crate::embedding_store::{load_embeddings, save_embeddings, EmbeddingMatrix};
use crate::error::{CrofError, Result};

pub fn save_params(p: &AdapterParams, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    save_embeddings(&EmbeddingMatrix::from_array(&p.w1.t().to_owned(), false)?, dir.join("w1.emb"))?;
    save_embeddings(&EmbeddingMatrix::from_array(&p.w2, false)?, dir.join("w2.emb"))?;
    let header = format!(
        "lambda = {}\nhidden = {}\nstep = {}\n",
        p.lambda(),
        p.hidden(),
        p.step()
    );
    let path = dir.join("adapter.txt");
    fs::write(&path, header).map_err(|e| CrofError::storage(path, e))
}

pub fn load_params(dir: impl AsRef<Path>) -> Result<AdapterParams> {
    let dir = dir.as_ref();
    let path = dir.join("adapter.txt");
    let text = fs::read_to_string(&path).map_err(|e| CrofError::storage(&path, e))?;
    let mut lambda = None;
    let mut hidden = None;
    let mut step = 0u64;
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let v = v.trim();
        let bad = || CrofError::Format(format!("{}: bad value `{v}` for {}", path.display(), k.trim()));
        match k.trim() {
            "lambda" => lambda = Some(v.parse::<f64>().map_err(|_| bad())?),
            "hidden" => hidden = Some(v.parse::<usize>().map_err(|_| bad())?),
            "step" => step = v.parse::<u64>().map_err(|_| bad())?,
            _ => {}
        }
    }
    let lambda = lambda.ok_or_else(|| CrofError::Format(format!("{}: missing lambda", path.display())))?;
    let w1: Array2<f64> = load_embeddings(dir.join("w1.emb"))?.to_array().reversed_axes();
    let w2 = load_embeddings(dir.join("w2.emb"))?.to_array();
    if let Some(h) = hidden {
        if w1.ncols() != h {
            return Err(CrofError::Shape(format!(
                "header says hidden = {h}, W1 has {} columns",
                w1.ncols()
            )));
        }
    }
    let mut p = AdapterParams::from_weights(w1, w2, lambda)?;
    p.set_step(step);
    Ok(p)
}
