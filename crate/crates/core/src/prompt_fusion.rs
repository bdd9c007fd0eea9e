//! Class text-embedding fusion, inter-class similarity diagnostics, and the
//! description-request text sent to an external language model.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use crate::embedding_store::EmbeddingMatrix;
use crate::error::{CrofError, Result};

/// Norm below which a fused row is treated as the zero vector.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Supplement-description and baseline-description embeddings for each class.
#[derive(Debug, Clone)]
pub struct ClassTextEmbeddings {
    pub sup: EmbeddingMatrix,
    pub cafo: EmbeddingMatrix,
    pub fused: Option<EmbeddingMatrix>,
}

impl ClassTextEmbeddings {
    pub fn new(sup: EmbeddingMatrix, cafo: EmbeddingMatrix) -> Result<Self> {
        check_same_shape(&sup, &cafo)?;
        Ok(Self {
            sup,
            cafo,
            fused: None,
        })
    }

    pub fn fuse(&mut self) -> Result<&EmbeddingMatrix> {
        let fused = fuse(&self.sup, &self.cafo)?;
        Ok(self.fused.insert(fused))
    }
}

fn check_same_shape(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<()> {
    if a.rows() != b.rows() || a.dims() != b.dims() {
        return Err(CrofError::Shape(format!(
            "supplement is {}x{}, baseline is {}x{}",
            a.rows(),
            a.dims(),
            b.rows(),
            b.dims()
        )));
    }
    Ok(())
}

/// Row-wise `normalize(sup_i + cafo_i)`.
pub fn fuse(sup: &EmbeddingMatrix, cafo: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    check_same_shape(sup, cafo)?;
    let mut out = sup.to_array() + cafo.to_array();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < DEGENERATE_NORM {
            return Err(CrofError::DegenerateFusion { row: i });
        }
        row.mapv_inplace(|v| v / norm);
    }
    EmbeddingMatrix::from_array(&out, true)
}

/// Averages consecutive groups of `per_class` description embeddings and
/// normalizes each mean. Row `i` of the result belongs to class `i`.
pub fn aggregate_descriptions(m: &EmbeddingMatrix, per_class: usize) -> Result<EmbeddingMatrix> {
    if per_class == 0 || !m.rows().is_multiple_of(per_class) {
        return Err(CrofError::Shape(format!(
            "{} description rows do not split into groups of {per_class}",
            m.rows()
        )));
    }
    let a = m.to_array();
    let n = m.rows() / per_class;
    let mut out = Array2::<f64>::zeros((n, m.dims()));
    for c in 0..n {
        let mut acc = Array1::<f64>::zeros(m.dims());
        for k in 0..per_class {
            let mut row = a.row(c * per_class + k).to_owned();
            let norm = row.dot(&row).sqrt();
            if norm >= DEGENERATE_NORM {
                row /= norm;
            }
            acc += &row;
        }
        out.row_mut(c).assign(&acc);
    }
    EmbeddingMatrix::normalized_rows(&out)
}

/// Cosine similarity between every pair of rows. Exactly symmetric.
pub fn interclass_similarity(e: &EmbeddingMatrix) -> Array2<f64> {
    let mut a = e.to_array();
    for mut row in a.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    let n = a.nrows();
    let mut sim = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let c = a.row(i).dot(&a.row(j)).clamp(-1.0, 1.0);
            sim[[i, j]] = c;
            sim[[j, i]] = c;
        }
    }
    sim
}

/// Mean over the `n * (n - 1)` off-diagonal entries.
pub fn mean_offdiagonal(sim: &Array2<f64>) -> Result<f64> {
    let (n, m) = sim.dim();
    if n != m {
        return Err(CrofError::Shape(format!("similarity matrix is {n}x{m}")));
    }
    if n < 2 {
        return Err(CrofError::Shape(format!(
            "need at least 2 classes for off-diagonal mean, got {n}"
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += sim[[i, j]];
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Row-major CSV, shortest round-trip decimal for every entry.
pub fn similarity_csv(sim: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in sim.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Renders the request asking a language model for five discriminative
/// descriptions per class. `task_target` names the domain ("flower", "car").
pub fn build_prompt_request(task_target: &str, class_names: &[String]) -> Result<String> {
    if class_names.is_empty() {
        return Err(CrofError::Config("class list is empty".into()));
    }
    let mut s = String::new();
    write!(
        s,
        "I have {} categories of {}, and each category is described as \
         \"a photo of {{category name}}.\" I want to introduce detailed differentiation \
         descriptions, comparative information, scene backgrounds, emotions, or \
         domain-specific terms in the descriptions to guide CLIP text encoder to generate \
         more distinguishable category embedding for similar categories. Please generate \
         five descriptions for each category according to above principles. \
         My category list is: [{}]. Output the descriptions in JSON format.",
        class_names.len(),
        task_target,
        class_names.join(", ")
    )
    .expect("writing to a String");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[Vec<f64>], normalized: bool) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows, normalized).unwrap()
    }

    #[test]
    fn fuse_examples() {
        let u = m(&[vec![0.6, 0.8]], true);
        assert_eq!(fuse(&u, &u).unwrap().row(0), &[0.6f32, 0.8]);

        let a = m(&[vec![1.0, 0.0]], true);
        let b = m(&[vec![0.0, 1.0]], true);
        let f = fuse(&a, &b).unwrap();
        assert_abs_diff_eq!(f.row(0)[0] as f64, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-7);
        assert_abs_diff_eq!(f.row(0)[1] as f64, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-7);

        let neg = m(&[vec![-1.0, 0.0]], true);
        assert!(matches!(
            fuse(&a, &neg),
            Err(CrofError::DegenerateFusion { row: 0 })
        ));

        let wide = m(&[vec![1.0, 0.0, 0.0]], true);
        assert!(matches!(fuse(&a, &wide), Err(CrofError::Shape(_))));
    }

    #[test]
    fn similarity_examples() {
        let eye = m(&[vec![1., 0., 0.], vec![0., 1., 0.], vec![0., 0., 1.]], true);
        let s = interclass_similarity(&eye);
        assert_eq!(mean_offdiagonal(&s).unwrap(), 0.0);

        let dup = m(&[vec![1., 0.], vec![1., 0.]], true);
        assert_eq!(interclass_similarity(&dup)[[0, 1]], 1.0);

        let pair = m(&[vec![1., 0.], vec![0.6, 0.8]], true);
        let s = interclass_similarity(&pair);
        assert_abs_diff_eq!(s[[0, 1]], 0.6, epsilon = 1e-7);
        assert_eq!(s, s.t());
    }

    #[test]
    fn mean_offdiagonal_examples() {
        let s = ndarray::array![[1.0, 0.6], [0.6, 1.0]];
        assert_eq!(mean_offdiagonal(&s).unwrap(), 0.6);
        let s = ndarray::array![[1.0, 0.2, 0.4], [0.2, 1.0, 0.6], [0.4, 0.6, 1.0]];
        assert_abs_diff_eq!(mean_offdiagonal(&s).unwrap(), 0.4, epsilon = 1e-15);
        assert!(mean_offdiagonal(&ndarray::array![[1.0]]).is_err());
    }

    #[test]
    fn aggregates_groups() {
        let d = m(&[vec![1., 0.], vec![0., 1.], vec![0., 2.], vec![0., 3.]], false);
        let agg = aggregate_descriptions(&d, 2).unwrap();
        assert_eq!(agg.rows(), 2);
        assert_abs_diff_eq!(agg.row(0)[0] as f64, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-7);
        assert_eq!(agg.row(1), &[0.0, 1.0]);
        assert!(aggregate_descriptions(&d, 3).is_err());
    }

    #[test]
    fn prompt_request_text() {
        let names = vec!["rose".to_string(), "tulip".to_string()];
        let s = build_prompt_request("flower", &names).unwrap();
        assert!(s.starts_with("I have 2 categories of flower"));
        assert!(s.contains("My category list is: [rose, tulip]"));
        assert!(s.ends_with("My category list is: [rose, tulip]. Output the descriptions in JSON format."));
        assert!(s.contains("\"a photo of {category name}.\""));

        let one = build_prompt_request("car", &["sedan".to_string()]).unwrap();
        assert!(one.starts_with("I have 1 categories of car"));

        assert!(matches!(
            build_prompt_request("car", &[]),
            Err(CrofError::Config(_))
        ));
    }

    #[test]
    fn many_names_in_order() {
        let names: Vec<String> = (0..102).map(|i| format!("flower-{i:03}")).collect();
        let s = build_prompt_request("flower", &names).unwrap();
        assert!(s.starts_with("I have 102 categories of flower"));
        let mut last = 0;
        for n in &names {
            let pos = s.find(n.as_str()).expect("name present");
            assert!(pos > last);
            last = pos;
        }
    }

    #[test]
    fn csv_is_full_precision() {
        let s = ndarray::array![[1.0, 0.1 + 0.2], [0.1 + 0.2, 1.0]];
        let csv = similarity_csv(&s);
        assert_eq!(csv, "1,0.30000000000000004\n0.30000000000000004,1\n");
    }
}
