use crof_core::embedding_store::EmbeddingMatrix;
use crof_core::prompt_fusion::{fuse, interclass_similarity};
use ndarray::Array2;
use proptest::prelude::*;

fn unit_rows(n: usize, d: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    prop::collection::vec(-1.0f64..1.0, n * d)
        .prop_filter("non-zero rows", move |v| {
            v.chunks(d).all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        })
        .prop_map(move |v| {
            EmbeddingMatrix::normalized_rows(&Array2::from_shape_vec((n, d), v).unwrap()).unwrap()
        })
}

fn pair() -> impl Strategy<Value = (EmbeddingMatrix, EmbeddingMatrix)> {
    (2usize..8, 2usize..10).prop_flat_map(|(n, d)| (unit_rows(n, d), unit_rows(n, d)))
}

proptest! {
    #[test]
    fn fused_rows_are_unit_norm((sup, cafo) in pair()) {
        // Opposite rows are a degenerate-fusion error, not a property failure.
        if let Ok(f) = fuse(&sup, &cafo) {
            for i in 0..f.rows() {
                prop_assert!((f.row_norm(i) - 1.0).abs() <= 1e-6);
            }
            let sim = interclass_similarity(&f);
            prop_assert_eq!(&sim, &sim.t());
            prop_assert!(sim.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn fusing_with_itself_is_identity((e, _) in pair()) {
        let f = fuse(&e, &e).unwrap();
        for (a, b) in f.data().iter().zip(e.data()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn class_permutation_permutes_rows((sup, cafo) in pair(), rot in 1usize..8) {
        let n = sup.rows();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        if let Ok(f) = fuse(&sup, &cafo) {
            let fp = fuse(&sup.select_rows(&perm).unwrap(), &cafo.select_rows(&perm).unwrap())
                .unwrap();
            prop_assert_eq!(fp, f.select_rows(&perm).unwrap());
        }
    }
}
