use pitf_tensor::gradcheck::check_gradients;
use pitf_tensor::{rotate_at, Tensor};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, values in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let cols = values.len();
        let data: Vec<f64> = (0..rows).flat_map(|r| values.iter().map(move |v| v * (r as f64 + 1.0))).collect();
        let y = Tensor::new(&[rows, cols], data).unwrap().softmax(1).unwrap();
        for row in y.data().chunks(cols) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_standardises_rows(values in prop::collection::vec(-10.0f64..10.0, 8)) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-3));
        let x = Tensor::new(&[1, 8], values).unwrap();
        let y = x.layer_norm(&Tensor::ones(&[8]).unwrap(), &Tensor::zeros(&[8]).unwrap(), 1e-12).unwrap();
        let mean = y.data().iter().sum::<f64>() / 8.0;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rotation_preserves_norm(q in prop::collection::vec(-5.0f64..5.0, 8), pos in 0usize..5000) {
        let r = rotate_at(&q, pos).unwrap();
        prop_assert!((norm(&r) - norm(&q)).abs() < 1e-12 * (1.0 + norm(&q)));
    }

    #[test]
    fn rotary_scores_depend_on_offset_only(
        q in prop::collection::vec(-2.0f64..2.0, 16),
        k in prop::collection::vec(-2.0f64..2.0, 16),
        m in 0usize..64, n in 0usize..64, s in 0usize..64,
    ) {
        let base = dot(&rotate_at(&q, m).unwrap(), &rotate_at(&k, n).unwrap());
        let shifted = dot(&rotate_at(&q, m + s).unwrap(), &rotate_at(&k, n + s).unwrap());
        prop_assert!((base - shifted).abs() < 1e-9);
    }

    #[test]
    fn matmul_gradient_random_shapes(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in 0u64..1000) {
        let gen = |len: usize, salt: u64| -> Vec<f64> {
            (0..len).map(|i| (((i as u64 + 1) * 2654435761 + seed * 97 + salt) % 1000) as f64 / 500.0 - 1.0).collect()
        };
        let a = Tensor::new(&[m, k], gen(m * k, 1)).unwrap();
        let b = Tensor::new(&[k, n], gen(k * n, 2)).unwrap();
        let report = check_gradients(|x| Ok(x[0].matmul(&x[1])?.exp().sum()), &[a, b], 1e-5).unwrap();
        prop_assert!(report.max_relative_error() < 1e-4);
    }
}

#[test]
fn tensor_tape_is_deterministic() {
    let run = || {
        let x = Tensor::parameter(&[4, 4], (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
        let y = x.matmul(&x.transpose().unwrap()).unwrap().softmax(1).unwrap().sum();
        y.backward().unwrap();
        (y.item().unwrap().to_bits(), x.grad().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
