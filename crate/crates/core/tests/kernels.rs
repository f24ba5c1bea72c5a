use proptest::prelude::*;

use spikeforge::tensor::{avgpool_forward, conv2d_forward, dense_forward};
use spikeforge::{LayerGeometry, Tensor};

/// Fills `shape` by cycling through `seed`, perturbed per cycle.
fn tensor(shape: [usize; 4], seed: &[f64]) -> Tensor {
    Tensor::from_fn(shape, |i| {
        seed[i % seed.len()] * (1.0 + (i / seed.len()) as f64 * 0.01)
    })
    .unwrap()
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_linear_in_input(
        a in prop::collection::vec(-1.0f64..1.0, 1..40),
        b in prop::collection::vec(-1.0f64..1.0, 1..40),
        wv in prop::collection::vec(-1.0f64..1.0, 1..20),
        k in 1usize..=3,
        p in 0usize..=1,
        alpha in -2.0f64..2.0,
    ) {
        let g = LayerGeometry::conv2d(2, 3, k, 1, p);
        let xa = tensor([1, 2, 5, 5], &a);
        let xb = tensor([1, 2, 5, 5], &b);
        let w = tensor(g.weight_shape(), &wv);
        let zero = vec![0.0; 3];
        let mixed = xa.zip_with(&xb, |u, v| alpha * u + v).unwrap();
        let lhs = conv2d_forward(&mixed, &w, &zero, &g).unwrap();
        let ya = conv2d_forward(&xa, &w, &zero, &g).unwrap();
        let yb = conv2d_forward(&xb, &w, &zero, &g).unwrap();
        let rhs = ya.zip_with(&yb, |u, v| alpha * u + v).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn dense_is_linear_in_input(
        a in prop::collection::vec(-1.0f64..1.0, 12),
        b in prop::collection::vec(-1.0f64..1.0, 12),
        wv in prop::collection::vec(-1.0f64..1.0, 1..40),
        alpha in -2.0f64..2.0,
    ) {
        let xa = tensor([1, 3, 2, 2], &a);
        let xb = tensor([1, 3, 2, 2], &b);
        let w = tensor([4, 12, 1, 1], &wv);
        let zero = vec![0.0; 4];
        let mixed = xa.zip_with(&xb, |u, v| alpha * u + v).unwrap();
        let lhs = dense_forward(&mixed, &w, &zero).unwrap();
        let ya = dense_forward(&xa, &w, &zero).unwrap();
        let yb = dense_forward(&xb, &w, &zero).unwrap();
        let rhs = ya.zip_with(&yb, |u, v| alpha * u + v).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn kernels_are_deterministic(
        a in prop::collection::vec(-1.0f64..1.0, 1..64),
        wv in prop::collection::vec(-1.0f64..1.0, 1..32),
    ) {
        let x = tensor([2, 2, 6, 6], &a);
        let g = LayerGeometry::conv2d(2, 4, 3, 1, 1);
        let w = tensor(g.weight_shape(), &wv);
        let bias = vec![0.1, -0.2, 0.3, 0.0];
        prop_assert_eq!(
            conv2d_forward(&x, &w, &bias, &g).unwrap(),
            conv2d_forward(&x, &w, &bias, &g).unwrap()
        );
        prop_assert_eq!(avgpool_forward(&x, 2, 2).unwrap(), avgpool_forward(&x, 2, 2).unwrap());
    }

    #[test]
    fn avgpool_of_constant_is_constant(v in -3.0f64..3.0, k in 1usize..=3) {
        let x = Tensor::filled([1, 2, 6, 6], v);
        let y = avgpool_forward(&x, k, k).unwrap();
        prop_assert!(y.data().iter().all(|&u| (u - v).abs() <= 1e-12));
    }
}

#[test]
fn shape_errors_name_the_dimension() {
    let g = LayerGeometry::conv2d(3, 4, 3, 1, 0);
    let x = Tensor::zeros([1, 2, 5, 5]);
    let w = Tensor::zeros(g.weight_shape());
    let err = conv2d_forward(&x, &w, &[0.0; 4], &g)
        .unwrap_err()
        .to_string();
    assert!(err.contains("channel"), "{err}");
}
