mod common;

use common::*;
use lrdecay::ndgrad::{forward, hvp, loss_and_grad, HvpOperator, MlpConfig, ParamVector, Tensor};
use lrdecay::operator::LinearOperator;
use proptest::prelude::*;

#[test]
fn golden_logits_seed_42() {
    // Cross-checked against an independent numpy matmul of the same parameters.
    let cfg = MlpConfig::new(4, vec![8, 5], 3).with_seed(42);
    let p = cfg.init_params().unwrap();
    let x = Tensor::from_rows(&[[0.5, -1.0, 0.25, 2.0], [1.5, 0.75, -0.5, 0.1]]).unwrap();
    let got = forward(&cfg, &p, &x).unwrap();
    let golden = [
        0.0801100737645625,
        0.07351553924444193,
        -0.11964885972405313,
        0.08974190710170842,
        0.10358936763712905,
        -0.05724941319762494,
    ];
    assert_eq!(got.shape(), &[2, 3]);
    for (g, e) in got.data().iter().zip(golden) {
        assert!((g - e).abs() < 1e-14, "{g} vs {e}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..20 {
        let inst = random_instance(seed);
        let (_, grad) = loss_and_grad(&inst.cfg, &inst.params, &inst.x, &inst.y).unwrap();
        let fd = fd_gradient(&inst.cfg, &inst.params, &inst.x, &inst.y, 1e-5);
        let worst = grad
            .as_slice()
            .iter()
            .zip(&fd)
            .map(|(a, f)| rel_err(*a, *f, 1e-6))
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "seed {seed}: max rel err {worst}");
    }
}

#[test]
fn hvp_matches_gradient_differences() {
    for seed in 0..20 {
        let inst = random_instance(seed);
        let op = HvpOperator::new(
            inst.cfg.clone(),
            inst.params.clone(),
            inst.x.clone(),
            inst.y.clone(),
        )
        .unwrap();
        let v = random_vector(op.dim(), seed + 1000);
        let exact = op.apply(&v).unwrap();
        let fd = fd_hvp(&inst.cfg, &inst.params, &inst.x, &inst.y, &v, 1e-4);
        let err = vec_rel_err(&exact, &fd);
        assert!(err < 1e-3, "seed {seed}: rel err {err}");
    }
}

#[test]
fn hvp_symmetric_and_linear() {
    for seed in 0..20 {
        let inst = random_instance(seed);
        let op = HvpOperator::new(inst.cfg, inst.params, inst.x, inst.y).unwrap();
        let n = op.dim();
        let u = random_vector(n, seed + 1);
        let v = random_vector(n, seed + 2);
        let hu = op.apply(&u).unwrap();
        let hv = op.apply(&v).unwrap();
        let (uhv, vhu) = (dot(&u, &hv), dot(&v, &hu));
        assert!(
            rel_err(uhv, vhu, 1e-12) < 1e-8,
            "seed {seed}: {uhv} vs {vhu}"
        );

        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = op.apply(&combo).unwrap();
        let rhs: Vec<f64> = hu.iter().zip(&hv).map(|(x, y)| a * x + b * y).collect();
        assert!(vec_rel_err(&lhs, &rhs) < 1e-8, "seed {seed}");
    }
}

#[test]
fn hvp_rejects_wrong_length() {
    let inst = random_instance(3);
    let op = HvpOperator::new(inst.cfg, inst.params, inst.x, inst.y).unwrap();
    assert!(hvp(&op, &ParamVector::zeros(op.dim() + 1)).is_err());
}

#[test]
fn hvp_operator_validates_batch() {
    let inst = random_instance(4);
    let classes = inst.cfg.num_classes;
    let bad_labels = vec![classes; inst.y.len()];
    assert!(HvpOperator::new(inst.cfg, inst.params, inst.x, bad_labels).is_err());
}

#[test]
fn deterministic_outputs() {
    let a = random_instance(11);
    let b = random_instance(11);
    let (la, ga) = loss_and_grad(&a.cfg, &a.params, &a.x, &a.y).unwrap();
    let (lb, gb) = loss_and_grad(&b.cfg, &b.params, &b.x, &b.y).unwrap();
    assert_eq!(la.to_bits(), lb.to_bits());
    assert_eq!(ga, gb);
}

proptest! {
    #[test]
    fn unflatten_then_flatten_is_identity(
        input in 1usize..6,
        hidden in proptest::collection::vec(1usize..6, 0..3),
        classes in 2usize..5,
        seed in any::<u64>(),
    ) {
        let cfg = MlpConfig::new(input, hidden, classes).with_seed(seed);
        let p = cfg.init_params().unwrap();
        let layers = p.unflatten(&cfg).unwrap();
        prop_assert_eq!(layers.len(), cfg.num_layers());
        prop_assert_eq!(ParamVector::flatten(&layers), p);
    }

    #[test]
    fn loss_is_nonnegative(seed in 0u64..500) {
        let inst = random_instance(seed);
        let (l, g) = loss_and_grad(&inst.cfg, &inst.params, &inst.x, &inst.y).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(g.len(), inst.params.len());
    }
}
