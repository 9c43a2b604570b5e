mod common;

use common::{naive_losses, toy_inputs, toy_params};
use kmf_core::gnn::GnnParams;
use kmf_core::numerics::{grad_check, GradCheckOptions};
use kmf_core::objectives::{evaluate, evaluate_with_gradients};

#[test]
fn total_loss_gradients_match_central_differences() {
    for hinge in [false, true] {
        let inputs = toy_inputs(0.5, 0.5, hinge);
        let params = toy_params(7);
        let (_, grads) = evaluate_with_gradients(&params, &inputs).unwrap();
        let loss = |t: &[kmf_core::numerics::Tensor]| {
            let p = GnnParams::from_tensors(common::DIM, t)?;
            Ok(evaluate(&p, &inputs)?.total)
        };
        let opts = GradCheckOptions {
            max_coords_per_param: usize::MAX,
            ..GradCheckOptions::default()
        };
        let err = grad_check(loss, &params.to_tensors(), &grads, &opts).unwrap();
        assert!(err < 1e-4, "hinge={hinge}: {err}");
    }
}

#[test]
fn every_term_matches_loop_oracle() {
    for seed in 0..4 {
        let inputs = toy_inputs(0.5, 0.5, seed % 2 == 1);
        let params = toy_params(seed);
        let got = evaluate(&params, &inputs).unwrap();
        let want = naive_losses(&params, &inputs);
        assert!((got.classification - want.l_c).abs() < 1e-10);
        assert!((got.contrastive - want.l_cl).abs() < 1e-10);
        assert!((got.distance - want.l_d).abs() < 1e-10);
        assert!((got.direction - want.l_r).abs() < 1e-10);
        let total = want.l_c + 0.5 * want.l_cl + 0.5 * (want.l_d + want.l_r);
        assert!((got.total - total).abs() < 1e-10);
    }
}

#[test]
fn lambdas_switch_terms_off() {
    let params = toy_params(1);
    let full = evaluate(&params, &toy_inputs(0.5, 0.5, false)).unwrap();
    let bare = evaluate(&params, &toy_inputs(0.0, 0.0, false)).unwrap();
    assert_eq!(bare.total, full.classification);
    assert_eq!(bare.contrastive, full.contrastive);
}
