mod common;

use common::random_matrix;
use miolab_core::losses::{
    infonce_grad_z, mio_grad_z, mio_l2_loss, projector_grad_mio, LossConfig, SimilarityMode,
};
use miolab_core::model::{
    backward, finite_diff_audit, forward, init_params, Activation, AuditConfig, MlpSpec, ModelSpec,
    Norm,
};
use miolab_core::numerics::relative_error;
use miolab_core::pairing::build_pairs;
use miolab_core::{Mat64, Result};

fn plain_spec(norm: Norm) -> ModelSpec {
    ModelSpec {
        encoder: MlpSpec::stack(
            &[5, 12, 10],
            Activation::Relu,
            Norm::None,
            Activation::Relu,
            true,
        )
        .unwrap(),
        projector: MlpSpec::stack(
            &[10, 12, 4],
            Activation::Relu,
            norm,
            Activation::Identity,
            true,
        )
        .unwrap(),
    }
}

fn mio_cosine(z: &Mat64) -> Result<(f64, Mat64)> {
    let pairs = build_pairs(z.rows() / 2)?;
    let cfg = LossConfig::new(0.5, 0.0, SimilarityMode::Cosine)?;
    let r = mio_grad_z(z, &pairs, &cfg)?;
    Ok((r.value, r.grad().clone()))
}

#[test]
fn audit_without_normalization_is_tight() {
    let spec = plain_spec(Norm::None);
    for seed in 0..3 {
        let state = init_params(&spec, seed).unwrap();
        let x = random_matrix(8, 5, 100 + seed);
        let report =
            finite_diff_audit(&state, &spec, &x, mio_cosine, &AuditConfig::default()).unwrap();
        assert_eq!(report.checked, spec.parameter_count());
        assert!(report.max_rel_err <= 1e-6, "{report:?}");
    }
}

#[test]
fn audit_with_batch_standardization() {
    let spec = plain_spec(Norm::BatchStandardize);
    for seed in 0..3 {
        let state = init_params(&spec, seed).unwrap();
        let x = random_matrix(8, 5, 200 + seed);
        let report =
            finite_diff_audit(&state, &spec, &x, mio_cosine, &AuditConfig::default()).unwrap();
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
    }
}

#[test]
fn audit_desk_model_with_every_loss() {
    let spec = ModelSpec::desk(6, &[10], 8, &[8], 4).unwrap();
    let state = init_params(&spec, 9).unwrap();
    let x = random_matrix(8, 6, 9);
    let pairs = build_pairs(4).unwrap();
    let cfg = LossConfig::new(0.5, 0.3, SimilarityMode::Dot).unwrap();
    let losses: [&(dyn Fn(&Mat64) -> Result<(f64, Mat64)> + Sync); 2] = [
        &|z| infonce_grad_z(z, &pairs, &cfg).map(|r| (r.value, r.grad().clone())),
        &|z| mio_l2_loss(z, &pairs, &cfg).map(|r| (r.value, r.grad().clone())),
    ];
    for loss in losses {
        let report = finite_diff_audit(&state, &spec, &x, loss, &AuditConfig::default()).unwrap();
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
    }
}

#[test]
fn encoder_output_is_nonnegative() {
    let spec = ModelSpec::desk(6, &[16], 12, &[8], 4).unwrap();
    let state = init_params(&spec, 1).unwrap();
    let trace = forward(&state, &spec, &random_matrix(10, 6, 1)).unwrap();
    assert!(trace.h().as_slice().iter().all(|&v| v >= 0.0));
}

#[test]
fn forward_is_equivariant_to_row_permutation() {
    for norm in [Norm::None, Norm::BatchStandardize] {
        let spec = plain_spec(norm);
        let state = init_params(&spec, 4).unwrap();
        let x = random_matrix(6, 5, 4);
        let order = [4usize, 2, 5, 0, 3, 1];
        let z = forward(&state, &spec, &x).unwrap().z().clone();
        let zp = forward(&state, &spec, &x.select_rows(&order))
            .unwrap()
            .z()
            .clone();
        for (r, &src) in order.iter().enumerate() {
            for (a, b) in zp.row(r).iter().zip(z.row(src)) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}

/// With a single bias-free linear projector layer, summing the weight
/// gradient over its input dimension reproduces the influence-factor form
/// of the projector gradient, since `Σ_n h_on = ‖h_o‖₁` for `h ≥ 0`.
#[test]
fn linear_projector_weight_row_sums_match_influence_form() {
    let spec = ModelSpec {
        encoder: MlpSpec::stack(
            &[5, 9, 6],
            Activation::Relu,
            Norm::None,
            Activation::Relu,
            true,
        )
        .unwrap(),
        projector: MlpSpec::stack(
            &[6, 3],
            Activation::Identity,
            Norm::None,
            Activation::Identity,
            false,
        )
        .unwrap(),
    };
    for seed in 0..5 {
        let state = init_params(&spec, seed).unwrap();
        let x = random_matrix(8, 5, 300 + seed);
        let trace = forward(&state, &spec, &x).unwrap();
        let pairs = build_pairs(4).unwrap();
        let cfg = LossConfig::new(1.0, 0.0, SimilarityMode::Dot).unwrap();
        let g = mio_grad_z(trace.z(), &pairs, &cfg).unwrap();
        let grads = backward(&state, &spec, &trace, g.grad()).unwrap();
        let influence = projector_grad_mio(trace.z(), trace.h(), &pairs, &cfg).unwrap();
        let dw = &grads.projector.layers[0].weight;
        for (m, want) in influence.iter().enumerate() {
            let row_sum: f64 = dw.row(m).iter().sum();
            assert!(
                relative_error(row_sum, *want) < 1e-12,
                "seed {seed} m {m}: {row_sum} vs {want}"
            );
        }
    }
}

#[test]
fn forward_golden_checksum() {
    let spec = ModelSpec::desk(4, &[8], 6, &[6], 3).unwrap();
    let state = init_params(&spec, 2024).unwrap();
    let x = Mat64::from_fn(4, 4, |r, c| (r as f64 - 1.5) * 0.5 + c as f64 * 0.25);
    let z = forward(&state, &spec, &x).unwrap().z().clone();
    let sum: f64 = z.as_slice().iter().sum();
    let sq: f64 = z.as_slice().iter().map(|v| v * v).sum();
    assert!(relative_error(sum, GOLDEN_SUM) < 1e-12);
    assert!(relative_error(sq, GOLDEN_SQ) < 1e-12);
}

const GOLDEN_SUM: f64 = -3.31359252087924716;
const GOLDEN_SQ: f64 = 16.8781291956426927;
