use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use miolab_core::fn_geometry::{
    monte_carlo_phi, monte_carlo_trials, run_trial, GeometryConfig, PhiStats, WeightMode,
    TRUNCATION_SIGMAS,
};
use miolab_core::mi_oracle::{
    expected_mio_loss, mutual_information, plug_in_scores, verify_bound, DiscreteJoint,
};
use miolab_core::numerics::relative_error;
use miolab_core::Rng;
use proptest::prelude::*;

#[test]
fn bound_holds_on_random_dirichlet_joints() {
    for k in [2, 4, 8] {
        let mut rng = Rng::new(11, k as u64);
        for _ in 0..100 {
            let joint = DiscreteJoint::random_dirichlet(k, &mut rng).unwrap();
            let r = verify_bound(&joint).unwrap();
            assert!(r.slack >= -1e-12, "k={k}: {r:?}");
            assert!(r.i_pos >= 0.0);
            assert!(r.i_neg_tilde <= 1e-15);
            assert!(r.loss >= 0.0);
        }
    }
}

#[test]
fn independent_joint_slack_is_two_ln_two() {
    let joint = DiscreteJoint::independent(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    let r = verify_bound(&joint).unwrap();
    assert!((r.slack - 2.0 * LN_2).abs() <= 1e-12);
    assert!(r.i_pos.abs() <= 1e-12 && r.i_neg_tilde.abs() <= 1e-12);
}

/// Direct k²-term enumeration of `E_{p⊗p}[ln(p/(r r))]` with its own
/// marginals.
fn negative_reverse_kl(rows: &[Vec<f64>]) -> f64 {
    let k = rows.len();
    let r: Vec<f64> = rows.iter().map(|row| row.iter().sum()).collect();
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            let q = r[a] * r[b];
            total += q * (rows[a][b].max(1e-300) / q).ln();
        }
    }
    total
}

#[test]
fn negative_term_matches_direct_enumeration() {
    let mut rng = Rng::new(5, 5);
    for k in [2, 3, 5] {
        let joint = DiscreteJoint::random_dirichlet(k, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = joint.joint().iter_rows().map(|r| r.to_vec()).collect();
        let r = verify_bound(&joint).unwrap();
        assert!(relative_error(r.i_neg_tilde, negative_reverse_kl(&rows)) < 1e-12);
    }
}

#[test]
fn dirichlet_joint_loss_golden() {
    let mut rng = Rng::new(2024, 4);
    let joint = DiscreteJoint::random_dirichlet(4, &mut rng).unwrap();
    let loss = expected_mio_loss(&joint, &plug_in_scores(&joint).unwrap()).unwrap();
    // Cross-check the golden value by direct enumeration.
    let rows: Vec<Vec<f64>> = joint.joint().iter_rows().map(|r| r.to_vec()).collect();
    let r: Vec<f64> = rows.iter().map(|row| row.iter().sum()).collect();
    let mut direct = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let s = rows[a][b].max(1e-300) / (r[a] * r[b]);
            direct -= rows[a][b] * (s / (1.0 + s)).ln();
            direct -= r[a] * r[b] * (1.0 / (1.0 + s)).ln();
        }
    }
    assert!(relative_error(loss, direct) < 1e-13);
    assert!(relative_error(loss, DIRICHLET_K4_LOSS) < 1e-12);
}

const DIRICHLET_K4_LOSS: f64 = 1.26374451167686730;

proptest! {
    #[test]
    fn information_is_nonnegative(seed in 0u64..10_000, k in 2usize..7) {
        let mut rng = Rng::new(seed, 99);
        let joint = DiscreteJoint::random_dirichlet(k, &mut rng).unwrap();
        prop_assert!(mutual_information(&joint).unwrap() >= -1e-15);
        prop_assert!(verify_bound(&joint).unwrap().slack >= -1e-12);
    }
}

fn geometry(eta: usize) -> GeometryConfig {
    GeometryConfig {
        centroid: (10.0, 0.0),
        sigma: 1.0,
        eta,
        t_p: 256,
        weight_mode: WeightMode::Uniform(1.0),
    }
}

#[test]
fn deviation_shrinks_with_more_false_negatives() {
    let rng = Rng::new(7, 0);
    let mut previous = f64::INFINITY;
    for eta in [4, 8, 16, 32] {
        let stats = monte_carlo_phi(&geometry(eta), 100_000, &rng).unwrap();
        assert_eq!(stats.frac_cos_positive, 1.0);
        assert!(stats.max_abs_phi < FRAC_PI_2);
        assert!(stats.mean_abs_phi < previous, "eta={eta}: {stats:?}");
        previous = stats.mean_abs_phi;
    }
}

#[test]
fn spread_term_respects_its_bound() {
    let cfg = GeometryConfig {
        weight_mode: WeightMode::Random,
        ..geometry(16)
    };
    let trials = monte_carlo_trials(&cfg, 2000, &Rng::new(3, 0)).unwrap();
    for t in &trials {
        let share: f64 = t.weights.iter().sum::<f64>() / (cfg.t_p - 2) as f64;
        assert!(t.b <= TRUNCATION_SIGMAS * cfg.sigma * share + 1e-12);
        assert!(t
            .radii
            .iter()
            .all(|r| r.abs() <= TRUNCATION_SIGMAS * cfg.sigma));
    }
    let phis: Vec<f64> = trials.iter().map(|t| t.phi).collect();
    let stats = monte_carlo_phi(&cfg, 2000, &Rng::new(3, 0)).unwrap();
    assert_eq!(stats, PhiStats::from_phis(&phis).unwrap());
}

#[test]
fn golden_trial_and_literal_resultant() {
    let cfg = geometry(8);
    let t = run_trial(&cfg, &mut Rng::new(42, 0)).unwrap();
    let mut x = 0.0;
    let mut y = 0.0;
    for i in 0..8 {
        x += t.weights[i] * (10.0 + t.radii[i] * t.angles[i].cos());
        y += t.weights[i] * (t.radii[i] * t.angles[i].sin());
    }
    x /= 254.0;
    y /= 254.0;
    assert!(relative_error(t.resultant.0, x) < 1e-13);
    assert!(relative_error(t.resultant.1, y) < 1e-13);
    assert!((t.phi - y.atan2(x)).abs() < 1e-13);
    assert!(t.phi.abs() < PI);
    assert!(relative_error(t.phi, GOLDEN_PHI) < 1e-12);
}

const GOLDEN_PHI: f64 = 0.02579124549959983;
