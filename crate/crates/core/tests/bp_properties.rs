use apsync::bp::{
    agent_update, init_particles, normalize_log_weights, pair_weights, run_loopy_bp, BeliefSummary,
    Bounds, BpConfig, Node, ParticleSet, Role,
};
use apsync::channel::{synthesize_all_pairs, synthesize_observation};
use apsync::likelihood::PairLikelihood;
use apsync::rng::substream;
use apsync::{ApertureState, ArrayConfig, StateVector, SPEED_OF_LIGHT, STATE_DIM};
use proptest::prelude::*;

fn small_array() -> ArrayConfig {
    let fc = 6.175e9;
    ArrayConfig::uniform(4, 500e6, fc, 2, 2, SPEED_OF_LIGHT / fc / 2.0).unwrap()
}

fn truths() -> Vec<ApertureState> {
    vec![
        ApertureState::new([0.0, 0.0, 0.0], [0.2, 0.0, 0.0], 0.0),
        ApertureState::new([3.0, 0.5, 0.2], [2.9, 0.1, -0.1], 0.1),
        ApertureState::new([0.5, 3.0, -0.1], [-1.4, -0.1, 0.2], -0.2),
        ApertureState::new([3.2, 2.8, 0.4], [-2.5, 0.05, 0.1], 0.05),
    ]
}

#[test]
fn anchors_stay_bit_identical() {
    let cfg = small_array();
    let t = truths();
    let obs = synthesize_all_pairs(&t, &cfg, 10.0, &mut substream(1, &[])).unwrap();
    let half = StateVector::repeat(0.3);
    let nodes = vec![
        Node::Anchor(t[0]),
        Node::Agent(Bounds::around(&t[1].to_vector(), &half).unwrap()),
        Node::Agent(Bounds::around(&t[2].to_vector(), &half).unwrap()),
        Node::Anchor(t[3]),
    ];
    let bp = BpConfig {
        n_particles: 300,
        n_iterations: 4,
        ..BpConfig::default()
    };
    let trace = run_loopy_bp(&nodes, &obs, &cfg, &bp, 9).unwrap();
    assert_eq!(trace.iterations.len(), 4);
    for j in [0, 3] {
        let set = &trace.sets[j];
        assert_eq!(set.role, Role::Anchor);
        let v = t[j].to_vector();
        assert!(set.particles.iter().all(|x| x
            .iter()
            .zip(v.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())));
        assert!(set.weights.iter().all(|&w| w == 1.0 / 300.0));
    }
    for rec in &trace.iterations {
        let ids: Vec<usize> = rec.agents.iter().map(|a| a.aperture).collect();
        assert_eq!(ids, [1, 2]);
    }
}

#[test]
fn flat_messages_keep_the_uniform_prior() {
    let lo = StateVector::from_column_slice(&[-1.0, 0.0, 2.0, -0.5, -0.3, 0.0, -0.2]);
    let hi = StateVector::from_column_slice(&[1.0, 3.0, 2.5, 0.5, 0.3, 1.0, 0.6]);
    let bounds = Bounds::new(lo, hi).unwrap();
    let n = 3000;
    let config = BpConfig {
        n_particles: n,
        ..BpConfig::default()
    };
    let mut set = ParticleSet::uniform(&bounds, n, &mut substream(2, &[0]));
    let flat = vec![-(n as f64).ln(); n];
    let mut surrogate = None;
    let mut beta = 0.0;
    for p in 0..8 {
        let up = agent_update(
            &set,
            &[&flat, &flat, &flat],
            &bounds,
            surrogate.as_ref(),
            &config,
            beta,
            &mut substream(2, &[1, p]),
        )
        .unwrap();
        let w = bounds.widths();
        let c = bounds.center();
        for k in 0..STATE_DIM {
            let var = w[k] * w[k] / 12.0;
            let se = (var / up.ess).sqrt();
            assert!((up.summary.mean[k] - c[k]).abs() < 6.0 * se, "p {p} k {k}");
            let rel = up.summary.covariance[(k, k)] / var;
            assert!(
                (0.85..1.15).contains(&rel),
                "p {p} k {k}: variance ratio {rel}"
            );
        }
        set = up.set;
        surrogate = Some(up.surrogate);
        beta = up.beta;
    }
}

#[test]
fn anchor_pair_weights_are_uniform() {
    let cfg = small_array();
    let t = truths();
    let z = synthesize_observation(&t[0], &t[3], &cfg, 10.0, &mut substream(3, &[]))
        .unwrap()
        .values;
    let pair = PairLikelihood::new(z, &cfg).unwrap();
    let w = pair_weights(
        &pair,
        &ParticleSet::anchor(&t[0], 50),
        &ParticleSet::anchor(&t[3], 50),
        &cfg,
    )
    .unwrap();
    assert!(w.iter().all(|&x| (x - 1.0 / 50.0).abs() < 1e-15));
}

#[test]
fn noiseless_truth_particle_takes_all_weight() {
    let cfg = small_array();
    let t = truths();
    let z = synthesize_observation(&t[1], &t[0], &cfg, f64::INFINITY, &mut substream(4, &[]))
        .unwrap()
        .values;
    let pair = PairLikelihood::new(z, &cfg).unwrap();
    let bounds = Bounds::around(&t[1].to_vector(), &StateVector::repeat(0.5)).unwrap();
    let mut rx = ParticleSet::uniform(&bounds, 64, &mut substream(4, &[1]));
    rx.particles[17] = t[1].to_vector();
    let tx = ParticleSet::anchor(&t[0], 64);
    let w = pair_weights(&pair, &rx, &tx, &cfg).unwrap();
    assert!(w[17] > 1.0 - 1e-9, "{}", w[17]);
}

#[test]
fn both_link_directions_enter_the_agent() {
    let cfg = small_array();
    let t = &truths()[..2];
    let mut obs = synthesize_all_pairs(t, &cfg, 10.0, &mut substream(5, &[])).unwrap();
    let nodes = vec![
        Node::Anchor(t[0]),
        Node::Agent(Bounds::around(&t[1].to_vector(), &StateVector::repeat(0.2)).unwrap()),
    ];
    let bp = BpConfig {
        n_particles: 100,
        n_iterations: 2,
        ..BpConfig::default()
    };
    let base = run_loopy_bp(&nodes, &obs, &cfg, &bp, 1).unwrap();
    // replacing either direction's observation changes the result
    for k in 0..2 {
        let mut changed = obs.clone();
        changed[k].values.iter_mut().for_each(|v| *v = v.conj());
        assert_ne!(
            run_loopy_bp(&nodes, &changed, &cfg, &bp, 1)
                .unwrap()
                .iterations,
            base.iterations
        );
    }
    obs.remove(1);
    assert!(run_loopy_bp(&nodes, &obs, &cfg, &bp, 1).is_err());
}

#[test]
fn initial_sets_follow_roles() {
    let t = truths();
    let b = Bounds::around(&t[1].to_vector(), &StateVector::repeat(0.5)).unwrap();
    let sets = init_particles(&[Node::Anchor(t[0]), Node::Agent(b)], 100, 3);
    assert_eq!(sets[0].role, Role::Anchor);
    assert_eq!(sets[1].role, Role::Agent);
    assert!(sets[1].particles.iter().all(|x| b.contains(x)));
    assert!((sets[1].weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn log_weights_ignore_constant_shifts(
        raw in prop::collection::vec(-50.0f64..50.0, 1..40),
        shift in -1e3f64..1e3,
    ) {
        let a = normalize_log_weights(&raw).unwrap();
        let shifted: Vec<f64> = raw.iter().map(|v| v + shift).collect();
        let b = normalize_log_weights(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn covariance_is_symmetric_psd(seed in 0u64..1000, n in 2usize..200) {
        use rand::Rng;
        let mut rng = substream(seed, &[]);
        let xs: Vec<StateVector> = (0..n).map(|_| StateVector::from_fn(|_, _| rng.random::<f64>() * 10.0 - 5.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let c = BeliefSummary::from_weighted(&xs, &w).covariance;
        prop_assert!((c - c.transpose()).amax() <= 1e-10);
        let eig = c.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&e| e >= -1e-10));
    }
}
