use licfg::cfg::{
    functional_step, functional_update, train, Penalty, PenaltyKind, TrainConfig, TrainError,
};
use licfg::data::{read_points_csv, ring_mixture, sample_mixture, write_points_csv};
use licfg::nn::{mlp_init, Activation};
use licfg::tensor::Tensor;
use proptest::prelude::*;

fn short_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 6,
        n_update: 64,
        seed,
        snapshot_interval: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible_from_the_seed() {
    let a = train(&short_config(5), &ring_mixture()).unwrap();
    let b = train(&short_config(5), &ring_mixture()).unwrap();
    assert_eq!(a.generator, b.generator);
    assert_eq!(a.discriminator, b.discriminator);
    assert_eq!(a.log.records.len(), 6);
    assert_eq!(a.snapshots.len(), 2);
    let c = train(&short_config(6), &ring_mixture()).unwrap();
    assert_ne!(a.generator, c.generator);
}

#[test]
fn huge_eps_center_is_reported_as_divergence() {
    let mut cfg = short_config(0);
    cfg.penalty = Penalty::new(PenaltyKind::CenteredEps { eps_norm: 1e5 }, 1.0).unwrap();
    cfg.divergence_threshold = 10.0;
    match train(&cfg, &ring_mixture()) {
        Err(TrainError::Diverged { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.log.records.len())),
    }
}

#[test]
fn transport_composes_single_steps() {
    let d = mlp_init(&[2, 16, 1], Activation::Relu, 1).unwrap();
    let x = sample_mixture(&ring_mixture(), 50, 2);
    let mut y = x.clone();
    for _ in 0..4 {
        y = functional_step(&y, &d, 0.5, 0.25).unwrap();
    }
    assert_eq!(functional_update(&x, &d, 0.5, 0.25, 4).unwrap(), y);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epsilon_vector_has_the_requested_norm(eps in 1e-3f64..10.0, d in 1usize..64) {
        let p = Penalty::new(PenaltyKind::CenteredEps { eps_norm: eps }, 0.1).unwrap();
        let v = p.epsilon_vector(d);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - eps).abs() <= 1e-12 * eps.max(1.0));
        prop_assert!(v.iter().all(|&x| x > 0.0 && x == v[0]));
    }

    #[test]
    fn adjusted_norms_are_ordered(g in 0.0f64..10.0, eps in 1e-3f64..5.0) {
        let e = Penalty::new(PenaltyKind::CenteredEps { eps_norm: eps }, 0.1).unwrap();
        let z = Penalty::new(PenaltyKind::Centered0, 0.1).unwrap();
        let o = Penalty::new(PenaltyKind::Centered1, 0.1).unwrap();
        prop_assert!(e.adjusted_norm(g) > z.adjusted_norm(g));
        prop_assert_eq!(z.adjusted_norm(g) > o.adjusted_norm(g), g > 0.5);
    }

    #[test]
    fn points_csv_round_trips(rows in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..40)) {
        let t = Tensor::matrix(rows.len(), 2, rows.iter().flat_map(|&(a, b)| [a, b]).collect()).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &t).unwrap();
        let back = read_points_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rows(), t.rows());
        prop_assert_eq!(back.data(), t.data());
    }

    #[test]
    fn csv_reader_never_panics(text in ".{0,200}") {
        let _ = read_points_csv(text.as_bytes());
    }
}
