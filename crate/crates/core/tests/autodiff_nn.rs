use licfg::autodiff::{fd_check, LeafKind, Tape};
use licfg::cfg::{penalty_term, Penalty, PenaltyKind};
use licfg::nn::checkpoint::{decode, encode};
use licfg::nn::{mlp_forward, mlp_init, Activation, MlpParams};
use licfg::tensor::Tensor;
use proptest::prelude::*;

fn arch() -> impl Strategy<Value = Vec<usize>> {
    (1usize..4, prop::collection::vec(2usize..6, 1..3)).prop_map(|(d, hidden)| {
        let mut s = vec![d];
        s.extend(hidden);
        s.push(1);
        s
    })
}

fn params(sizes: &[usize], seed: u64) -> MlpParams {
    let zero = MlpParams::zeros(sizes, Activation::Tanh).unwrap();
    let flat: Vec<f64> = (0..zero.param_count())
        .map(|i| ((i as f64 + 1.0) * 0.754_877 + seed as f64 * 0.291).sin())
        .collect();
    MlpParams::from_flat(sizes, Activation::Tanh, &flat).unwrap()
}

fn points(rows: usize, cols: usize, phase: f64) -> Tensor {
    let data = (0..rows * cols).map(|i| 1.5 * (i as f64 * 1.37 + phase).cos()).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn penalty_parameter_gradients_match_differences(sizes in arch(), seed in 0u64..1000, kind in 0usize..3) {
        let d = params(&sizes, seed);
        let penalty = match kind {
            0 => Penalty::new(PenaltyKind::Centered1, 1.0).unwrap(),
            1 => Penalty::new(PenaltyKind::Centered0, 1.0).unwrap(),
            _ => Penalty::new(PenaltyKind::CenteredEps { eps_norm: 0.5 }, 1.0).unwrap(),
        };
        let mut tape = Tape::new();
        let vars = d.bind(&mut tape, LeafKind::Param);
        let term = penalty_term(&mut tape, &penalty, &vars, &points(4, sizes[0], seed as f64)).unwrap();
        let err = fd_check(&mut tape, term.value, 1, 1e-6).unwrap();
        prop_assert!(err <= 1e-4, "relative error {}", err);
    }

    #[test]
    fn hessian_vector_products_match_differences(sizes in arch(), seed in 0u64..1000) {
        let d = params(&sizes, seed);
        let mut tape = Tape::new();
        let vars = d.bind(&mut tape, LeafKind::Param);
        let x = tape.input(points(5, sizes[0], 0.3));
        let out = mlp_forward(&mut tape, &vars, x).unwrap();
        let sq = tape.square(out);
        let root = tape.sum(sq);
        let err = fd_check(&mut tape, root, 2, 1e-6).unwrap();
        prop_assert!(err <= 1e-4, "relative error {}", err);
    }

    #[test]
    fn checkpoints_round_trip(sizes in arch(), seed in 0u64..1000, relu in any::<bool>()) {
        let act = if relu { Activation::Relu } else { Activation::Tanh };
        let p = mlp_init(&sizes, act, seed).unwrap();
        let back = decode(&encode(&p)).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(encode(&back), encode(&p));
    }

    #[test]
    fn truncated_checkpoints_are_rejected(sizes in arch(), cut in 0.0f64..1.0) {
        let bytes = encode(&mlp_init(&sizes, Activation::Tanh, 3).unwrap());
        let n = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(decode(&bytes[..n.min(bytes.len() - 1)]).is_err());
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode(&bytes);
    }
}

#[test]
fn forward_matches_taped_forward() {
    let p = params(&[3, 7, 5, 2], 9);
    let x = points(11, 3, 1.0);
    let direct = p.forward(&x).unwrap();
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape, LeafKind::Constant);
    let xv = tape.input(x);
    let out = mlp_forward(&mut tape, &vars, xv).unwrap();
    assert!(direct.max_abs_diff(tape.value(out)) < 1e-14);
}
