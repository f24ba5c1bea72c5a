use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikeforge::engine::{
    asg_layer_with, asg_network_trace, asg_sequence, if_layer, if_network_trace, AsgOptions,
};
use spikeforge::fixture::{make_inputs, make_network, FixtureOptions, Preset};
use spikeforge::{
    ann_trace, asg_layer, convert_network, encode_input, Error, Layer, LayerGeometry, SpikeTrain,
    Tensor, VrConfig,
};

fn cfg_strategy() -> impl Strategy<Value = VrConfig> {
    (2u32..=16)
        .prop_flat_map(|t_q| (Just(t_q), 0..=t_q / 4))
        .prop_flat_map(|(t_q, t_min)| (Just(t_q), Just(t_min), (t_min + 1).max(t_q / 2)..=t_q))
        .prop_map(|(q, lo, hi)| VrConfig::new(q, lo, hi).unwrap())
}

fn random_train(rng: &mut ChaCha8Rng, window: usize, features: usize) -> SpikeTrain {
    let bits = (0..window * features).map(|_| rng.gen_bool(0.5)).collect();
    SpikeTrain::from_bits(window, [1, features, 1, 1], bits).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn converted_network_reproduces_quantized_ann(
        cfg in cfg_strategy(),
        seed in 0u64..1_000_000,
        preset in 0usize..3,
        with_bn in any::<bool>(),
    ) {
        let opts = FixtureOptions { preset: Preset::ALL[preset], in_channels: 1, classes: 5, with_bn };
        let ann = make_network(seed, cfg, opts).fold_batchnorm().unwrap();
        let snn = convert_network(&ann).unwrap();
        let x = make_inputs(seed, 2, 1, &cfg);
        let reference = ann_trace(&ann, &x, &cfg).unwrap();
        let trace = asg_network_trace(&snn, &encode_input(&x, &cfg).unwrap()).unwrap();
        for i in snn.spiking_layers() {
            prop_assert_eq!(&trace.decoded(i, &cfg), &reference[i]);
        }
        let logits = reference.last().unwrap();
        for (a, b) in trace.logits.data().iter().zip(logits.data()) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn asg_prefix_law(a in -2.0f64..3.0, theta in 0.05f64..4.0, window in 1usize..64) {
        let seq = asg_sequence(&vec![a; window], theta).unwrap();
        let mut cum = 0i64;
        for (t, &s) in seq.iter().enumerate() {
            cum += s as i64;
            let steps = (t + 1) as i64;
            let want = (((t + 1) as f64 * a / theta).floor() as i64).clamp(0, steps);
            prop_assert_eq!(cum, want);
        }
    }

    #[test]
    fn encoded_inputs_follow_the_prefix_law(cfg in cfg_strategy(), level in 0u32..=16) {
        let level = cfg.t_min() + level % (cfg.window() as u32 + 1);
        let x = Tensor::new([1, 1, 1, 1], vec![cfg.grid_value(level)]).unwrap();
        let train = encode_input(&x, &cfg).unwrap();
        let count = (level - cfg.t_min()) as usize;
        let window = cfg.window();
        let mut cum = 0;
        for t in 0..window {
            cum += train.get(t, 0) as usize;
            prop_assert_eq!(cum, (t + 1) * count / window);
        }
    }
}

#[test]
fn asg_ignores_input_spike_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let window = rng.gen_range(2..=12);
        let g = LayerGeometry::dense(6, 3);
        let w = Tensor::from_fn(g.weight_shape(), |_| rng.gen_range(-1.0..1.0)).unwrap();
        let c = vec![0.05, -0.1, 0.2];
        let train = random_train(&mut rng, window, 6);
        let mut perm: Vec<usize> = (0..window).collect();
        perm.reverse();
        perm.rotate_left(rng.gen_range(0..window));
        let a = asg_layer(&train, &w, &c, 0.7, &g).unwrap();
        let b = asg_layer(&train.permute_time(&perm).unwrap(), &w, &c, 0.7, &g).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn merged_division_matches_explicit_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let merged = AsgOptions {
        merged_division: true,
    };
    for _ in 0..500 {
        let window = rng.gen_range(1..=16);
        let g = LayerGeometry::dense(8, 4);
        let w = Tensor::from_fn(g.weight_shape(), |_| rng.gen_range(-1.0..1.0)).unwrap();
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let train = random_train(&mut rng, window, 8);
        let theta = rng.gen_range(0.2..1.5);
        let explicit = asg_layer_with(&train, &w, &c, theta, &g, AsgOptions::default()).unwrap();
        let folded = asg_layer_with(&train, &w, &c, theta, &g, merged).unwrap();
        assert_eq!(explicit, folded);
    }
}

#[test]
fn if_and_asg_totals_agree_on_even_input() {
    let cfg = VrConfig::new(8, 0, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let x = make_inputs(rng.gen(), 1, 1, &cfg);
        let train = encode_input(&x, &cfg).unwrap();
        let g = LayerGeometry::dense(x.sample_len(), 4);
        // nonnegative weights keep the per-step potential in [0, theta)
        let w = Tensor::from_fn(g.weight_shape(), |_| rng.gen_range(0.0..0.9 / 64.0)).unwrap();
        let mut layer = Layer::new(g, w.clone(), vec![0.0; 4]);
        layer.step_constant = Some(vec![0.0; 4]);
        let theta = cfg.theta();
        let iff = if_layer(&train, &layer, &[theta; 4]).unwrap();
        let asg = asg_layer(&train, &w, &[0.0; 4], theta, &g).unwrap();
        assert_eq!(iff.counts(), asg.counts());
    }
}

#[test]
fn if_network_is_causal() {
    let cfg = VrConfig::new(8, 0, 8).unwrap();
    let opts = FixtureOptions::default();
    let snn = convert_network(&make_network(5, cfg, opts)).unwrap();
    let x = make_inputs(5, 1, 1, &cfg);
    let train = encode_input(&x, &cfg).unwrap();
    let full = if_network_trace(&snn, &train).unwrap();
    // flipping the last input step cannot change any earlier output step
    let mut late = train.clone();
    let last = late.window() - 1;
    for e in 0..late.plane_len() {
        let v = late.get(last, e);
        late.set(last, e, !v);
    }
    let other = if_network_trace(&snn, &late).unwrap();
    for (a, b) in full.trains.iter().zip(&other.trains).skip(1) {
        assert_eq!(a.truncate(last).unwrap(), b.truncate(last).unwrap());
    }
}

#[test]
fn off_grid_inputs_are_rejected() {
    let cfg = VrConfig::new(8, 2, 8).unwrap();
    let x = Tensor::new([1, 1, 1, 2], vec![0.5, 0.3]).unwrap();
    match encode_input(&x, &cfg) {
        Err(Error::OffGrid { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected off-grid error, got {other:?}"),
    }
    let below = Tensor::new([1, 1, 1, 1], vec![0.125]).unwrap();
    assert!(encode_input(&below, &cfg).is_err());
}
