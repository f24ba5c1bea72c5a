//! Regenerates the files under `tests/fixtures`.
//!
//! ```text
//! cargo run -p spikeforge-cli --example make_fixtures
//! ```

use std::path::{Path, PathBuf};

use spikeforge::container::{write_network, write_tensor};
use spikeforge::engine::argmax;
use spikeforge::fixture::{make_inputs, make_network, make_raw_inputs, FixtureOptions, Preset};
use spikeforge::{ann_forward, ann_trace, NetworkSpec, Tensor, VrConfig};

/// Sets the classifier bias to cancel the mean feature response on `x`, so
/// predictions depend on the input rather than on one dominant class.
fn center_head(mut net: NetworkSpec, x: &Tensor) -> NetworkSpec {
    let folded = net.fold_batchnorm().expect("fixture batch norm folds");
    let trace = ann_trace(&folded, x, &net.cfg()).expect("fixture runs");
    let features = &trace[trace.len() - 2];
    let len = features.sample_len();
    let mut mean = vec![0.0; len];
    for row in features.data().chunks(len) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / features.batch() as f64;
        }
    }
    let head = net.layers_mut().last_mut().expect("non-empty");
    let w = head.weights.data();
    head.bias = w
        .chunks(len)
        .map(|row| -row.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    net
}

fn labels(net: &NetworkSpec, x: &Tensor) -> Vec<usize> {
    let folded = net.fold_batchnorm().expect("fixture batch norm folds");
    argmax(&ann_forward(&folded, x, &net.cfg()).expect("fixture runs"))
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).expect("fixture directory");
    let at = |name: &str| -> PathBuf { Path::new(&dir).join(name) };

    let cfg8 = VrConfig::new(8, 0, 8).unwrap();
    let vgg = make_network(
        1,
        cfg8,
        FixtureOptions {
            preset: Preset::VggTiny,
            with_bn: true,
            ..FixtureOptions::default()
        },
    );
    let x = make_inputs(1, 12, 1, &cfg8);
    let vgg = center_head(vgg, &x);
    write_network(&vgg, &at("vgg_tiny.toml")).unwrap();
    write_tensor(&x, &at("inputs.toml"), Some(&labels(&vgg, &x))).unwrap();
    write_tensor(&make_inputs(2, 8, 1, &cfg8), &at("calib.toml"), None).unwrap();
    write_tensor(&Tensor::zeros([0, 1, 8, 8]), &at("empty.toml"), None).unwrap();
    write_tensor(&Tensor::zeros([2, 1, 8, 8]), &at("zeros.toml"), None).unwrap();

    let cfg10 = VrConfig::new(10, 0, 8).unwrap();
    let conv = make_network(
        2,
        cfg10,
        FixtureOptions {
            preset: Preset::Conv,
            ..FixtureOptions::default()
        },
    );
    let x = make_inputs(3, 12, 1, &cfg10);
    let conv = center_head(conv, &x);
    write_network(&conv, &at("conv.toml")).unwrap();
    write_tensor(&x, &at("inputs_tq10.toml"), Some(&labels(&conv, &x))).unwrap();

    let cfg4 = VrConfig::new(4, 0, 4).unwrap();
    let expanded = make_network(
        3,
        cfg4,
        FixtureOptions {
            preset: Preset::Dense,
            in_channels: 3,
            ..FixtureOptions::default()
        },
    );
    write_network(&expanded, &at("ice_dense.toml")).unwrap();
    write_tensor(&make_raw_inputs(4, 6, 1), &at("raw.toml"), None).unwrap();
}
