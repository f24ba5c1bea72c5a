//! End-to-end acceptance checks, run as a plain binary so the results are
//! always printed. Each check prints one line:
//!
//! ```text
//! acceptance criterion=<name> result=PASS|FAIL <details>
//! ```

#![allow(clippy::needless_range_loop)]

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikeforge::ctt::if_asg_agreement;
use spikeforge::engine::{
    argmax, asg_layer, asg_network_trace, asg_sequence, if_sequence, NetworkTrace,
};
use spikeforge::fixture::{make_inputs, make_network, make_raw_inputs, FixtureOptions, Preset};
use spikeforge::raster::{count_raster, write_raster};
use spikeforge::stats::{spike_report, LayerStats, SpikeStats};
use spikeforge::tensor::{avgpool_forward, conv2d_forward, dense_forward};
use spikeforge::{
    ann_trace, convert_network, convert_weights, ctt_train, encode_input, ice_expand,
    layer_threshold, CttConfig, IceConfig, LayerGeometry, SpikeTrain, Tensor, VrConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn sweep() -> Vec<VrConfig> {
    let mut cfgs = Vec::new();
    for t_q in [4u32, 8, 16] {
        for t_min in [0, t_q / 4] {
            for t_max in t_q / 2..=t_q {
                cfgs.push(VrConfig::new(t_q, t_min, t_max).unwrap());
            }
        }
    }
    cfgs
}

fn exactness(stats_ok: &mut Vec<bool>) -> Outcome {
    let cfgs = sweep();
    let per_cfg = 6;
    let batch = 8;
    let mut nets = 0;
    let mut activations = 0u64;
    let mut mismatched = 0u64;
    let mut samples = 0u64;
    let mut disagreements = 0u64;
    for (k, cfg) in cfgs.iter().enumerate() {
        for j in 0..per_cfg {
            let seed = (k * per_cfg + j) as u64;
            let opts = FixtureOptions {
                preset: Preset::ALL[j % 3],
                in_channels: 1 + j % 2,
                classes: 10,
                with_bn: j % 2 == 1,
            };
            let ann = make_network(seed, *cfg, opts).fold_batchnorm().unwrap();
            let snn = convert_network(&ann).unwrap();
            let x = make_inputs(seed, batch, opts.in_channels, cfg);
            let reference = ann_trace(&ann, &x, cfg).unwrap();
            let trace = asg_network_trace(&snn, &encode_input(&x, cfg).unwrap()).unwrap();
            for i in snn.spiking_layers() {
                let got = trace.decoded(i, cfg);
                activations += got.len() as u64;
                mismatched += got
                    .data()
                    .iter()
                    .zip(reference[i].data())
                    .filter(|(a, b)| a != b)
                    .count() as u64;
            }
            let want = argmax(reference.last().unwrap());
            let got = argmax(&trace.logits);
            samples += want.len() as u64;
            disagreements += want.iter().zip(&got).filter(|(a, b)| a != b).count() as u64;
            stats_ok.push(report_totals_match(&trace));
            nets += 1;
        }
    }
    outcome(
        nets >= 200 && mismatched == 0 && disagreements == 0,
        format!(
            "nets={nets} configs={} activations={activations} mismatched={mismatched} \
             samples={samples} argmax_disagreements={disagreements}",
            cfgs.len()
        ),
    )
}

fn report_totals_match(trace: &NetworkTrace) -> bool {
    let report = spike_report(&trace.stats, 1.0);
    let fired: u64 = report.layers.iter().map(|l| l.fired).sum();
    let slots: u64 = report.layers.iter().map(|l| l.slots).sum();
    let direct: u64 = trace.trains.iter().map(SpikeTrain::fired).sum();
    report.total.fired == fired && report.total.slots == slots && fired == direct
}

fn worked_example() -> Outcome {
    let v = [0.1, 0.2, 0.5, 0.8, 0.9];
    let iff = if_sequence(&v, 1.0).unwrap();
    let asg = asg_sequence(&v, 1.0).unwrap();
    outcome(
        iff == [0, 0, 0, 1, 1] && asg == [0, 1, 0, 1, 0],
        format!("if={iff:?} asg={asg:?}"),
    )
}

fn conversion_constants() -> Outcome {
    let cfg = VrConfig::new(10, 0, 8).unwrap();
    let theta = layer_threshold(&cfg);
    let w = Tensor::new([1, 1, 1, 1], vec![1.0]).unwrap();
    let scale = convert_weights(&w, &cfg).data()[0];
    outcome(
        theta == 0.8 && scale == 0.8,
        format!("theta={theta} scale={scale}"),
    )
}

fn prefix_violations(avg: f64, theta: f64, window: usize, expected: impl Fn(usize) -> i64) -> u64 {
    let seq = asg_sequence(&vec![avg; window], theta).unwrap();
    let mut cum = 0i64;
    let mut bad = 0;
    for (t, &s) in seq.iter().enumerate() {
        cum += s as i64;
        if cum != expected(t + 1) {
            bad += 1;
        }
    }
    bad
}

fn prefix_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut violations = 0u64;
    let random = 100_000;
    for _ in 0..random {
        let theta: f64 = rng.gen_range(0.05..4.0);
        let a: f64 = rng.gen_range(-0.5..1.5) * theta;
        let window = rng.gen_range(1..=64usize);
        violations += prefix_violations(a, theta, window, |t| {
            ((t as f64 * a / theta).floor() as i64).clamp(0, t as i64)
        });
    }
    let mut grid = 0u64;
    for q in 1..=32i64 {
        for p in 0..=32i64 {
            for theta in [1.0, 0.8, 0.3] {
                let a = p as f64 / q as f64 * theta;
                for window in 1..=64usize {
                    grid += 1;
                    violations +=
                        prefix_violations(a, theta, window, |t| (t as i64 * p / q).min(t as i64));
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("random_triples={random} grid_cases={grid} violations={violations}"),
    )
}

fn permutation_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let trials = 10_000;
    let mut changed = 0;
    for _ in 0..trials {
        let window = rng.gen_range(2..=16usize);
        let features = rng.gen_range(1..=12usize);
        let out = rng.gen_range(1..=4usize);
        let geometry = LayerGeometry::dense(features, out);
        let w = Tensor::from_fn(geometry.weight_shape(), |_| rng.gen_range(-1.0..1.0)).unwrap();
        let c: Vec<f64> = (0..out).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let bits = (0..window * features).map(|_| rng.gen_bool(0.4)).collect();
        let train = SpikeTrain::from_bits(window, [1, features, 1, 1], bits).unwrap();
        let mut perm: Vec<usize> = (0..window).collect();
        perm.shuffle(&mut rng);
        let theta = rng.gen_range(0.2..2.0);
        let a = asg_layer(&train, &w, &c, theta, &geometry).unwrap();
        let b = asg_layer(
            &train.permute_time(&perm).unwrap(),
            &w,
            &c,
            theta,
            &geometry,
        )
        .unwrap();
        if a != b {
            changed += 1;
        }
    }
    outcome(
        changed == 0,
        format!("permutations={trials} changed={changed}"),
    )
}

fn ctt_improvement() -> Outcome {
    let cfgs = [
        VrConfig::new(16, 0, 16).unwrap(),
        VrConfig::new(20, 4, 20).unwrap(),
    ];
    let nets = 20;
    let mut improved = 0;
    let mut kept_agreement = 0;
    let mut already_matched = 0;
    let (mut loss0, mut loss1, mut agree0, mut agree1) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..nets {
        let cfg = cfgs[seed % 2];
        let opts = FixtureOptions {
            preset: Preset::ALL[seed % 3],
            in_channels: 1,
            classes: 10,
            with_bn: seed % 4 < 2,
        };
        let ann = make_network(100 + seed as u64, cfg, opts)
            .fold_batchnorm()
            .unwrap();
        let mut snn = convert_network(&ann).unwrap();
        let calib: Vec<Tensor> = (0..4)
            .map(|k| make_inputs(1000 + 10 * seed as u64 + k, 4, 1, &cfg))
            .collect();
        let held_out: Vec<Tensor> = (0..4)
            .map(|k| make_inputs(5000 + 10 * seed as u64 + k, 8, 1, &cfg))
            .collect();
        let before = if_asg_agreement(&snn, &held_out).unwrap();
        let out = ctt_train(&mut snn, &calib, &CttConfig::default()).unwrap();
        let after = if_asg_agreement(&snn, &held_out).unwrap();
        let (l0, l1) = (out.initial_mean_abs_loss, out.final_mean_abs_loss);
        if l1 < l0 || (l0 == 0.0 && l1 == 0.0) {
            improved += 1;
        }
        if l0 == 0.0 {
            already_matched += 1;
        }
        if after >= before {
            kept_agreement += 1;
        }
        loss0 += out.initial_mean_abs_loss;
        loss1 += out.final_mean_abs_loss;
        agree0 += before;
        agree1 += after;
    }
    let n = nets as f64;
    outcome(
        improved == nets && loss1 < loss0 && agree1 >= agree0,
        format!(
            "nets={nets} loss_decreased_or_zero={improved} already_matched={already_matched} \
             per_net_agreement_kept={kept_agreement} \
             mean_abs_loss_before={:.4} mean_abs_loss_after={:.4} \
             agreement_before={:.4} agreement_after={:.4} agreement_delta={:+.4}",
            loss0 / n,
            loss1 / n,
            agree0 / n,
            agree1 / n,
            (agree1 - agree0) / n
        ),
    )
}

fn ice_traces() -> Outcome {
    let scalar = |v| Tensor::new([1, 1, 1, 1], vec![v]).unwrap();
    let t2 = IceConfig::new(1, 2).unwrap();
    let a = ice_expand(&scalar(0.5), &t2).unwrap();
    let b = ice_expand(&scalar(0.4), &t2).unwrap();
    let traces = a.data() == [0.5, 0.5, 0.0] && b.data() == [0.0, 0.5, 0.0];

    let mut counts_ok = true;
    for phi in 1..=3 {
        for channels in 1..=3 {
            let cfg = IceConfig::new(phi, 4).unwrap();
            let x = make_raw_inputs(phi as u64, 1, channels);
            counts_ok &= ice_expand(&x, &cfg).unwrap().channels() == 3 * phi * channels;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let scanned = 10_000;
    let mut off_grid = 0;
    for _ in 0..scanned {
        let window = rng.gen_range(1..=32usize);
        let mut cfg = IceConfig::new(rng.gen_range(1..=3), window).unwrap();
        cfg.varied_levels = rng.gen_bool(0.5);
        let x = Tensor::from_fn([1, 2, 1, 1], |_| rng.gen_range(0.0..=1.0)).unwrap();
        let y = ice_expand(&x, &cfg).unwrap();
        let t = window as f64;
        off_grid += y
            .data()
            .iter()
            .filter(|&&v| !(0.0..=1.0).contains(&v) || (v * t).round() / t != v)
            .count();
    }
    outcome(
        traces && counts_ok && off_grid == 0,
        format!(
            "x0.5={:?} x0.4={:?} channel_counts_ok={counts_ok} scanned={scanned} off_grid={off_grid}",
            a.data(),
            b.data()
        ),
    )
}

fn spike_accounting(fixture_totals: &[bool]) -> Outcome {
    let (fired, slots) = (476_035usize, 4_169_728usize);
    let window = 8;
    let shape = [1, 509, 32, 32];
    let mut bits = vec![false; slots];
    bits[..fired].fill(true);
    bits.shuffle(&mut ChaCha8Rng::seed_from_u64(14));
    let train = SpikeTrain::from_bits(window, shape, bits).unwrap();
    let mut dump = Vec::new();
    write_raster(&mut dump, &train).unwrap();
    let counted = count_raster(&dump).unwrap();
    let stats = SpikeStats {
        layers: counted
            .iter()
            .enumerate()
            .map(|(i, &(fired, slots))| LayerStats {
                name: format!("layer{i}"),
                fired,
                slots,
            })
            .collect(),
    };
    let report = spike_report(&stats, 1.0);
    let pct = report.total.ratio * 100.0;
    let within = (pct - 11.4).abs() <= 0.05;
    let totals_ok = fixture_totals.iter().all(|&b| b);
    outcome(
        within && report.total.fired == fired as u64 && totals_ok,
        format!(
            "fired={} slots={} ratio_pct={pct:.4} fixture_runs={} totals_match={totals_ok}",
            report.total.fired,
            report.total.slots,
            fixture_totals.len()
        ),
    )
}

fn truncation_witness() -> Outcome {
    let late = SpikeTrain::from_sequence(&[0, 0, 0, 1, 1]).unwrap();
    let even = SpikeTrain::from_sequence(&[0, 1, 0, 1, 0]).unwrap();
    let a = late.truncate(2).unwrap().fired();
    let b = even.truncate(2).unwrap().fired();
    outcome(a == 0 && b == 1, format!("late_first2={a} even_first2={b}"))
}

fn naive_conv(x: &Tensor, w: &Tensor, b: &[f64], g: &LayerGeometry) -> Vec<f64> {
    let [n, c, h, wd] = x.shape();
    let (k, s, p) = (g.kernel, g.stride, g.padding);
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (wd + 2 * p - k) / s + 1;
    let mut out = Vec::new();
    for ni in 0..n {
        for o in 0..g.out_channels {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b[o];
                    for ci in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let (y, xx) = (
                                    (i * s + ki) as isize - p as isize,
                                    (j * s + kj) as isize - p as isize,
                                );
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                    acc +=
                                        w.at(o, ci, ki, kj) * x.at(ni, ci, y as usize, xx as usize);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn naive_pool(x: &Tensor, k: usize, s: usize) -> Vec<f64> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
    let mut out = Vec::new();
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for a in 0..k {
                        for b in 0..k {
                            acc += x.at(ni, ci, i * s + a, j * s + b);
                        }
                    }
                    out.push(acc / (k * k) as f64);
                }
            }
        }
    }
    out
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn kernel_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cases = 1000;
    let (mut conv, mut dense, mut pool) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cases {
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=3);
        let oc = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=3);
        let s = rng.gen_range(1..=2);
        let p = rng.gen_range(0..=1);
        let h = rng.gen_range(k..=7);
        let w = rng.gen_range(k..=7);
        let g = LayerGeometry::conv2d(c, oc, k, s, p);
        let x = Tensor::from_fn([n, c, h, w], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let wt = Tensor::from_fn(g.weight_shape(), |_| rng.gen_range(-1.0..1.0)).unwrap();
        let b: Vec<f64> = (0..oc).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = conv2d_forward(&x, &wt, &b, &g).unwrap();
        conv = conv.max(max_err(got.data(), &naive_conv(&x, &wt, &b, &g)));

        let fin = c * h * w;
        let out = rng.gen_range(1..=6);
        let dw = Tensor::from_fn([out, fin, 1, 1], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let db: Vec<f64> = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = dense_forward(&x, &dw, &db).unwrap();
        let mut want = Vec::new();
        for ni in 0..n {
            for o in 0..out {
                let mut acc = db[o];
                for f in 0..fin {
                    acc += dw.data()[o * fin + f] * x.data()[ni * fin + f];
                }
                want.push(acc);
            }
        }
        dense = dense.max(max_err(got.data(), &want));

        let pk = rng.gen_range(1..=h.min(w).min(3));
        let ps = rng.gen_range(1..=2);
        let got = avgpool_forward(&x, pk, ps).unwrap();
        pool = pool.max(max_err(got.data(), &naive_pool(&x, pk, ps)));
    }
    let tol = 1e-12;
    outcome(
        conv <= tol && dense <= tol && pool <= tol,
        format!(
            "cases={cases} conv_max_err={conv:e} dense_max_err={dense:e} avgpool_max_err={pool:e}"
        ),
    )
}

fn main() {
    let mut fixture_totals = Vec::new();
    let mut failed = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "acceptance criterion={name} result={} seconds={:.2} {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(name.to_string());
        }
    };
    run("exactness", &mut || exactness(&mut fixture_totals));
    run("worked-example", &mut worked_example);
    run("conversion-constants", &mut conversion_constants);
    run("prefix-law", &mut prefix_law);
    run("permutation-invariance", &mut permutation_invariance);
    run("ctt-improvement", &mut ctt_improvement);
    run("ice-traces", &mut ice_traces);
    run("spike-accounting", &mut || {
        spike_accounting(&fixture_totals)
    });
    run("truncation-witness", &mut truncation_witness);
    run("kernel-oracles", &mut kernel_oracles);
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
