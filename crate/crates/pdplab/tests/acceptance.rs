//! Acceptance gate for the workspace: nine numbered criteria, one test
//! each. Every test prints exactly one `A# PASS`/`A# FAIL` summary line
//! (plus per-seed detail for the statistical criteria) and panics on
//! failure, so the suite doubles as a human-readable report:
//!
//! ```text
//! cargo test -p pdplab --test acceptance -- --test-threads=1 --nocapture
//! ```
//!
//! Criteria:
//!
//! * A1 - analytic gradients of both players' losses match central finite
//!   differences on reduced networks, 100 random draws.
//! * A2 - the gradient penalty and its parameter gradient match the closed
//!   form for a linear critic, and finite differences for a two-layer one.
//! * A3 - channel math closed forms: two-path binning, transfer-function
//!   round trip, normalization round trip.
//! * A4 - rerunning one manifest reproduces checkpoints, generated sets,
//!   and evaluation reports bit for bit (timing excluded).
//! * A5 - full-size parameter counts and a bitwise checkpoint round trip.
//! * A6 - desk-scale training convergence across 10 seeds.
//! * A7 - fine-tuning a pretrained model beats from-scratch training on a
//!   small shifted-decay target set across 10 paired seeds.
//! * A8 - metric sanity: self-comparisons, symmetry, noise monotonicity,
//!   CDF shape.
//! * A9 - a single optimizer step decreases each player's own loss.
//!
//! Runtime targets are informational: each line prints measured wall time
//! next to the target, but only the numerical criteria are asserted.

use std::time::Instant;

use pdplab::autodiff::Tape;
use pdplab::channel::{
    cir_to_pdp, ctf_to_pdp, denormalize, minmax_normalize, ChannelTransferFunction, Cir,
    DelayGrid, MultipathComponent, Pdp,
};
use pdplab::evaluation::{
    average_pdp, delay_spread_cdf, rmse, ssim_1d, ssim_cdf, total_powers, wasserstein_1d,
    Pairing, RmseDomain,
};
use pdplab::gan::{
    generate_pdps, load_checkpoint, sample_noise, save_checkpoint, wgan_gp_losses,
    AdamSnapshot, Checkpoint, DenseLayer, DiscriminatorNet, GanArchitecture, GeneratorNet,
    NoiseSpec,
};
use pdplab::fingerprint::fingerprint_json;
use pdplab::pipeline::{
    run_manifest, DatasetSource, EvalSettings, ExperimentManifest, GenerateSettings,
};
use pdplab::rng::RandomStream;
use pdplab::synth::{generate_dataset, DatasetSpec, StochasticChannelParams};
use pdplab::tensor::Tensor;
use pdplab::training::{
    adam_step, convergence_epoch, fine_tune, sgd_step, train, AdamConfig, BatchSize, SgdConfig,
    TrainConfig,
};

const LAMBDA: f64 = 10.0;

/// One criterion's scorecard: prints the single summary line and panics on
/// failure so the test harness records it.
struct Criterion {
    label: &'static str,
    target: &'static str,
    start: Instant,
}

impl Criterion {
    fn start(label: &'static str, target: &'static str) -> Self {
        Self { label, target, start: Instant::now() }
    }

    fn finish(self, ok: bool, detail: &str) {
        let secs = self.start.elapsed().as_secs_f64();
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "{} {verdict} ({secs:.1} s, target {}): {detail}",
            self.label, self.target
        );
        assert!(ok, "{} failed: {detail}", self.label);
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn uniform_rows(rng: &mut RandomStream, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| lo + (hi - lo) * rng.uniform()).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Both loss values for fixed inputs. The interpolation draws come from a
/// stream seeded with `eps_seed`, so repeated calls see identical mixing
/// coefficients -- the property finite differencing relies on.
fn loss_values(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    x: &Tensor,
    z: &Tensor,
    eps_seed: u64,
) -> (f64, f64) {
    let tape = Tape::new();
    let mut eps = RandomStream::from_seed(eps_seed);
    let lg = wgan_gp_losses(&tape, g, d, x, z, LAMBDA, &mut eps).unwrap();
    (tape.item(lg.d_loss).unwrap(), tape.item(lg.g_loss).unwrap())
}

/// Loss values plus flattened per-parameter gradients for both players.
fn losses_and_grads(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    x: &Tensor,
    z: &Tensor,
    eps_seed: u64,
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let tape = Tape::new();
    let mut eps = RandomStream::from_seed(eps_seed);
    let lg = wgan_gp_losses(&tape, g, d, x, z, LAMBDA, &mut eps).unwrap();
    let g_grads = tape.gradients(lg.g_loss, &lg.g_params.nodes).unwrap();
    let d_grads = tape.gradients(lg.d_loss, &lg.d_params.nodes).unwrap();
    let flatten = |ids: &[pdplab::autodiff::NodeId]| {
        ids.iter().flat_map(|&id| tape.value(id).data().to_vec()).collect::<Vec<f64>>()
    };
    (
        tape.item(lg.d_loss).unwrap(),
        tape.item(lg.g_loss).unwrap(),
        flatten(&g_grads),
        flatten(&d_grads),
    )
}

fn flat_param_len(layers: &[DenseLayer]) -> usize {
    layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
}

/// Copy of `layers` with one scalar parameter (flat weight-then-bias order,
/// matching the gradient flattening above) shifted by `delta`.
fn nudged(layers: &[DenseLayer], flat: usize, delta: f64) -> Vec<DenseLayer> {
    let mut out = layers.to_vec();
    let mut idx = flat;
    for layer in &mut out {
        let w = layer.weight.len();
        if idx < w {
            layer.weight.data_mut()[idx] += delta;
            return out;
        }
        idx -= w;
        let b = layer.bias.len();
        if idx < b {
            layer.bias.data_mut()[idx] += delta;
            return out;
        }
        idx -= b;
    }
    panic!("flat parameter index {flat} out of range");
}

/// Relative error with a floor, so near-zero pairs are judged on absolute
/// scale instead of an exploding quotient.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Smallest |preactivation| over all hidden layers of a leaky-ReLU stack.
/// Gradient checks reject draws where this is tiny: a kink within the
/// finite-difference step h of an evaluation point invalidates the check.
fn min_hidden_preact(layers: &[DenseLayer], slope: f64, x: &Tensor) -> f64 {
    let mut cur = x.clone();
    let mut min_abs = f64::INFINITY;
    for layer in &layers[..layers.len() - 1] {
        let rows = cur.rows();
        let in_dim = layer.weight.rows();
        let out_dim = layer.weight.cols();
        let mut next = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let xr = cur.row_slice(r);
            for j in 0..out_dim {
                let mut pre = layer.bias.data()[j];
                for k in 0..in_dim {
                    pre += xr[k] * layer.weight.data()[k * out_dim + j];
                }
                min_abs = min_abs.min(pre.abs());
                next[r * out_dim + j] = if pre >= 0.0 { pre } else { slope * pre };
            }
        }
        cur = Tensor::from_vec(rows, out_dim, next).unwrap();
    }
    min_abs
}

/// The interpolated batch exactly as the loss assembly builds it: one
/// uniform mixing coefficient per row, rows in order.
fn interpolated_batch(x: &Tensor, fake: &Tensor, eps_seed: u64) -> Tensor {
    let mut eps = RandomStream::from_seed(eps_seed);
    let mut data = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        let e = eps.uniform();
        for (xr, xf) in x.row_slice(r).iter().zip(fake.row_slice(r)) {
            data.push(e * xr + (1.0 - e) * xf);
        }
    }
    Tensor::from_vec(x.rows(), x.cols(), data).unwrap()
}

fn mut_param_refs(layers: &mut [DenseLayer]) -> Vec<&mut Tensor> {
    layers
        .iter_mut()
        .flat_map(|DenseLayer { weight, bias }| [weight, bias])
        .collect()
}

fn zeros_like_params(layers: &[DenseLayer]) -> Vec<Tensor> {
    layers
        .iter()
        .flat_map(|l| {
            [
                Tensor::zeros(l.weight.rows(), l.weight.cols()),
                Tensor::zeros(l.bias.rows(), l.bias.cols()),
            ]
        })
        .collect()
}

fn tensors_bitwise_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() && a.data() == b.data()
}

// ---------------------------------------------------------------------------
// A1: finite-difference gradient checks
// ---------------------------------------------------------------------------

#[test]
fn a1_analytic_gradients_match_finite_differences() {
    let crit = Criterion::start("A1", "60 s");
    let arch = GanArchitecture {
        noise_dim: 8,
        generator_hidden: vec![8, 8, 8, 8],
        pdp_len: 16,
        discriminator_hidden: vec![8, 8, 8, 8],
        leaky_slope: 0.2,
    };
    let noise = NoiseSpec { dim: 8, sigma: 1.0 };
    let batch = 4;
    let h = 1e-5;
    let tol = 1e-5;
    let trials = 100;

    let mut max_rel: f64 = 0.0;
    let mut redraws = 0;
    let mut failure: Option<String> = None;

    'trials: for t in 0..trials {
        // Redraw until every hidden preactivation sits clear of the
        // leaky-ReLU kink. A parameter nudge of h moves preactivations by
        // O(h) (activations and layer Jacobians are O(1) at this scale), so
        // a clearance of 20h makes every perturbed pass one-sided. Deep
        // layers of freshly initialized nets have preactivations of order
        // 0.1, and several hundred are sampled per draw, so a much larger
        // clearance would reject almost every draw.
        let clearance_floor = 2e-4;
        let mut attempt = 0u64;
        let (g, d, x, z, eps_seed) = loop {
            let seed = 41_000 + t as u64 * 131 + attempt * 1_000_003;
            let mut rng = RandomStream::from_seed(seed);
            let g = GeneratorNet::init(&arch, &mut rng).unwrap();
            let d = DiscriminatorNet::init(&arch, &mut rng).unwrap();
            let z = sample_noise(&noise, batch, &mut rng).unwrap();
            let x = uniform_rows(&mut rng, batch, arch.pdp_len, 0.05, 0.95);
            let eps_seed = seed ^ 0x0EF5;

            let fake = g.forward(&z).unwrap();
            let x_tilde = interpolated_batch(&x, &fake, eps_seed);
            let clearance = min_hidden_preact(&g.layers, g.slope, &z)
                .min(min_hidden_preact(&d.layers, d.slope, &fake))
                .min(min_hidden_preact(&d.layers, d.slope, &x))
                .min(min_hidden_preact(&d.layers, d.slope, &x_tilde));
            if clearance > clearance_floor {
                break (g, d, x, z, eps_seed);
            }
            redraws += 1;
            attempt += 1;
            assert!(attempt < 200, "no kink-free draw found for trial {t}");
        };

        let (_, _, g_grads, d_grads) = losses_and_grads(&g, &d, &x, &z, eps_seed);

        for flat in 0..flat_param_len(&d.layers) {
            let mut dp = d.clone();
            dp.layers = nudged(&d.layers, flat, h);
            let plus = loss_values(&g, &dp, &x, &z, eps_seed).0;
            dp.layers = nudged(&d.layers, flat, -h);
            let minus = loss_values(&g, &dp, &x, &z, eps_seed).0;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = rel_err(d_grads[flat], numeric);
            max_rel = max_rel.max(rel);
            if rel > tol {
                failure = Some(format!(
                    "trial {t}: critic-loss grad, critic param {flat}: analytic \
                     {:.6e} vs numeric {numeric:.6e} (rel {rel:.2e})",
                    d_grads[flat]
                ));
                break 'trials;
            }
        }
        for flat in 0..flat_param_len(&g.layers) {
            let mut gp = g.clone();
            gp.layers = nudged(&g.layers, flat, h);
            let plus = loss_values(&gp, &d, &x, &z, eps_seed).1;
            gp.layers = nudged(&g.layers, flat, -h);
            let minus = loss_values(&gp, &d, &x, &z, eps_seed).1;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = rel_err(g_grads[flat], numeric);
            max_rel = max_rel.max(rel);
            if rel > tol {
                failure = Some(format!(
                    "trial {t}: generator-loss grad, generator param {flat}: analytic \
                     {:.6e} vs numeric {numeric:.6e} (rel {rel:.2e})",
                    g_grads[flat]
                ));
                break 'trials;
            }
        }
    }

    let detail = match &failure {
        Some(f) => f.clone(),
        None => format!(
            "{trials} draws, every parameter of both losses checked, \
             max rel err {max_rel:.2e}, {redraws} kink redraws"
        ),
    };
    crit.finish(failure.is_none(), &detail);
}

// ---------------------------------------------------------------------------
// A2: gradient-penalty closed form and second-order check
// ---------------------------------------------------------------------------

#[test]
fn a2_gradient_penalty_closed_form_and_second_order() {
    let crit = Criterion::start("A2", "10 s");
    let mut rng = RandomStream::from_seed(4242);

    // Linear critic: D(x) = x.w + b has input gradient w on every row, so
    // the penalty collapses to lambda*(|w| - 1)^2 with parameter gradient
    // 2*lambda*(|w| - 1)*w/|w| and zero bias gradient.
    let dim = 16;
    let w = uniform_rows(&mut rng, dim, 1, -0.5, 0.5);
    let bias = Tensor::from_vec(1, 1, vec![0.2]).unwrap();
    let d_lin = DiscriminatorNet {
        layers: vec![DenseLayer { weight: w.clone(), bias }],
        slope: 0.2,
    };
    let x = uniform_rows(&mut rng, 8, dim, 0.0, 1.0);

    let tape = Tape::new();
    let params = d_lin.leaves(&tape);
    let x_leaf = tape.leaf(x.clone());
    let out = d_lin.forward_on_tape(&tape, &params, x_leaf).unwrap();
    let pen = tape.gradient_penalty(out, x_leaf, LAMBDA).unwrap();
    let value = tape.item(pen).unwrap();

    let norm = w.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let expect = LAMBDA * (norm - 1.0) * (norm - 1.0);
    let value_err = (value - expect).abs();

    let grads = tape.gradients(pen, &params.nodes).unwrap();
    let gw = tape.value(grads[0]);
    let gb = tape.value(grads[1]);
    let mut grad_err: f64 = 0.0;
    for (k, &wk) in w.data().iter().enumerate() {
        let expect_k = 2.0 * LAMBDA * (norm - 1.0) * wk / norm;
        grad_err = grad_err.max((gw.data()[k] - expect_k).abs());
    }
    let bias_err = gb.data()[0].abs();

    let closed_ok = value_err <= 1e-8 && grad_err <= 1e-8 && bias_err <= 1e-12;

    // Two-layer critic: the penalty's parameter gradient differentiates
    // through the input-gradient computation, so checking it against finite
    // differences of the penalty value exercises second-order structure.
    let arch = GanArchitecture {
        noise_dim: 4,
        generator_hidden: vec![4],
        pdp_len: dim,
        discriminator_hidden: vec![8],
        leaky_slope: 0.2,
    };
    let h = 1e-5;
    let mut attempt = 0u64;
    let (d2, x2) = loop {
        let mut rng2 = RandomStream::from_seed(7_700 + attempt * 611);
        let d2 = DiscriminatorNet::init(&arch, &mut rng2).unwrap();
        let x2 = uniform_rows(&mut rng2, 6, dim, 0.05, 0.95);
        if min_hidden_preact(&d2.layers, d2.slope, &x2) > 1e-3 {
            break (d2, x2);
        }
        attempt += 1;
        assert!(attempt < 50, "no kink-free critic draw found");
    };

    let penalty_value = |layers: &[DenseLayer]| -> f64 {
        let probe = DiscriminatorNet { layers: layers.to_vec(), slope: arch.leaky_slope };
        let tape = Tape::new();
        let params = probe.leaves(&tape);
        let x_leaf = tape.leaf(x2.clone());
        let out = probe.forward_on_tape(&tape, &params, x_leaf).unwrap();
        let pen = tape.gradient_penalty(out, x_leaf, LAMBDA).unwrap();
        tape.item(pen).unwrap()
    };

    let tape2 = Tape::new();
    let params2 = d2.leaves(&tape2);
    let x2_leaf = tape2.leaf(x2.clone());
    let out2 = d2.forward_on_tape(&tape2, &params2, x2_leaf).unwrap();
    let pen2 = tape2.gradient_penalty(out2, x2_leaf, LAMBDA).unwrap();
    let analytic: Vec<f64> = tape2
        .gradients(pen2, &params2.nodes)
        .unwrap()
        .iter()
        .flat_map(|&id| tape2.value(id).data().to_vec())
        .collect();

    let mut fd_max_rel: f64 = 0.0;
    for flat in 0..flat_param_len(&d2.layers) {
        let plus = penalty_value(&nudged(&d2.layers, flat, h));
        let minus = penalty_value(&nudged(&d2.layers, flat, -h));
        let numeric = (plus - minus) / (2.0 * h);
        fd_max_rel = fd_max_rel.max(rel_err(analytic[flat], numeric));
    }
    let fd_ok = fd_max_rel <= 1e-4;

    let detail = format!(
        "linear critic: value err {value_err:.2e}, weight-grad err {grad_err:.2e}, \
         bias-grad {bias_err:.2e}; two-layer critic: FD max rel err {fd_max_rel:.2e}"
    );
    crit.finish(closed_ok && fd_ok, &detail);
}

// ---------------------------------------------------------------------------
// A3: channel math closed forms
// ---------------------------------------------------------------------------

/// Frequency response of a sparse impulse response, sampled on a uniform
/// frequency grid: H(f) = sum_j gain_j * exp(i*(phase_j - 2*pi*f*delay_j)).
/// Built here independently of the library so the round trip has a second
/// author.
fn frequency_response(cir: &Cir, start_hz: f64, spacing_hz: f64, count: usize) -> ChannelTransferFunction {
    let samples = (0..count)
        .map(|k| {
            let f = start_hz + k as f64 * spacing_hz;
            let mut re = 0.0;
            let mut im = 0.0;
            for p in &cir.paths {
                let angle = p.phase_rad - 2.0 * std::f64::consts::PI * f * p.delay_s;
                re += p.gain * angle.cos();
                im += p.gain * angle.sin();
            }
            (re, im)
        })
        .collect();
    ChannelTransferFunction::new(start_hz, spacing_hz, samples).unwrap()
}

#[test]
fn a3_channel_math_closed_forms() {
    let crit = Criterion::start("A3", "10 s");

    // Two paths, 5 ns apart on a 1 ns grid: powers are squared gains in the
    // exact bins, zero elsewhere.
    let cir = Cir {
        paths: vec![
            MultipathComponent { delay_s: 0.0, gain: 0.8, phase_rad: 0.3 },
            MultipathComponent { delay_s: 5e-9, gain: 0.5, phase_rad: -1.2 },
        ],
    };
    let grid = DelayGrid::new(16, 1e-9).unwrap();
    let pdp = cir_to_pdp(&cir, grid).unwrap();
    let mut two_path_err: f64 = 0.0;
    for (k, &p) in pdp.powers().iter().enumerate() {
        let expect = match k {
            0 => 0.64,
            5 => 0.25,
            _ => 0.0,
        };
        two_path_err = two_path_err.max((p - expect).abs());
    }
    let two_path_ok = two_path_err <= 1e-12;

    // Transfer-function round trip: a sparse on-grid channel, transformed
    // to the frequency domain by the independent construction above and
    // back through the band extraction, recovers the binned powers.
    let spacing_hz = 2.5e6;
    let k_count = 32;
    let delay_step = 1.0 / (k_count as f64 * spacing_hz);
    let cir2 = Cir {
        paths: vec![
            MultipathComponent { delay_s: 2.0 * delay_step, gain: 0.9, phase_rad: 0.7 },
            MultipathComponent { delay_s: 9.0 * delay_step, gain: 0.4, phase_rad: -2.1 },
        ],
    };
    let ctf = frequency_response(&cir2, 0.0, spacing_hz, k_count);
    let round = ctf_to_pdp(&ctf, 0.0, (k_count - 1) as f64 * spacing_hz).unwrap();
    let mut band_rel: f64 = 0.0;
    for (k, &p) in round.powers().iter().enumerate() {
        let expect = match k {
            2 => 0.81,
            9 => 0.16,
            _ => 0.0,
        };
        let err = (p - expect).abs();
        band_rel = band_rel.max(if expect > 0.0 { err / expect } else { err / 0.81 });
    }
    let band_ok = band_rel <= 1e-9;

    // Min-max normalization inverts exactly (up to rounding) through its
    // recorded parameters, including the degenerate flat profile.
    let mut rng = RandomStream::from_seed(33);
    let grid64 = DelayGrid::new(64, 2e-9).unwrap();
    let mut norm_err: f64 = 0.0;
    for _ in 0..20 {
        let powers: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
        let p = Pdp::new(powers.clone(), grid64, false).unwrap();
        let (n, np) = minmax_normalize(&p).unwrap();
        let back = denormalize(&n, &np).unwrap();
        for (a, b) in back.powers().iter().zip(&powers) {
            norm_err = norm_err.max((a - b).abs());
        }
    }
    let flat = Pdp::new(vec![0.7; 64], grid64, false).unwrap();
    let (nf, npf) = minmax_normalize(&flat).unwrap();
    let back_flat = denormalize(&nf, &npf).unwrap();
    for &v in back_flat.powers() {
        norm_err = norm_err.max((v - 0.7).abs());
    }
    let norm_ok = norm_err <= 1e-12;

    let detail = format!(
        "two-path bin err {two_path_err:.2e}; band round-trip rel err {band_rel:.2e}; \
         normalization round-trip err {norm_err:.2e}"
    );
    crit.finish(two_path_ok && band_ok && norm_ok, &detail);
}

// ---------------------------------------------------------------------------
// A4: pipeline rerun determinism
// ---------------------------------------------------------------------------

#[test]
fn a4_pipeline_reruns_are_bitwise_identical() {
    let crit = Criterion::start("A4", "bounded by A6");
    let grid = DelayGrid::new(32, 4e-9).unwrap();
    let arch = GanArchitecture {
        noise_dim: 8,
        generator_hidden: vec![16],
        pdp_len: 32,
        discriminator_hidden: vec![16],
        leaky_slope: 0.2,
    };
    let config = |seed: u64, epochs: usize| TrainConfig {
        epochs,
        batch_size: BatchSize::Auto,
        lambda: LAMBDA,
        g_optimizer: SgdConfig { learning_rate: 0.02 },
        d_optimizer: AdamConfig { learning_rate: 2e-3, ..AdamConfig::default() },
        n_critic: 1,
        seed,
        snapshot_every: None,
        architecture: arch.clone(),
        noise: NoiseSpec { dim: 8, sigma: 1.0 },
    };
    let source_params = StochasticChannelParams {
        num_paths_mean: 8.0,
        delay_rate_per_s: 3e8,
        power_decay_s: 2e-8,
        shadow_sigma_db: 2.0,
        max_delay_s: 1.2e-7,
        label: "determinism probe source".into(),
    };
    let target_params = StochasticChannelParams {
        power_decay_s: 3.5e-8,
        label: "determinism probe target".into(),
        ..source_params.clone()
    };
    let manifest = ExperimentManifest {
        label: "rerun determinism probe".into(),
        run_dir: "unused".into(),
        source: DatasetSource::Simulate { params: source_params, grid, count: 48, seed: 11 },
        target: Some(DatasetSource::Simulate { params: target_params, grid, count: 16, seed: 12 }),
        pretrain: config(1001, 6),
        finetune: Some(config(1002, 4)),
        generate: GenerateSettings { count: 24, seed: 2001 },
        eval: EvalSettings { ssim_threshold: 0.6, pairing_seed: 3001 },
    };

    let tmp = tempfile::tempdir().unwrap();
    let out_a = run_manifest(&manifest, &tmp.path().join("a"), None).unwrap();
    let out_b = run_manifest(&manifest, &tmp.path().join("b"), None).unwrap();

    let file_pairs = [
        ("pretrain checkpoint", &out_a.pretrain_checkpoint, &out_b.pretrain_checkpoint),
        (
            "fine-tune checkpoint",
            out_a.finetune_checkpoint.as_ref().unwrap(),
            out_b.finetune_checkpoint.as_ref().unwrap(),
        ),
        ("generated set", &out_a.generated_path, &out_b.generated_path),
        (
            "evaluation report",
            &out_a.eval_dir.join("report.json"),
            &out_b.eval_dir.join("report.json"),
        ),
    ];
    let mut mismatch = None;
    for (name, pa, pb) in file_pairs {
        let ba = std::fs::read(pa).unwrap();
        let bb = std::fs::read(pb).unwrap();
        if ba != bb {
            mismatch = Some(name);
            break;
        }
    }

    // Loss histories must agree exactly too; wall-clock timing is the one
    // field allowed to differ between reruns.
    let histories_ok = out_a.pretrain_report.g_loss == out_b.pretrain_report.g_loss
        && out_a.pretrain_report.d_loss == out_b.pretrain_report.d_loss
        && out_a.report == out_b.report;

    let ok = mismatch.is_none() && histories_ok;
    let detail = match mismatch {
        Some(name) => format!("{name} differs between reruns"),
        None if !histories_ok => "loss histories or reports differ between reruns".into(),
        None => "checkpoints, generated set, report, and loss histories bitwise equal".into(),
    };
    crit.finish(ok, &detail);
}

// ---------------------------------------------------------------------------
// A5: full-size parameter counts and checkpoint round trip
// ---------------------------------------------------------------------------

#[test]
fn a5_network_sizes_and_checkpoint_round_trip() {
    let crit = Criterion::start("A5", "60 s");
    let arch = GanArchitecture::default();
    let mut rng = RandomStream::from_seed(7);
    let g = GeneratorNet::init(&arch, &mut rng).unwrap();
    let d = DiscriminatorNet::init(&arch, &mut rng).unwrap();
    let g_count = g.num_params();
    let d_count = d.num_params();
    let counts_ok = g_count == 114_193 && d_count == 378_369;

    // Nonzero optimizer moments make the round trip meaningful for every
    // field of the file, not just the network weights.
    let mut m = zeros_like_params(&d.layers);
    let mut v = zeros_like_params(&d.layers);
    for (i, t) in m.iter_mut().enumerate() {
        for (k, slot) in t.data_mut().iter_mut().enumerate() {
            *slot = (i as f64 + 1.0) * 1e-3 + k as f64 * 1e-7;
        }
    }
    for (i, t) in v.iter_mut().enumerate() {
        for (k, slot) in t.data_mut().iter_mut().enumerate() {
            *slot = (i as f64 + 1.0) * 1e-5 + k as f64 * 1e-9;
        }
    }
    let ckpt = Checkpoint {
        architecture: arch.clone(),
        grid: DelayGrid::new(arch.pdp_len, 1e-9).unwrap(),
        epoch: 12_345,
        config_fingerprint: fingerprint_json(&TrainConfig::new(7)).unwrap(),
        generator: g,
        discriminator: d,
        d_optimizer: Some(AdamSnapshot { m, v, step: 42 }),
    };

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("full_size.ckpt");
    save_checkpoint(&ckpt, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();

    let mut round_ok = loaded.architecture == ckpt.architecture
        && loaded.grid == ckpt.grid
        && loaded.epoch == ckpt.epoch
        && loaded.config_fingerprint == ckpt.config_fingerprint;
    for (a, b) in loaded
        .generator
        .layers
        .iter()
        .zip(&ckpt.generator.layers)
        .chain(loaded.discriminator.layers.iter().zip(&ckpt.discriminator.layers))
    {
        round_ok &= tensors_bitwise_equal(&a.weight, &b.weight)
            && tensors_bitwise_equal(&a.bias, &b.bias);
    }
    let (sa, sb) = (loaded.d_optimizer.as_ref().unwrap(), ckpt.d_optimizer.as_ref().unwrap());
    round_ok &= sa.step == sb.step
        && sa.m.iter().zip(&sb.m).all(|(a, b)| tensors_bitwise_equal(a, b))
        && sa.v.iter().zip(&sb.v).all(|(a, b)| tensors_bitwise_equal(a, b));

    let detail = format!(
        "generator {g_count} params, critic {d_count} params; checkpoint round trip \
         {}",
        if round_ok { "bitwise exact" } else { "NOT bitwise exact" }
    );
    crit.finish(counts_ok && round_ok, &detail);
}

// ---------------------------------------------------------------------------
// A6: desk-scale convergence
// ---------------------------------------------------------------------------

/// The desk-scale channel family: dense speckle with a decay constant of
/// one grid bin. Many paths per profile keep the total-power spread small,
/// which the Wasserstein criterion rewards.
fn desk_scale_params() -> StochasticChannelParams {
    StochasticChannelParams {
        num_paths_mean: 40.0,
        delay_rate_per_s: 2e9,
        power_decay_s: 2e-9,
        shadow_sigma_db: 0.0,
        max_delay_s: 1e-7,
        label: "dense fast-decay desk-scale family".into(),
    }
}

fn desk_scale_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2000,
        batch_size: BatchSize::Fixed(64),
        lambda: LAMBDA,
        g_optimizer: SgdConfig { learning_rate: 0.03 },
        d_optimizer: AdamConfig { learning_rate: 2e-3, ..AdamConfig::default() },
        n_critic: 1,
        seed,
        snapshot_every: None,
        architecture: GanArchitecture {
            noise_dim: 8,
            generator_hidden: vec![64],
            pdp_len: 64,
            discriminator_hidden: vec![64],
            leaky_slope: 0.2,
        },
        noise: NoiseSpec { dim: 8, sigma: 1.0 },
    }
}

#[test]
fn a6_desk_scale_convergence() {
    let crit = Criterion::start("A6", "600 s");
    let grid = DelayGrid::new(64, 2e-9).unwrap();
    let data = generate_dataset(&DatasetSpec {
        params: desk_scale_params(),
        count: 2000,
        grid,
        rng_seed: 11,
    })
    .unwrap();
    let ref_pdps = data.pdps().unwrap();
    let ref_avg = average_pdp(&ref_pdps).unwrap();
    let ref_totals = total_powers(&ref_pdps);

    let mut wins = 0;
    let mut lines = Vec::new();
    for i in 1..=10u64 {
        let seed = 1000 + i;
        let (ckpt, _) = train(&desk_scale_config(seed), &data, None).unwrap();
        let gen = generate_pdps(&ckpt, 10_000, 5000 + i, 1.0).unwrap();
        let gen_pdps = gen.pdps().unwrap();
        let gen_avg = average_pdp(&gen_pdps).unwrap();
        let r = rmse(&ref_avg, &gen_avg, RmseDomain::Linear).unwrap();
        let w = wasserstein_1d(&ref_totals, &total_powers(&gen_pdps)).unwrap();
        let pass = r < 0.05 && w < 0.05;
        wins += pass as usize;
        lines.push(format!(
            "  seed {seed}: avg-profile rmse {r:.3e}, total-power W1 {w:.3e} -> {}",
            if pass { "pass" } else { "miss" }
        ));
    }
    for line in &lines {
        println!("{line}");
    }
    let detail = format!(
        "{wins}/10 seeds under rmse<0.05 and W1<0.05 (need >=8); 2000 profiles, \
         2000 epochs, batch 64, 10k generated per seed"
    );
    crit.finish(wins >= 8, &detail);
}

// ---------------------------------------------------------------------------
// A7: transfer-learning benefit
// ---------------------------------------------------------------------------

#[test]
fn a7_transfer_learning_beats_scratch() {
    let crit = Criterion::start("A7", "900 s");
    let grid = DelayGrid::new(64, 2e-9).unwrap();
    let source_params = StochasticChannelParams {
        num_paths_mean: 10.0,
        delay_rate_per_s: 3e8,
        power_decay_s: 2e-8,
        shadow_sigma_db: 0.0,
        max_delay_s: 1.2e-7,
        label: "sparse source family, 20 ns decay".into(),
    };
    let target_params = StochasticChannelParams {
        power_decay_s: 3.5e-8,
        label: "sparse target family, 35 ns decay".into(),
        ..source_params.clone()
    };
    let source = generate_dataset(&DatasetSpec {
        params: source_params,
        count: 2000,
        grid,
        rng_seed: 11,
    })
    .unwrap();
    let target = generate_dataset(&DatasetSpec {
        params: target_params,
        count: 32,
        grid,
        rng_seed: 12,
    })
    .unwrap();
    let target_avg = average_pdp(&target.pdps().unwrap()).unwrap();

    let (pretrained, _) = train(&desk_scale_config(1001), &source, None).unwrap();

    let window = 100;
    let mut rmse_wins = 0;
    let mut conv_wins = 0;
    let mut lines = Vec::new();
    for i in 1..=10u64 {
        let mut cfg = desk_scale_config(3000 + i);
        cfg.epochs = 500;
        let (ft_ckpt, ft_report) = fine_tune(&cfg, &target, &pretrained).unwrap();
        let (sc_ckpt, sc_report) = train(&cfg, &target, None).unwrap();

        let avg_of = |ckpt: &Checkpoint| {
            let gen = generate_pdps(ckpt, 2000, 7000 + i, 1.0).unwrap();
            average_pdp(&gen.pdps().unwrap()).unwrap()
        };
        let ft_rmse = rmse(&target_avg, &avg_of(&ft_ckpt), RmseDomain::Linear).unwrap();
        let sc_rmse = rmse(&target_avg, &avg_of(&sc_ckpt), RmseDomain::Linear).unwrap();

        // Tolerance self-calibrates to how quiet the from-scratch run ends
        // up, then both runs are asked when they first became that quiet.
        let tail = &sc_report.d_loss[sc_report.d_loss.len() - window..];
        let mean = tail.iter().sum::<f64>() / window as f64;
        let tol =
            (tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window as f64).sqrt();
        let ft_conv = convergence_epoch(&ft_report, window, tol).unwrap();
        let sc_conv = convergence_epoch(&sc_report, window, tol).unwrap();

        let rmse_win = ft_rmse < sc_rmse;
        let conv_win = ft_conv < sc_conv;
        rmse_wins += rmse_win as usize;
        conv_wins += conv_win as usize;
        lines.push(format!(
            "  pair {i}: rmse fine-tuned {ft_rmse:.3e} vs scratch {sc_rmse:.3e} ({}), \
             convergence {ft_conv} vs {sc_conv} epochs ({})",
            if rmse_win { "win" } else { "loss" },
            if conv_win { "win" } else { "loss" },
        ));
    }
    for line in &lines {
        println!("{line}");
    }
    let detail = format!(
        "fine-tuning beats scratch on rmse in {rmse_wins}/10 and on convergence \
         epoch in {conv_wins}/10 paired seeds (need >=8 each); 32-sample target, \
         500 epochs both arms"
    );
    crit.finish(rmse_wins >= 8 && conv_wins >= 8, &detail);
}

// ---------------------------------------------------------------------------
// A8: metric sanity
// ---------------------------------------------------------------------------

#[test]
fn a8_metric_sanity() {
    let crit = Criterion::start("A8", "60 s");
    let grid = DelayGrid::new(64, 2e-9).unwrap();
    let mut rng = RandomStream::from_seed(88);
    let random_pdp = |rng: &mut RandomStream| {
        let powers = (0..64).map(|_| rng.uniform()).collect::<Vec<_>>();
        Pdp::new(powers, grid, false).unwrap()
    };

    // Self-comparison identities, exact.
    let mut self_ok = true;
    for _ in 0..100 {
        let p = random_pdp(&mut rng);
        self_ok &= ssim_1d(&p, &p).unwrap() == 1.0;
        self_ok &= rmse(&p, &p, RmseDomain::Linear).unwrap() == 0.0;
    }

    // Symmetry, bitwise.
    let mut sym_ok = true;
    for _ in 0..20 {
        let a = random_pdp(&mut rng);
        let b = random_pdp(&mut rng);
        sym_ok &= rmse(&a, &b, RmseDomain::Linear).unwrap()
            == rmse(&b, &a, RmseDomain::Linear).unwrap();
        sym_ok &= ssim_1d(&a, &b).unwrap() == ssim_1d(&b, &a).unwrap();
    }

    // Growing the amplitude of one fixed perturbation must raise RMSE and
    // lower SSIM nearly always.
    let base: Vec<f64> = (0..64)
        .map(|k| 0.1 + 0.7 * (-(k as f64) * 2e-9 / 30e-9).exp())
        .collect();
    let base_pdp = Pdp::new(base.clone(), grid, false).unwrap();
    let mut mono_hits = 0;
    for _ in 0..100 {
        let noise: Vec<f64> = (0..64).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let perturbed = |amp: f64| {
            let powers = base.iter().zip(&noise).map(|(b, n)| b + amp * n).collect();
            Pdp::new(powers, grid, false).unwrap()
        };
        let small = perturbed(0.02);
        let large = perturbed(0.06);
        let rmse_up = rmse(&base_pdp, &small, RmseDomain::Linear).unwrap()
            < rmse(&base_pdp, &large, RmseDomain::Linear).unwrap();
        let ssim_down =
            ssim_1d(&base_pdp, &small).unwrap() > ssim_1d(&base_pdp, &large).unwrap();
        mono_hits += (rmse_up && ssim_down) as usize;
    }
    let mono_ok = mono_hits >= 95;

    // CDF outputs are sorted with quantiles climbing to one, and the
    // delay-spread CDF is nondecreasing and finite.
    let refs: Vec<Pdp> = (0..30).map(|_| random_pdp(&mut rng)).collect();
    let gens: Vec<Pdp> = (0..40).map(|_| random_pdp(&mut rng)).collect();
    let cdf = ssim_cdf(&refs, &gens, 0.6, Pairing::Random { seed: 5 }).unwrap();
    let nondecreasing = |xs: &[f64]| xs.windows(2).all(|w| w[0] <= w[1]);
    let manual_above =
        cdf.values.iter().filter(|&&v| v > 0.6).count() as f64 / cdf.values.len() as f64;
    let mut cdf_ok = nondecreasing(&cdf.sorted)
        && nondecreasing(&cdf.quantiles)
        && cdf.quantiles.last() == Some(&1.0)
        && (cdf.fraction_above - manual_above).abs() < 1e-12;
    let spreads = delay_spread_cdf(&refs).unwrap();
    cdf_ok &= nondecreasing(&spreads) && spreads.iter().all(|s| s.is_finite() && *s >= 0.0);

    let detail = format!(
        "self-comparisons exact: {self_ok}; symmetry bitwise: {sym_ok}; noise \
         monotonicity {mono_hits}/100 (need >=95); CDF shape ok: {cdf_ok}"
    );
    crit.finish(self_ok && sym_ok && mono_ok && cdf_ok, &detail);
}

// ---------------------------------------------------------------------------
// A9: single optimizer steps decrease the losses
// ---------------------------------------------------------------------------

#[test]
fn a9_single_steps_reduce_losses() {
    let crit = Criterion::start("A9", "60 s");
    let arch = GanArchitecture {
        noise_dim: 4,
        generator_hidden: vec![6],
        pdp_len: 16,
        discriminator_hidden: vec![6],
        leaky_slope: 0.2,
    };
    let noise = NoiseSpec { dim: 4, sigma: 1.0 };

    let mut g_wins = 0;
    let mut d_wins = 0;
    for s in 0..10u64 {
        let seed = 9001 + s;
        let mut rng = RandomStream::from_seed(seed);
        let g = GeneratorNet::init(&arch, &mut rng).unwrap();
        let d = DiscriminatorNet::init(&arch, &mut rng).unwrap();
        let z = sample_noise(&noise, 12, &mut rng).unwrap();
        let x = uniform_rows(&mut rng, 12, arch.pdp_len, 0.05, 0.95);
        let eps_seed = seed ^ 0x0ABC;

        let (d0, g0, g_grads_flat, d_grads_flat) = losses_and_grads(&g, &d, &x, &z, eps_seed);

        // Rebuild the flat gradients into per-tensor shape for the steps.
        let unflatten = |layers: &[DenseLayer], flat: &[f64]| {
            let mut out = Vec::new();
            let mut at = 0;
            for l in layers {
                for proto in [&l.weight, &l.bias] {
                    let n = proto.len();
                    out.push(
                        Tensor::from_vec(
                            proto.rows(),
                            proto.cols(),
                            flat[at..at + n].to_vec(),
                        )
                        .unwrap(),
                    );
                    at += n;
                }
            }
            out
        };

        let mut g_stepped = g.clone();
        let g_grads = unflatten(&g.layers, &g_grads_flat);
        sgd_step(&mut mut_param_refs(&mut g_stepped.layers), &g_grads, 0.01).unwrap();
        let g1 = loss_values(&g_stepped, &d, &x, &z, eps_seed).1;

        let mut d_stepped = d.clone();
        let d_grads = unflatten(&d.layers, &d_grads_flat);
        let mut state = AdamSnapshot {
            m: zeros_like_params(&d.layers),
            v: zeros_like_params(&d.layers),
            step: 0,
        };
        adam_step(
            &mut mut_param_refs(&mut d_stepped.layers),
            &d_grads,
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap();
        let d1 = loss_values(&g, &d_stepped, &x, &z, eps_seed).0;

        g_wins += (g1 < g0) as usize;
        d_wins += (d1 < d0) as usize;
    }

    let detail = format!(
        "generator loss decreased in {g_wins}/10 seeds, critic loss in {d_wins}/10 \
         (need >=9 each)"
    );
    crit.finish(g_wins >= 9 && d_wins >= 9, &detail);
}
