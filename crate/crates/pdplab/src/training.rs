//! WGAN-GP training loop, SGD and Adam optimizers, and fine-tuning.
//!
//! One epoch shuffles the dataset (seeded), then for each batch runs
//! `n_critic` critic updates (Adam) followed by one generator update (SGD).
//! Everything is deterministic given the config seed, the dataset, and the
//! optional initial checkpoint. Non-finite losses abort with an error
//! carrying the last finite checkpoint rather than being clipped.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::dataset::{write_atomic, PdpDataset};
use crate::error::{Error, Result};
use crate::fingerprint::{fingerprint_bytes, fingerprint_json};
use crate::gan::{
    sample_noise, save_checkpoint, AdamSnapshot, Checkpoint, DiscriminatorNet, GanArchitecture,
    GeneratorNet, NoiseSpec,
};
use crate::rng::RandomStream;
use crate::tensor::Tensor;

/// Batch sizing policy. `Auto` uses the whole dataset when it has at most 64
/// samples and batches of 64 otherwise, so small measured-style sets train
/// full-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Auto,
    Full,
    Fixed(usize),
}

impl BatchSize {
    pub fn resolve(&self, dataset_len: usize) -> usize {
        match self {
            BatchSize::Auto => dataset_len.min(64),
            BatchSize::Full => dataset_len,
            BatchSize::Fixed(n) => (*n).min(dataset_len),
        }
    }
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Auto => s.serialize_str("auto"),
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) => Ok(BatchSize::Fixed(n)),
            Repr::Name(s) => match s.as_str() {
                "auto" => Ok(BatchSize::Auto),
                "full" => Ok(BatchSize::Full),
                other => Err(serde::de::Error::custom(format!(
                    "batch_size must be a count, \"auto\", or \"full\", got {other:?}"
                ))),
            },
        }
    }
}

fn default_lr() -> f64 {
    2e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.9
}
fn default_epsilon() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: default_lr() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

fn default_epochs() -> usize {
    10_000
}
fn default_batch() -> BatchSize {
    BatchSize::Auto
}
fn default_lambda() -> f64 {
    10.0
}
fn default_n_critic() -> usize {
    1
}

/// Full hyperparameter set for one training run. Only `seed` has no default;
/// runs must be explicitly seeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: BatchSize,
    /// Gradient penalty weight.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub g_optimizer: SgdConfig,
    #[serde(default)]
    pub d_optimizer: AdamConfig,
    /// Critic updates per generator update.
    #[serde(default = "default_n_critic")]
    pub n_critic: usize,
    /// Defaults to 0 when absent so partial config files stay valid; the
    /// CLI always overwrites it from `--seed`.
    #[serde(default)]
    pub seed: u64,
    /// Epochs between intermediate checkpoint dumps, when a snapshot
    /// directory is supplied.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub architecture: GanArchitecture,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl TrainConfig {
    /// Full-size defaults with the given seed.
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lambda: default_lambda(),
            g_optimizer: SgdConfig::default(),
            d_optimizer: AdamConfig::default(),
            n_critic: default_n_critic(),
            seed,
            snapshot_every: None,
            architecture: GanArchitecture::default(),
            noise: NoiseSpec::default(),
        }
    }

    /// Checks shared by training and fine-tuning. `strict` additionally
    /// requires at least one epoch and strictly positive learning rates,
    /// which fresh training demands; fine-tuning relaxes both so that
    /// zero-epoch and zero-rate transfers stay expressible.
    pub(crate) fn validate(&self, strict: bool) -> Result<()> {
        self.architecture.validate()?;
        self.noise.validate()?;
        if self.noise.dim != self.architecture.noise_dim {
            return Err(Error::InvalidInput(format!(
                "noise dim {} does not match architecture noise_dim {}",
                self.noise.dim, self.architecture.noise_dim
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "penalty weight must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if self.n_critic == 0 {
            return Err(Error::InvalidInput("n_critic must be at least 1".into()));
        }
        if let BatchSize::Fixed(0) = self.batch_size {
            return Err(Error::InvalidInput("batch_size must be at least 1".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::InvalidInput("snapshot_every must be at least 1".into()));
        }
        for (name, lr) in [
            ("generator", self.g_optimizer.learning_rate),
            ("discriminator", self.d_optimizer.learning_rate),
        ] {
            if !lr.is_finite() || lr < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} learning rate must be finite and nonnegative, got {lr}"
                )));
            }
            if strict && lr == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} learning rate must be positive for training"
                )));
            }
        }
        for (name, b) in [("beta1", self.d_optimizer.beta1), ("beta2", self.d_optimizer.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.d_optimizer.epsilon > 0.0) {
            return Err(Error::InvalidInput("adam epsilon must be positive".into()));
        }
        if strict && self.epochs == 0 {
            return Err(Error::InvalidInput("training requires at least 1 epoch".into()));
        }
        Ok(())
    }
}

/// Applies `p <- p - lr * g` to every parameter tensor.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    check_aligned(params, grads, "sgd step")?;
    if lr == 0.0 {
        return Ok(());
    }
    for (p, g) in params.iter_mut().zip(grads) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

/// One bias-corrected Adam update; increments the step counter. A zero
/// learning rate leaves parameters and state untouched.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamSnapshot,
    cfg: &AdamConfig,
) -> Result<()> {
    check_aligned(params, grads, "adam step")?;
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch {
            context: "adam state",
            left: format!("{} moment tensors", state.m.len()),
            right: format!("{} parameter tensors", params.len()),
        });
    }
    for (i, p) in params.iter().enumerate() {
        if state.m[i].shape() != p.shape() || state.v[i].shape() != p.shape() {
            return Err(Error::ShapeMismatch {
                context: "adam state",
                left: format!("moment {i} {:?}", state.m[i].shape()),
                right: format!("parameter {i} {:?}", p.shape()),
            });
        }
    }
    if cfg.learning_rate == 0.0 {
        return Ok(());
    }

    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (pd, gd) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for k in 0..pd.len() {
            md[k] = cfg.beta1 * md[k] + (1.0 - cfg.beta1) * gd[k];
            vd[k] = cfg.beta2 * vd[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
            let m_hat = md[k] / bc1;
            let v_hat = vd[k] / bc2;
            pd[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

fn check_aligned(params: &[&mut Tensor], grads: &[Tensor], context: &'static str) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            context,
            left: format!("{} parameter tensors", params.len()),
            right: format!("{} gradient tensors", grads.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                context,
                left: format!("parameter {i} {:?}", p.shape()),
                right: format!("gradient {i} {:?}", g.shape()),
            });
        }
    }
    Ok(())
}

fn zero_adam_state(d: &DiscriminatorNet) -> AdamSnapshot {
    let zeros = |net: &DiscriminatorNet| -> Vec<Tensor> {
        net.layers
            .iter()
            .flat_map(|l| {
                [
                    Tensor::zeros(l.weight.rows(), l.weight.cols()),
                    Tensor::zeros(1, l.bias.cols()),
                ]
            })
            .collect()
    };
    AdamSnapshot { m: zeros(d), v: zeros(d), step: 0 }
}

/// Per-epoch loss history plus run-level summary values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub g_loss: Vec<f64>,
    pub d_loss: Vec<f64>,
    /// Wall-clock seconds per epoch. Excluded from determinism comparisons.
    pub seconds: Vec<f64>,
    /// Self-calibrated convergence estimate; see [`convergence_epoch`] for
    /// the externally parameterized variant.
    pub convergence_epoch_estimate: usize,
    /// Content hash of the final parameters, linking the report to its
    /// checkpoint.
    pub checkpoint_fingerprint: String,
}

/// First epoch index whose following `window` critic losses have standard
/// deviation below `tol`; `epochs_run` when no window qualifies.
pub fn convergence_epoch(report: &TrainReport, window: usize, tol: f64) -> Result<usize> {
    if window < 2 {
        return Err(Error::InvalidInput("convergence window must be at least 2".into()));
    }
    if window > report.d_loss.len() {
        return Err(Error::InvalidInput(format!(
            "convergence window {window} exceeds history length {}",
            report.d_loss.len()
        )));
    }
    Ok(first_quiet_window(&report.d_loss, window, tol).unwrap_or(report.epochs_run))
}

/// Population standard deviation of one slice.
fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

fn first_quiet_window(history: &[f64], window: usize, tol: f64) -> Option<usize> {
    (0..=history.len() - window).find(|&e| std_dev(&history[e..e + window]) < tol)
}

/// Convergence estimate used for the report field: window is a fifth of the
/// history capped at 100, tolerance is slightly above the final window's own
/// deviation, so the estimate marks where the curve first became as quiet as
/// it ended up.
fn self_convergence_estimate(d_loss: &[f64]) -> usize {
    let len = d_loss.len();
    if len < 4 {
        return len;
    }
    let window = (len / 5).clamp(2, 100);
    let tol = (1.05 * std_dev(&d_loss[len - window..])).max(1e-12);
    first_quiet_window(d_loss, window, tol).unwrap_or(len)
}

/// Writes the per-epoch history as `epoch,g_loss,d_loss,seconds` rows.
pub fn save_report_csv(report: &TrainReport, path: &Path) -> Result<()> {
    let mut out = String::from("epoch,g_loss,d_loss,seconds\n");
    for e in 0..report.epochs_run {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e, report.g_loss[e], report.d_loss[e], report.seconds[e]
        ));
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    epochs_run: usize,
    final_g_loss: Option<f64>,
    final_d_loss: Option<f64>,
    total_seconds: f64,
    convergence_epoch_estimate: usize,
    checkpoint_fingerprint: &'a str,
}

/// Writes a condensed JSON summary of the run.
pub fn save_report_json(report: &TrainReport, path: &Path) -> Result<()> {
    let summary = ReportSummary {
        epochs_run: report.epochs_run,
        final_g_loss: report.g_loss.last().copied(),
        final_d_loss: report.d_loss.last().copied(),
        total_seconds: report.seconds.iter().sum(),
        convergence_epoch_estimate: report.convergence_epoch_estimate,
        checkpoint_fingerprint: &report.checkpoint_fingerprint,
    };
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Compares two width chains layer by layer, returning a human-readable
/// diff when they differ.
fn architecture_diff(expected: &GanArchitecture, found: &GanArchitecture) -> Option<String> {
    let mut diffs = Vec::new();
    let pairs = [
        ("generator", expected.generator_widths(), found.generator_widths()),
        ("discriminator", expected.discriminator_widths(), found.discriminator_widths()),
    ];
    for (net, exp, got) in pairs {
        if exp.len() != got.len() {
            diffs.push(format!("{net}: {} layers vs {}", got.len() - 1, exp.len() - 1));
            continue;
        }
        for (i, w) in exp.windows(2).zip(got.windows(2)).enumerate() {
            if w.0 != w.1 {
                diffs.push(format!(
                    "{net} layer {i}: {}x{} vs expected {}x{}",
                    w.1[0], w.1[1], w.0[0], w.0[1]
                ));
            }
        }
    }
    if (expected.leaky_slope - found.leaky_slope).abs() > 0.0 {
        diffs.push(format!(
            "leaky slope {} vs expected {}",
            found.leaky_slope, expected.leaky_slope
        ));
    }
    if diffs.is_empty() {
        None
    } else {
        Some(diffs.join("; "))
    }
}

/// Critic loss and its parameter gradients for one batch. The generator
/// output enters as a constant, so only critic parameters carry gradients.
/// Consumes `rng` for one interpolation coefficient per row.
fn critic_batch(
    d: &DiscriminatorNet,
    fake: &Tensor,
    x_real: &Tensor,
    lambda: f64,
    rng: &mut RandomStream,
) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let d_params = d.leaves(&tape);
    let fake_leaf = tape.leaf(fake.clone());
    let real_leaf = tape.leaf(x_real.clone());
    let mean_fake = tape.mean_all(d.forward_on_tape(&tape, &d_params, fake_leaf)?)?;
    let mean_real = tape.mean_all(d.forward_on_tape(&tape, &d_params, real_leaf)?)?;

    let (batch, width) = fake.shape();
    let mut interp = Vec::with_capacity(batch * width);
    for r in 0..batch {
        let eps = rng.uniform();
        for (xr, xf) in x_real.row_slice(r).iter().zip(fake.row_slice(r)) {
            interp.push(eps * xr + (1.0 - eps) * xf);
        }
    }
    let x_tilde = tape.leaf(Tensor::from_vec(batch, width, interp)?);
    let d_tilde = d.forward_on_tape(&tape, &d_params, x_tilde)?;
    let penalty = tape.gradient_penalty(d_tilde, x_tilde, lambda)?;

    let gap = tape.sub(mean_fake, mean_real)?;
    let d_loss = tape.add(gap, penalty)?;
    let grad_ids = tape.gradients(d_loss, &d_params.nodes)?;
    let grads = grad_ids.iter().map(|&id| tape.value(id)).collect();
    Ok((tape.item(d_loss)?, grads))
}

/// Generator loss and its parameter gradients for one batch; critic
/// parameters enter as constants.
fn generator_batch(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    z: &Tensor,
) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let g_params = g.leaves(&tape);
    let z_leaf = tape.leaf(z.clone());
    let fake = g.forward_on_tape(&tape, &g_params, z_leaf)?;
    let d_params = d.leaves(&tape);
    let mean_fake = tape.mean_all(d.forward_on_tape(&tape, &d_params, fake)?)?;
    let g_loss = tape.affine(mean_fake, -1.0, 0.0);
    let grad_ids = tape.gradients(g_loss, &g_params.nodes)?;
    let grads = grad_ids.iter().map(|&id| tape.value(id)).collect();
    Ok((tape.item(g_loss)?, grads))
}

fn apply_to_discriminator(
    d: &mut DiscriminatorNet,
    grads: &[Tensor],
    state: &mut AdamSnapshot,
    cfg: &AdamConfig,
) -> Result<()> {
    let mut params: Vec<&mut Tensor> = d
        .layers
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias])
        .collect();
    adam_step(&mut params, grads, state, cfg)
}

fn apply_to_generator(g: &mut GeneratorNet, grads: &[Tensor], lr: f64) -> Result<()> {
    let mut params: Vec<&mut Tensor> = g
        .layers
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias])
        .collect();
    sgd_step(&mut params, grads, lr)
}

/// Content hash over both networks' parameter bytes.
fn parameter_fingerprint(g: &GeneratorNet, d: &DiscriminatorNet) -> String {
    let mut bytes = Vec::new();
    for layer in g.layers.iter().chain(&d.layers) {
        for t in [&layer.weight, &layer.bias] {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fingerprint_bytes(&bytes)
}

fn make_checkpoint(
    config: &TrainConfig,
    data: &PdpDataset,
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    state: &AdamSnapshot,
    epoch: usize,
    fingerprint: &str,
) -> Checkpoint {
    Checkpoint {
        architecture: config.architecture.clone(),
        grid: data.grid,
        epoch,
        config_fingerprint: fingerprint.to_string(),
        generator: g.clone(),
        discriminator: d.clone(),
        d_optimizer: if state.step == 0 { None } else { Some(state.clone()) },
    }
}

fn check_dataset(config: &TrainConfig, data: &PdpDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    if !data.normalized {
        return Err(Error::InvalidInput(
            "training data must be normalized to [0, 1] first".into(),
        ));
    }
    if data.grid.num_points() != config.architecture.pdp_len {
        return Err(Error::ShapeMismatch {
            context: "training data",
            left: format!("{}-point profiles", data.grid.num_points()),
            right: format!("architecture output {}", config.architecture.pdp_len),
        });
    }
    Ok(())
}

struct LoopStart {
    g: GeneratorNet,
    d: DiscriminatorNet,
    state: AdamSnapshot,
    start_epoch: usize,
}

/// The shared epoch loop behind [`train`] and [`fine_tune`].
fn run_loop(
    config: &TrainConfig,
    data: &PdpDataset,
    start: LoopStart,
    mut rng: RandomStream,
    snapshot_dir: Option<&Path>,
) -> Result<(Checkpoint, TrainReport)> {
    let LoopStart { mut g, mut d, mut state, start_epoch } = start;
    let config_fp = fingerprint_json(config)?;
    let batch = config.batch_size.resolve(data.len());
    let x_all = data.to_tensor()?;
    let width = data.grid.num_points();

    if let (Some(_), Some(dir)) = (config.snapshot_every, snapshot_dir) {
        std::fs::create_dir_all(dir)?;
    }
    let mut last_good = make_checkpoint(config, data, &g, &d, &state, start_epoch, &config_fp);
    let mut g_hist = Vec::with_capacity(config.epochs);
    let mut d_hist = Vec::with_capacity(config.epochs);
    let mut seconds = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for e in 0..config.epochs {
        let epoch = start_epoch + e;
        let clock = Instant::now();
        rng.shuffle(&mut order);

        let mut g_sum = 0.0;
        let mut d_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(batch) {
            let mut rows = Vec::with_capacity(chunk.len() * width);
            for &i in chunk {
                rows.extend_from_slice(x_all.row_slice(i));
            }
            let x_real = Tensor::from_vec(chunk.len(), width, rows)?;

            let mut d_loss = 0.0;
            for _ in 0..config.n_critic {
                let z = sample_noise(&config.noise, chunk.len(), &mut rng)?;
                let fake = g.forward(&z)?;
                let (loss, grads) = critic_batch(&d, &fake, &x_real, config.lambda, &mut rng)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, last_checkpoint: Box::new(last_good) });
                }
                apply_to_discriminator(&mut d, &grads, &mut state, &config.d_optimizer)?;
                d_loss = loss;
            }

            let z = sample_noise(&config.noise, chunk.len(), &mut rng)?;
            let (g_loss, grads) = generator_batch(&g, &d, &z)?;
            if !g_loss.is_finite() {
                return Err(Error::Divergence { epoch, last_checkpoint: Box::new(last_good) });
            }
            apply_to_generator(&mut g, &grads, config.g_optimizer.learning_rate)?;

            g_sum += g_loss;
            d_sum += d_loss;
            steps += 1;
        }

        g_hist.push(g_sum / steps as f64);
        d_hist.push(d_sum / steps as f64);
        seconds.push(clock.elapsed().as_secs_f64());
        last_good = make_checkpoint(config, data, &g, &d, &state, epoch + 1, &config_fp);

        if let (Some(every), Some(dir)) = (config.snapshot_every, snapshot_dir) {
            if (e + 1) % every == 0 {
                save_checkpoint(&last_good, &dir.join(format!("epoch_{:06}.ckpt", epoch + 1)))?;
            }
        }
    }

    let report = TrainReport {
        epochs_run: config.epochs,
        convergence_epoch_estimate: self_convergence_estimate(&d_hist),
        g_loss: g_hist,
        d_loss: d_hist,
        seconds,
        checkpoint_fingerprint: parameter_fingerprint(&g, &d),
    };
    Ok((last_good, report))
}

/// Trains a WGAN-GP from scratch, or resumes from `init` (keeping its
/// optimizer state if present). Deterministic given config, data, and init.
pub fn train(
    config: &TrainConfig,
    data: &PdpDataset,
    init: Option<&Checkpoint>,
) -> Result<(Checkpoint, TrainReport)> {
    train_with_snapshots(config, data, init, None)
}

/// [`train`] with periodic checkpoint dumps into `snapshot_dir` every
/// `config.snapshot_every` epochs.
pub fn train_with_snapshots(
    config: &TrainConfig,
    data: &PdpDataset,
    init: Option<&Checkpoint>,
    snapshot_dir: Option<&Path>,
) -> Result<(Checkpoint, TrainReport)> {
    config.validate(true)?;
    check_dataset(config, data)?;
    let mut rng = RandomStream::from_seed(config.seed);
    let start = match init {
        None => {
            let g = GeneratorNet::init(&config.architecture, &mut rng)?;
            let d = DiscriminatorNet::init(&config.architecture, &mut rng)?;
            let state = zero_adam_state(&d);
            LoopStart { g, d, state, start_epoch: 0 }
        }
        Some(ckpt) => {
            if let Some(diff) = architecture_diff(&config.architecture, &ckpt.architecture) {
                return Err(Error::ArchitectureMismatch(diff));
            }
            let state = ckpt
                .d_optimizer
                .clone()
                .unwrap_or_else(|| zero_adam_state(&ckpt.discriminator));
            LoopStart {
                g: ckpt.generator.clone(),
                d: ckpt.discriminator.clone(),
                state,
                start_epoch: ckpt.epoch,
            }
        }
    };
    run_loop(config, data, start, rng, snapshot_dir)
}

/// Continues training from `source` on a new dataset. Both networks'
/// parameters transfer; optimizer state does not (moment estimates from the
/// source data would mislead the first target steps). Zero epochs or zero
/// learning rates are allowed and leave parameters bitwise unchanged.
pub fn fine_tune(
    config: &TrainConfig,
    target_data: &PdpDataset,
    source: &Checkpoint,
) -> Result<(Checkpoint, TrainReport)> {
    config.validate(false)?;
    check_dataset(config, target_data)?;
    if let Some(diff) = architecture_diff(&config.architecture, &source.architecture) {
        return Err(Error::ArchitectureMismatch(diff));
    }
    let rng = RandomStream::from_seed(config.seed);
    let start = LoopStart {
        g: source.generator.clone(),
        d: source.discriminator.clone(),
        state: zero_adam_state(&source.discriminator),
        start_epoch: source.epoch,
    };
    run_loop(config, target_data, start, rng, None)
}
