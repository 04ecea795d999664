//! Generator and critic networks, loss assembly, and checkpoints.
//!
//! Both networks are plain dense stacks with LeakyReLU hidden activations.
//! The generator maps a noise vector to a normalized profile through a final
//! sigmoid; the critic maps a profile to one unbounded score through a
//! linear output. [`wgan_gp_losses`] records both players' losses on one
//! tape: the critic minimizes its score gap plus a gradient-norm penalty at
//! interpolated inputs, the generator minimizes the negated fake score.
//!
//! A [`Checkpoint`] freezes parameters, optimizer state, and provenance in a
//! versioned binary container with a JSON header, stable enough to exchange
//! between builds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::channel::DelayGrid;
use crate::dataset::{write_atomic, DatasetMeta, PdpDataset};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::tensor::Tensor;

/// Isotropic normal noise source feeding the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub dim: usize,
    pub sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { dim: 100, sigma: 1.0 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("noise dim must be at least 1".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Layer widths and activation slope defining both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanArchitecture {
    pub noise_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub pdp_len: usize,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for GanArchitecture {
    /// Full-size networks: generator 100 -> 128x4 -> 401 (sigmoid out),
    /// discriminator 401 -> 512 -> 256 -> 128 -> 64 -> 1 (linear out).
    fn default() -> Self {
        Self {
            noise_dim: 100,
            generator_hidden: vec![128, 128, 128, 128],
            pdp_len: 401,
            discriminator_hidden: vec![512, 256, 128, 64],
            leaky_slope: 0.2,
        }
    }
}

impl GanArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.pdp_len == 0 {
            return Err(Error::InvalidInput(
                "noise_dim and pdp_len must be at least 1".into(),
            ));
        }
        if self.generator_hidden.iter().any(|&w| w == 0)
            || self.discriminator_hidden.iter().any(|&w| w == 0)
        {
            return Err(Error::InvalidInput("layer widths must be at least 1".into()));
        }
        if !(self.leaky_slope >= 0.0) || !self.leaky_slope.is_finite() {
            return Err(Error::InvalidInput(format!(
                "leaky_slope must be nonnegative, got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Full generator width chain, input through output.
    pub fn generator_widths(&self) -> Vec<usize> {
        let mut w = vec![self.noise_dim];
        w.extend(&self.generator_hidden);
        w.push(self.pdp_len);
        w
    }

    /// Full discriminator width chain, input through output.
    pub fn discriminator_widths(&self) -> Vec<usize> {
        let mut w = vec![self.pdp_len];
        w.extend(&self.discriminator_hidden);
        w.push(1);
        w
    }

    pub fn generator_param_count(&self) -> usize {
        param_count(&self.generator_widths())
    }

    pub fn discriminator_param_count(&self) -> usize {
        param_count(&self.discriminator_widths())
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// One affine layer: `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, PartialEq)]
enum OutputActivation {
    Sigmoid,
    Linear,
}

/// Weights drawn uniformly from `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, biases
/// zero. Draw order is layer by layer, weights row-major.
fn init_layers(widths: &[usize], rng: &mut RandomStream) -> Vec<DenseLayer> {
    widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            DenseLayer {
                weight: Tensor::from_vec(fan_in, fan_out, data).expect("sized to shape"),
                bias: Tensor::zeros(1, fan_out),
            }
        })
        .collect()
}

fn forward_values(
    layers: &[DenseLayer],
    slope: f64,
    out: OutputActivation,
    context: &'static str,
    x: &Tensor,
) -> Result<Tensor> {
    if x.cols() != layers[0].weight.rows() {
        return Err(Error::ShapeMismatch {
            context,
            left: format!("input width {}", x.cols()),
            right: format!("layer width {}", layers[0].weight.rows()),
        });
    }
    let mut h = x.clone();
    let last = layers.len() - 1;
    for (i, layer) in layers.iter().enumerate() {
        h = h.matmul(&layer.weight)?.add_row(&layer.bias)?;
        h = if i == last {
            match out {
                OutputActivation::Sigmoid => h.map(crate::autodiff::sigmoid),
                OutputActivation::Linear => h,
            }
        } else {
            h.map(|v| if v > 0.0 { v } else { slope * v })
        };
    }
    Ok(h)
}

/// Tape leaves of one network's parameters, in layer order: weight, bias,
/// weight, bias, ...
#[derive(Debug, Clone)]
pub struct TapeParams {
    pub nodes: Vec<NodeId>,
}

fn leaves(layers: &[DenseLayer], tape: &Tape) -> TapeParams {
    let mut nodes = Vec::with_capacity(layers.len() * 2);
    for layer in layers {
        nodes.push(tape.leaf(layer.weight.clone()));
        nodes.push(tape.leaf(layer.bias.clone()));
    }
    TapeParams { nodes }
}

fn forward_on_tape(
    layers: &[DenseLayer],
    slope: f64,
    out: OutputActivation,
    context: &'static str,
    tape: &Tape,
    params: &TapeParams,
    x: NodeId,
) -> Result<NodeId> {
    if tape.shape(x).1 != layers[0].weight.rows() {
        return Err(Error::ShapeMismatch {
            context,
            left: format!("input width {}", tape.shape(x).1),
            right: format!("layer width {}", layers[0].weight.rows()),
        });
    }
    let mut h = x;
    let last = layers.len() - 1;
    for i in 0..layers.len() {
        let w = params.nodes[2 * i];
        let b = params.nodes[2 * i + 1];
        h = tape.add_row(tape.matmul(h, w)?, b)?;
        h = if i == last {
            match out {
                OutputActivation::Sigmoid => tape.sigmoid(h),
                OutputActivation::Linear => h,
            }
        } else {
            tape.leaky_relu(h, slope)
        };
    }
    Ok(h)
}

/// Noise-to-profile network with sigmoid output in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    pub layers: Vec<DenseLayer>,
    pub slope: f64,
}

impl GeneratorNet {
    pub fn init(arch: &GanArchitecture, rng: &mut RandomStream) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            layers: init_layers(&arch.generator_widths(), rng),
            slope: arch.leaky_slope,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        forward_values(&self.layers, self.slope, OutputActivation::Sigmoid, "generator", z)
    }

    pub fn leaves(&self, tape: &Tape) -> TapeParams {
        leaves(&self.layers, tape)
    }

    pub fn forward_on_tape(&self, tape: &Tape, params: &TapeParams, z: NodeId) -> Result<NodeId> {
        forward_on_tape(
            &self.layers,
            self.slope,
            OutputActivation::Sigmoid,
            "generator",
            tape,
            params,
            z,
        )
    }
}

/// Profile-to-score critic with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet {
    pub layers: Vec<DenseLayer>,
    pub slope: f64,
}

impl DiscriminatorNet {
    pub fn init(arch: &GanArchitecture, rng: &mut RandomStream) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            layers: init_layers(&arch.discriminator_widths(), rng),
            slope: arch.leaky_slope,
        })
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        forward_values(&self.layers, self.slope, OutputActivation::Linear, "discriminator", x)
    }

    pub fn leaves(&self, tape: &Tape) -> TapeParams {
        leaves(&self.layers, tape)
    }

    pub fn forward_on_tape(&self, tape: &Tape, params: &TapeParams, x: NodeId) -> Result<NodeId> {
        forward_on_tape(
            &self.layers,
            self.slope,
            OutputActivation::Linear,
            "discriminator",
            tape,
            params,
            x,
        )
    }
}

/// Draws a `batch x dim` matrix of i.i.d. `Normal(0, sigma^2)` noise,
/// row-major draw order.
pub fn sample_noise(spec: &NoiseSpec, batch: usize, rng: &mut RandomStream) -> Result<Tensor> {
    spec.validate()?;
    if batch == 0 {
        return Err(Error::InvalidInput("noise batch must be at least 1".into()));
    }
    let data = (0..batch * spec.dim).map(|_| spec.sigma * rng.normal()).collect();
    Tensor::from_vec(batch, spec.dim, data)
}

/// Mean critic score of `fake` minus mean critic score of `real`, the
/// penalty-free part of the critic loss. Antisymmetric under swapping.
pub fn critic_gap(d: &DiscriminatorNet, fake: &Tensor, real: &Tensor) -> Result<f64> {
    let score = |x: &Tensor| -> Result<f64> {
        let out = d.forward(x)?;
        Ok(out.sum() / out.rows() as f64)
    };
    Ok(score(fake)? - score(real)?)
}

/// Both players' losses recorded on one tape, ready for per-player gradients.
#[derive(Debug)]
pub struct LossGraph {
    pub d_loss: NodeId,
    pub g_loss: NodeId,
    /// Value of mean D(fake) - mean D(real), the penalty-free gap.
    pub critic_gap: f64,
    /// Value of the gradient penalty term.
    pub penalty: f64,
    pub g_params: TapeParams,
    pub d_params: TapeParams,
}

/// Assembles the WGAN-GP losses for one batch.
///
/// The critic loss is `mean D(G(z)) - mean D(x_real)` plus the gradient
/// penalty at `x_tilde = eps * x_real + (1 - eps) * G(z)` with one uniform
/// `eps` per row; the generator loss is `-mean D(G(z))`. Both are written to
/// be minimized. The interpolation point enters the tape as a constant, so
/// the penalty reaches critic parameters but not the generator. `rng` is
/// consumed only for the per-row `eps` draws.
pub fn wgan_gp_losses(
    tape: &Tape,
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    x_real: &Tensor,
    z: &Tensor,
    lambda: f64,
    rng: &mut RandomStream,
) -> Result<LossGraph> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "gradient penalty weight must be nonnegative, got {lambda}"
        )));
    }
    if x_real.rows() != z.rows() {
        return Err(Error::ShapeMismatch {
            context: "wgan batch",
            left: format!("{} real rows", x_real.rows()),
            right: format!("{} noise rows", z.rows()),
        });
    }
    if x_real.rows() == 0 {
        return Err(Error::InvalidInput("empty training batch".into()));
    }

    let g_params = g.leaves(tape);
    let z_leaf = tape.leaf(z.clone());
    let fake = g.forward_on_tape(tape, &g_params, z_leaf)?;

    let d_params = d.leaves(tape);
    let real_leaf = tape.leaf(x_real.clone());
    let d_fake = d.forward_on_tape(tape, &d_params, fake)?;
    let d_real = d.forward_on_tape(tape, &d_params, real_leaf)?;
    let mean_fake = tape.mean_all(d_fake)?;
    let mean_real = tape.mean_all(d_real)?;

    let fake_values = tape.value(fake);
    let (batch, width) = fake_values.shape();
    let mut interp = Vec::with_capacity(batch * width);
    for r in 0..batch {
        let eps = rng.uniform();
        let real_row = x_real.row_slice(r);
        let fake_row = fake_values.row_slice(r);
        for (xr, xf) in real_row.iter().zip(fake_row) {
            interp.push(eps * xr + (1.0 - eps) * xf);
        }
    }
    let x_tilde = tape.leaf(Tensor::from_vec(batch, width, interp)?);
    let d_tilde = d.forward_on_tape(tape, &d_params, x_tilde)?;
    let penalty = tape.gradient_penalty(d_tilde, x_tilde, lambda)?;

    let gap = tape.sub(mean_fake, mean_real)?;
    let d_loss = tape.add(gap, penalty)?;
    let g_loss = tape.affine(mean_fake, -1.0, 0.0);

    Ok(LossGraph {
        d_loss,
        g_loss,
        critic_gap: tape.item(gap)?,
        penalty: tape.item(penalty)?,
        g_params,
        d_params,
    })
}

/// Runs the generator on `count` seeded noise draws and packs the outputs
/// into a dataset on the checkpoint's grid. Rows live in the normalized
/// domain, strictly inside (0, 1).
pub fn generate_pdps(
    ckpt: &Checkpoint,
    count: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<PdpDataset> {
    ckpt.validate()?;
    if count == 0 {
        return Err(Error::InvalidInput("generation count must be at least 1".into()));
    }
    let spec = NoiseSpec { dim: ckpt.architecture.noise_dim, sigma: noise_sigma };
    spec.validate()?;
    let mut rng = RandomStream::from_seed(seed);
    let mut rows = Vec::with_capacity(count);
    let mut remaining = count;
    while remaining > 0 {
        let batch = remaining.min(512);
        let z = sample_noise(&spec, batch, &mut rng)?;
        let out = ckpt.generator.forward(&z)?;
        for r in 0..batch {
            rows.push(out.row_slice(r).to_vec());
        }
        remaining -= batch;
    }
    Ok(PdpDataset {
        grid: ckpt.grid,
        rows,
        normalized: true,
        norm_params: None,
        meta: DatasetMeta {
            provenance: "gan generated".into(),
            label: format!("generated at epoch {}", ckpt.epoch),
            seed: Some(seed),
            params_fingerprint: Some(ckpt.config_fingerprint.clone()),
        },
    })
}

/// Adam moment estimates mirrored into a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamSnapshot {
    /// First moments, one per parameter tensor.
    pub m: Vec<Tensor>,
    /// Second moments, one per parameter tensor.
    pub v: Vec<Tensor>,
    pub step: u64,
}

/// Frozen training state: both networks, optimizer state, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: GanArchitecture,
    pub grid: DelayGrid,
    pub epoch: usize,
    pub config_fingerprint: String,
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    /// Critic optimizer state; absent before any training step.
    pub d_optimizer: Option<AdamSnapshot>,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"PDPCKPT\0";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    architecture: GanArchitecture,
    grid: DelayGrid,
    epoch: usize,
    config_fingerprint: String,
    optimizer_step: Option<u64>,
    tensors: Vec<TensorEntry>,
}

/// Shapes a checkpoint's payload must carry for `arch`, in payload order,
/// excluding optimizer state.
fn expected_entries(arch: &GanArchitecture) -> Vec<TensorEntry> {
    let mut entries = Vec::new();
    let mut push_net = |prefix: &str, widths: &[usize]| {
        for (i, w) in widths.windows(2).enumerate() {
            entries.push(TensorEntry {
                name: format!("{prefix}{i}.weight"),
                rows: w[0],
                cols: w[1],
            });
            entries.push(TensorEntry {
                name: format!("{prefix}{i}.bias"),
                rows: 1,
                cols: w[1],
            });
        }
    };
    push_net("g", &arch.generator_widths());
    push_net("d", &arch.discriminator_widths());
    entries
}

impl Checkpoint {
    /// All parameter tensors in payload order: generator layers then
    /// discriminator layers, weight before bias.
    fn param_tensors(&self) -> Vec<&Tensor> {
        self.generator
            .layers
            .iter()
            .chain(&self.discriminator.layers)
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    /// Verifies that network shapes match the architecture descriptor,
    /// listing every differing layer.
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if self.grid.num_points() != self.architecture.pdp_len {
            return Err(Error::InvalidInput(format!(
                "grid has {} points but the architecture produces {}",
                self.grid.num_points(),
                self.architecture.pdp_len
            )));
        }
        let expected = expected_entries(&self.architecture);
        let actual = self.param_tensors();
        let mut diffs = Vec::new();
        if expected.len() != actual.len() {
            diffs.push(format!(
                "{} tensors, architecture declares {}",
                actual.len(),
                expected.len()
            ));
        } else {
            for (e, a) in expected.iter().zip(&actual) {
                if (e.rows, e.cols) != a.shape() {
                    diffs.push(format!(
                        "{}: {}x{} vs declared {}x{}",
                        e.name,
                        a.shape().0,
                        a.shape().1,
                        e.rows,
                        e.cols
                    ));
                }
            }
        }
        if !diffs.is_empty() {
            return Err(Error::ArchitectureMismatch(diffs.join("; ")));
        }
        if let Some(opt) = &self.d_optimizer {
            let d_tensors: Vec<&Tensor> = self
                .discriminator
                .layers
                .iter()
                .flat_map(|l| [&l.weight, &l.bias])
                .collect();
            if opt.m.len() != d_tensors.len() || opt.v.len() != d_tensors.len() {
                return Err(Error::ArchitectureMismatch(format!(
                    "optimizer tracks {} tensors, discriminator has {}",
                    opt.m.len(),
                    d_tensors.len()
                )));
            }
            for (i, t) in d_tensors.iter().enumerate() {
                if opt.m[i].shape() != t.shape() || opt.v[i].shape() != t.shape() {
                    return Err(Error::ArchitectureMismatch(format!(
                        "optimizer moment {i} shape differs from its parameter"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Writes a checkpoint: magic, little-endian header length, JSON header,
/// then every tensor's values as little-endian doubles in header order.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.validate()?;
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    for (entry, t) in expected_entries(&ckpt.architecture).into_iter().zip(ckpt.param_tensors()) {
        tensors.push((entry.name, t));
    }
    if let Some(opt) = &ckpt.d_optimizer {
        for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
            tensors.push((format!("adam{i}.m"), m));
            tensors.push((format!("adam{i}.v"), v));
        }
    }

    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION,
        architecture: ckpt.architecture.clone(),
        grid: ckpt.grid,
        epoch: ckpt.epoch,
        config_fingerprint: ckpt.config_fingerprint.clone(),
        optimizer_step: ckpt.d_optimizer.as_ref().map(|o| o.step),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let payload_len: usize = tensors.iter().map(|(_, t)| t.len() * 8).sum();
    let mut bytes =
        Vec::with_capacity(CHECKPOINT_MAGIC.len() + 4 + header_bytes.len() + payload_len);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_bytes);
    for (_, t) in &tensors {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

/// Reads a checkpoint written by [`save_checkpoint`], re-validating magic,
/// version, header shapes, and payload size.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let path_str = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingFile(path_str));
    }
    let bytes = fs::read(path)?;
    let format_err = |message: String| Error::FileFormat {
        path: path_str.clone(),
        row: None,
        message,
    };

    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(format_err("not a checkpoint file (bad magic)".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12 + header_len;
    if bytes.len() < header_end {
        return Err(format_err("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| format_err(format!("malformed header: {e}")))?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path_str,
            found: header.format_version,
            supported: CHECKPOINT_FORMAT_VERSION,
        });
    }

    let payload_len: usize = header.tensors.iter().map(|e| e.rows * e.cols * 8).sum();
    if bytes.len() != header_end + payload_len {
        return Err(format_err(format!(
            "payload is {} bytes, header declares {payload_len}",
            bytes.len() - header_end
        )));
    }

    let mut offset = header_end;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let count = entry.rows * entry.cols;
        let data: Vec<f64> = bytes[offset..offset + count * 8]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        offset += count * 8;
        tensors.push(Tensor::from_vec(entry.rows, entry.cols, data)?);
    }

    // Partition the flat tensor list back into networks and optimizer state.
    let g_layer_count = header.architecture.generator_widths().len() - 1;
    let d_layer_count = header.architecture.discriminator_widths().len() - 1;
    let net_tensor_count = 2 * (g_layer_count + d_layer_count);
    if header.tensors.len() < net_tensor_count {
        return Err(Error::ArchitectureMismatch(format!(
            "{} tensors in file, architecture needs {net_tensor_count}",
            header.tensors.len()
        )));
    }

    let mut iter = tensors.into_iter();
    let mut take_layers = |count: usize| -> Vec<DenseLayer> {
        (0..count)
            .map(|_| DenseLayer {
                weight: iter.next().expect("counted"),
                bias: iter.next().expect("counted"),
            })
            .collect()
    };
    let generator = GeneratorNet {
        layers: take_layers(g_layer_count),
        slope: header.architecture.leaky_slope,
    };
    let discriminator = DiscriminatorNet {
        layers: take_layers(d_layer_count),
        slope: header.architecture.leaky_slope,
    };

    let rest: Vec<Tensor> = iter.collect();
    let d_optimizer = if rest.is_empty() {
        None
    } else {
        if rest.len() % 2 != 0 {
            return Err(Error::ArchitectureMismatch(format!(
                "{} optimizer tensors do not form m/v pairs",
                rest.len()
            )));
        }
        let step = header.optimizer_step.ok_or_else(|| {
            Error::ArchitectureMismatch("optimizer tensors without a step counter".into())
        })?;
        let mut m = Vec::new();
        let mut v = Vec::new();
        for pair in rest.chunks_exact(2) {
            m.push(pair[0].clone());
            v.push(pair[1].clone());
        }
        Some(AdamSnapshot { m, v, step })
    };

    let ckpt = Checkpoint {
        architecture: header.architecture,
        grid: header.grid,
        epoch: header.epoch,
        config_fingerprint: header.config_fingerprint,
        generator,
        discriminator,
        d_optimizer,
    };
    ckpt.validate()?;
    Ok(ckpt)
}
