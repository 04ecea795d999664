//! Stochastic multipath channel generator and parameter fitting.
//!
//! Channels follow an exponential-decay recipe in the Saleh-Valenzuela
//! family: path arrivals are a Poisson-count exponential-interarrival
//! process, path powers decay exponentially in delay with optional lognormal
//! shadowing, and the resulting gains are normalized to unit total power.
//! [`fit_params`] goes the other way, extracting matching parameters from a
//! set of observed profiles by method of moments.

use serde::{Deserialize, Serialize};

use crate::channel::{cir_to_pdp, minmax_normalize, Cir, DelayGrid, MultipathComponent, Pdp};
use crate::dataset::{DatasetMeta, PdpDataset};
use crate::error::{Error, Result};
use crate::fingerprint::fingerprint_json;
use crate::rng::RandomStream;

/// Distribution parameters of the stochastic channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticChannelParams {
    /// Mean path count before the at-least-one floor.
    pub num_paths_mean: f64,
    /// Exponential inter-arrival rate of path delays, per second.
    pub delay_rate_per_s: f64,
    /// Exponential power-decay constant, seconds.
    pub power_decay_s: f64,
    /// Per-path lognormal shadowing spread, dB.
    pub shadow_sigma_db: f64,
    /// Arrivals beyond this delay are dropped, seconds.
    pub max_delay_s: f64,
    /// Seed-independent descriptive text carried into dataset metadata.
    pub label: String,
}

impl StochasticChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.num_paths_mean >= 1.0) || !self.num_paths_mean.is_finite() {
            return Err(Error::InvalidInput(format!(
                "num_paths_mean must be at least 1, got {}",
                self.num_paths_mean
            )));
        }
        if !(self.delay_rate_per_s > 0.0) || !self.delay_rate_per_s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "delay_rate_per_s must be positive, got {}",
                self.delay_rate_per_s
            )));
        }
        if !(self.power_decay_s > 0.0) || !self.power_decay_s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "power_decay_s must be positive, got {}",
                self.power_decay_s
            )));
        }
        if !(self.shadow_sigma_db >= 0.0) || !self.shadow_sigma_db.is_finite() {
            return Err(Error::InvalidInput(format!(
                "shadow_sigma_db must be nonnegative, got {}",
                self.shadow_sigma_db
            )));
        }
        if !(self.max_delay_s >= 0.0) || !self.max_delay_s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "max_delay_s must be nonnegative, got {}",
                self.max_delay_s
            )));
        }
        Ok(())
    }
}

/// A dataset to generate: how many channels, from which distribution, on
/// which grid, from which seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub params: StochasticChannelParams,
    pub count: usize,
    pub grid: DelayGrid,
    pub rng_seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.count == 0 {
            return Err(Error::InvalidInput("dataset count must be at least 1".into()));
        }
        if self.params.max_delay_s > self.grid.span_s() {
            return Err(Error::InvalidInput(format!(
                "max_delay_s {} exceeds grid span {}",
                self.params.max_delay_s,
                self.grid.span_s()
            )));
        }
        Ok(())
    }
}

/// Draws one channel impulse response.
///
/// The path count is `max(1, Poisson(num_paths_mean))`. The first path sits
/// at delay zero; later delays accumulate exponential inter-arrivals and
/// stop at the first arrival beyond `max_delay_s`. Linear path power is
/// `exp(-delay / power_decay_s) * 10^(X/10)` with `X ~ N(0,
/// shadow_sigma_db^2)`, and gains are square roots of powers rescaled so the
/// gains' squares sum to one. Phases are uniform on `[0, 2 pi)`. The draw
/// order is fixed, so the result is a pure function of the stream state.
pub fn sample_cir(params: &StochasticChannelParams, rng: &mut RandomStream) -> Result<Cir> {
    params.validate()?;
    let drawn = rng.poisson(params.num_paths_mean).max(1) as usize;

    let mut delays = vec![0.0f64];
    while delays.len() < drawn {
        let next = delays.last().unwrap() + rng.exponential(params.delay_rate_per_s);
        if next > params.max_delay_s {
            break;
        }
        delays.push(next);
    }

    let powers: Vec<f64> = delays
        .iter()
        .map(|&delay| {
            let shadow_db = params.shadow_sigma_db * rng.normal();
            (-delay / params.power_decay_s).exp() * 10f64.powf(shadow_db / 10.0)
        })
        .collect();
    let total: f64 = powers.iter().sum();

    let paths = delays
        .iter()
        .zip(&powers)
        .map(|(&delay_s, &power)| MultipathComponent {
            delay_s,
            gain: (power / total).sqrt(),
            phase_rad: rng.uniform_in(0.0, 2.0 * std::f64::consts::PI),
        })
        .collect();
    Ok(Cir { paths })
}

/// Generates `spec.count` channels, bins each onto the grid, and min-max
/// normalizes each profile, keeping the per-profile normalization parameters.
/// Channels draw from independently split streams, so the output is the same
/// regardless of how generation is scheduled.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<PdpDataset> {
    spec.validate()?;
    let mut root = RandomStream::from_seed(spec.rng_seed);
    let mut streams: Vec<RandomStream> = (0..spec.count).map(|_| root.split()).collect();

    let mut rows = Vec::with_capacity(spec.count);
    let mut norm_params = Vec::with_capacity(spec.count);
    for stream in &mut streams {
        let cir = sample_cir(&spec.params, stream)?;
        let pdp = cir_to_pdp(&cir, spec.grid)?;
        let (normed, np) = minmax_normalize(&pdp)?;
        rows.push(normed.powers().to_vec());
        norm_params.push(np);
    }

    Ok(PdpDataset {
        grid: spec.grid,
        rows,
        normalized: true,
        norm_params: Some(norm_params),
        meta: DatasetMeta {
            provenance: "synthetic exponential-decay multipath model".to_string(),
            label: spec.params.label.clone(),
            seed: Some(spec.rng_seed),
            params_fingerprint: Some(fingerprint_json(&spec.params)?),
        },
    })
}

/// Relative power floor for fitting: bins more than 40 dB below the peak are
/// treated as empty.
pub const FIT_FLOOR_RELATIVE: f64 = 1e-4;

/// Extracts channel parameters from observed profiles by method of moments.
///
/// Per profile, the support is the set of bins within 40 dB of that
/// profile's peak; `num_paths_mean` is the mean support size and
/// `delay_rate_per_s` the mean inter-arrival count over the mean support
/// span. The decay constant comes from a within-profile regression of log
/// power on delay: every profile keeps its own intercept (absorbing its
/// overall scale) while all profiles share one slope. Averaging profiles
/// binwise first would not work here — later bins are occupied less often
/// because the arrival process dies out, so the dataset-average profile
/// decays faster than the per-path power does. The shadowing spread is the
/// pooled dB residual around the per-profile lines. Rates clamp to
/// `[1/span, 1/spacing]` and the decay constant to `[spacing, span]`;
/// profiles with empty support are skipped, and if none remain the fit
/// fails with an empty-support error.
pub fn fit_params(pdps: &[Pdp]) -> Result<StochasticChannelParams> {
    let Some(first) = pdps.first() else {
        return Err(Error::InvalidInput("fit_params: empty profile list".into()));
    };
    let grid = first.grid();
    if let Some(bad) = pdps.iter().find(|p| p.grid() != grid) {
        return Err(Error::ShapeMismatch {
            context: "fit_params grids",
            left: format!("{:?}", grid),
            right: format!("{:?}", bad.grid()),
        });
    }

    let spacing = grid.spacing_s();
    let span = grid.span_s();

    // Per-profile support statistics.
    let mut counts = Vec::new();
    let mut spans = Vec::new();
    let mut max_support_delay = 0.0f64;
    let mut kept = Vec::new();
    for pdp in pdps {
        let peak = pdp.powers().iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            continue;
        }
        let floor = peak * FIT_FLOOR_RELATIVE;
        let support: Vec<usize> = pdp
            .powers()
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p >= floor && p > 0.0)
            .map(|(i, _)| i)
            .collect();
        if support.is_empty() {
            continue;
        }
        let lo = *support.first().unwrap();
        let hi = *support.last().unwrap();
        counts.push(support.len() as f64);
        spans.push((hi - lo) as f64 * spacing);
        max_support_delay = max_support_delay.max(grid.delay_at(hi));
        kept.push((pdp, floor));
    }
    if kept.is_empty() {
        return Err(Error::EmptyFitSupport);
    }

    let n_kept = kept.len() as f64;
    let num_paths_mean = (counts.iter().sum::<f64>() / n_kept).max(1.0);
    let mean_span = spans.iter().sum::<f64>() / n_kept;
    let mean_gaps = counts.iter().map(|c| c - 1.0).sum::<f64>() / n_kept;
    let rate_max = 1.0 / spacing;
    let rate_min = 1.0 / span;
    let delay_rate_per_s = if mean_span > 0.0 {
        (mean_gaps / mean_span).clamp(rate_min, rate_max)
    } else {
        rate_max
    };

    // Decay from a within-profile regression of ln power on delay. A
    // profile's unit-total (or min-max) scaling shifts its log powers by a
    // constant, so each profile enters centered — its own intercept —
    // while all profiles share one slope. Arrival extinction changes which
    // bins exist, not the power-delay line through the bins that do, so
    // the shared slope reads the decay constant without the extinction
    // bias a binwise-average profile would pick up.
    let per_profile_points: Vec<Vec<(f64, f64)>> = kept
        .iter()
        .map(|(pdp, floor)| {
            pdp.powers()
                .iter()
                .enumerate()
                .filter(|&(_, &p)| p >= *floor && p > 0.0)
                .map(|(i, &p)| (grid.delay_at(i), p.ln()))
                .collect()
        })
        .collect();
    let mut sxx = 0.0f64;
    let mut sxy = 0.0f64;
    for points in &per_profile_points {
        if points.len() < 2 {
            continue;
        }
        let n = points.len() as f64;
        let x_bar = points.iter().map(|(x, _)| x).sum::<f64>() / n;
        let y_bar = points.iter().map(|(_, y)| y).sum::<f64>() / n;
        for &(x, y) in points {
            sxx += (x - x_bar) * (x - x_bar);
            sxy += (x - x_bar) * (y - y_bar);
        }
    }

    let gamma_min = spacing;
    let gamma_max = span;
    // Profiles whose support is a single bin are delta-like: decay faster
    // than the grid resolves, so the decay constant pins to its minimum.
    let all_single_bin = counts.iter().all(|&c| c <= 1.0);
    let (power_decay_s, shared_slope) = if all_single_bin || sxx <= 0.0 {
        (gamma_min, None)
    } else {
        let slope = sxy / sxx;
        let gamma = if slope < 0.0 { -1.0 / slope } else { gamma_max };
        (gamma.clamp(gamma_min, gamma_max), Some(slope))
    };

    // Shadowing from pooled dB residuals around each profile's own line
    // (per-profile intercept, shared slope).
    let shadow_sigma_db = match shared_slope {
        None => 0.0,
        Some(slope) => {
            let ln_to_db = 10.0 / std::f64::consts::LN_10;
            let mut sum_sq = 0.0f64;
            let mut count = 0usize;
            for points in &per_profile_points {
                if points.len() < 2 {
                    continue;
                }
                let n = points.len() as f64;
                let x_bar = points.iter().map(|(x, _)| x).sum::<f64>() / n;
                let y_bar = points.iter().map(|(_, y)| y).sum::<f64>() / n;
                for &(x, y) in points {
                    let residual = (y - y_bar) - slope * (x - x_bar);
                    sum_sq += (ln_to_db * residual) * (ln_to_db * residual);
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                (sum_sq / count as f64).sqrt()
            }
        }
    };

    Ok(StochasticChannelParams {
        num_paths_mean,
        delay_rate_per_s,
        power_decay_s,
        shadow_sigma_db,
        max_delay_s: max_support_delay.min(span),
        label: "fitted".to_string(),
    })
}
