//! Multipath channel primitives.
//!
//! A channel impulse response is a list of discrete paths, each with a delay,
//! a real amplitude gain, and a phase. Binning the response onto a uniform
//! delay grid and taking squared magnitudes yields the power delay profile
//! that everything downstream consumes. Profiles can also be recovered from
//! frequency-domain transfer function measurements over a chosen sub-band.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One resolvable propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipathComponent {
    pub delay_s: f64,
    pub gain: f64,
    pub phase_rad: f64,
}

/// Channel impulse response: a finite set of paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cir {
    pub paths: Vec<MultipathComponent>,
}

/// Uniform delay axis shared by all profiles in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    num_points: usize,
    spacing_s: f64,
}

impl DelayGrid {
    pub fn new(num_points: usize, spacing_s: f64) -> Result<Self> {
        if num_points < 2 {
            return Err(Error::InvalidInput(format!(
                "delay grid needs at least 2 points, got {num_points}"
            )));
        }
        if !(spacing_s > 0.0) || !spacing_s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "delay grid spacing must be positive and finite, got {spacing_s}"
            )));
        }
        Ok(Self {
            num_points,
            spacing_s,
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn spacing_s(&self) -> f64 {
        self.spacing_s
    }

    pub fn delay_at(&self, index: usize) -> f64 {
        index as f64 * self.spacing_s
    }

    /// Last grid delay.
    pub fn span_s(&self) -> f64 {
        (self.num_points - 1) as f64 * self.spacing_s
    }
}

impl Default for DelayGrid {
    /// 401 points at 1 ns spacing.
    fn default() -> Self {
        Self {
            num_points: 401,
            spacing_s: 1e-9,
        }
    }
}

/// Power delay profile on a [`DelayGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pdp {
    powers: Vec<f64>,
    grid: DelayGrid,
    normalized: bool,
}

impl Pdp {
    pub fn new(powers: Vec<f64>, grid: DelayGrid, normalized: bool) -> Result<Self> {
        if powers.len() != grid.num_points() {
            return Err(Error::ShapeMismatch {
                context: "pdp",
                left: format!("grid {}", grid.num_points()),
                right: format!("powers {}", powers.len()),
            });
        }
        Ok(Self {
            powers,
            grid,
            normalized,
        })
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn grid(&self) -> DelayGrid {
        self.grid
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// Min-max parameters recorded when a profile is scaled to `[0, 1]`, needed
/// to undo the scaling. A flat profile has no usable range; it normalizes to
/// all zeros and is flagged so the inverse can restore the constant level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

/// Frequency-domain channel measurement: complex samples on a uniform
/// frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTransferFunction {
    pub start_frequency_hz: f64,
    pub frequency_spacing_hz: f64,
    /// `(re, im)` pairs, one per frequency point.
    pub samples: Vec<(f64, f64)>,
}

impl ChannelTransferFunction {
    pub fn new(
        start_frequency_hz: f64,
        frequency_spacing_hz: f64,
        samples: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if !(frequency_spacing_hz > 0.0) || !frequency_spacing_hz.is_finite() {
            return Err(Error::InvalidInput(format!(
                "frequency spacing must be positive and finite, got {frequency_spacing_hz}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "transfer function needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        Ok(Self {
            start_frequency_hz,
            frequency_spacing_hz,
            samples,
        })
    }

    pub fn frequency_at(&self, index: usize) -> f64 {
        self.start_frequency_hz + index as f64 * self.frequency_spacing_hz
    }
}

/// Bins a channel impulse response onto a delay grid and returns the power
/// per bin.
///
/// Each path lands in its nearest grid bin; paths sharing a bin add as
/// complex amplitudes before the magnitude is squared, so co-binned paths
/// interfere rather than simply summing power. A path whose nearest bin lies
/// off the grid is an error identifying the offending path.
pub fn cir_to_pdp(cir: &Cir, grid: DelayGrid) -> Result<Pdp> {
    let mut re = vec![0.0; grid.num_points()];
    let mut im = vec![0.0; grid.num_points()];
    for (index, path) in cir.paths.iter().enumerate() {
        let position = path.delay_s / grid.spacing_s();
        let bin = position.round();
        if bin < 0.0 || bin >= grid.num_points() as f64 {
            return Err(Error::PathOutsideGrid {
                index,
                delay_s: path.delay_s,
                span_s: grid.span_s(),
            });
        }
        let bin = bin as usize;
        re[bin] += path.gain * path.phase_rad.cos();
        im[bin] += path.gain * path.phase_rad.sin();
    }
    let powers = re
        .iter()
        .zip(&im)
        .map(|(&r, &i)| r * r + i * i)
        .collect();
    Pdp::new(powers, grid, false)
}

/// Scales a profile to `[0, 1]` by its own min and max.
///
/// A flat profile (max equal to min) maps to all zeros with the degenerate
/// flag set, so the scaling stays invertible.
pub fn minmax_normalize(pdp: &Pdp) -> Result<(Pdp, NormParams)> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &p in pdp.powers() {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cannot normalize a profile containing {p}"
            )));
        }
        min = min.min(p);
        max = max.max(p);
    }
    let range = max - min;
    if range == 0.0 {
        let zeros = vec![0.0; pdp.powers().len()];
        return Ok((
            Pdp::new(zeros, pdp.grid(), true)?,
            NormParams {
                min,
                max,
                degenerate: true,
            },
        ));
    }
    let scaled = pdp.powers().iter().map(|&p| (p - min) / range).collect();
    Ok((
        Pdp::new(scaled, pdp.grid(), true)?,
        NormParams {
            min,
            max,
            degenerate: false,
        },
    ))
}

/// Undoes [`minmax_normalize`] using the recorded parameters. A degenerate
/// profile denormalizes to the constant level it came from.
pub fn denormalize(pdp: &Pdp, params: &NormParams) -> Result<Pdp> {
    let powers = if params.degenerate {
        vec![params.min; pdp.powers().len()]
    } else {
        let range = params.max - params.min;
        pdp.powers().iter().map(|&p| p * range + params.min).collect()
    };
    Pdp::new(powers, pdp.grid(), false)
}

/// Power-weighted mean delay.
pub fn mean_delay(pdp: &Pdp) -> Result<f64> {
    let total = pdp.total_power();
    if total <= 0.0 {
        return Err(Error::ZeroTotalPower);
    }
    let weighted: f64 = pdp
        .powers()
        .iter()
        .enumerate()
        .map(|(i, &p)| p * pdp.grid().delay_at(i))
        .sum();
    Ok(weighted / total)
}

/// Root-mean-square delay spread: the square root of the power-weighted
/// second central moment of delay.
pub fn rms_delay_spread(pdp: &Pdp) -> Result<f64> {
    let total = pdp.total_power();
    if total <= 0.0 {
        return Err(Error::ZeroTotalPower);
    }
    let mean = mean_delay(pdp)?;
    let second: f64 = pdp
        .powers()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let d = pdp.grid().delay_at(i) - mean;
            p * d * d
        })
        .sum();
    Ok((second / total).sqrt())
}

/// Converts a measured transfer function to a power delay profile over a
/// chosen sub-band.
///
/// Samples with frequencies inside `[band_start_hz, band_start_hz +
/// band_width_hz]` are selected and transformed to the delay domain with an
/// inverse DFT; the resulting grid has `K` points spaced `1 / (K * spacing)`
/// apart, where `K` is the number of selected samples. A band reaching
/// outside the measured span is an error naming both ranges.
pub fn ctf_to_pdp(
    ctf: &ChannelTransferFunction,
    band_start_hz: f64,
    band_width_hz: f64,
) -> Result<Pdp> {
    if !(band_width_hz > 0.0) || !band_width_hz.is_finite() {
        return Err(Error::InvalidInput(format!(
            "band width must be positive and finite, got {band_width_hz}"
        )));
    }
    let band_end_hz = band_start_hz + band_width_hz;
    let span_start = ctf.start_frequency_hz;
    let span_end = ctf.frequency_at(ctf.samples.len() - 1);
    // Absorbs float error when band edges are derived from the same grid.
    let tol = ctf.frequency_spacing_hz * 1e-9;
    if band_start_hz < span_start - tol || band_end_hz > span_end + tol {
        return Err(Error::BandOutsideSpan {
            band_start: band_start_hz,
            band_end: band_end_hz,
            span_start,
            span_end,
        });
    }

    let selected: Vec<(f64, f64)> = (0..ctf.samples.len())
        .filter(|&k| {
            let f = ctf.frequency_at(k);
            f >= band_start_hz - tol && f <= band_end_hz + tol
        })
        .map(|k| ctf.samples[k])
        .collect();
    let k_count = selected.len();
    if k_count < 2 {
        return Err(Error::InvalidInput(format!(
            "band [{band_start_hz}, {band_end_hz}] Hz selects {k_count} samples, need at least 2"
        )));
    }

    // Inverse DFT of the selected sub-band. K is small for measured data, so
    // the direct O(K^2) sum is fine and avoids an FFT dependency.
    let grid = DelayGrid::new(k_count, 1.0 / (k_count as f64 * ctf.frequency_spacing_hz))?;
    let mut powers = Vec::with_capacity(k_count);
    for n in 0..k_count {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &(hr, hi)) in selected.iter().enumerate() {
            let angle = 2.0 * std::f64::consts::PI * (k * n % k_count) as f64 / k_count as f64;
            let (s, c) = angle.sin_cos();
            re += hr * c - hi * s;
            im += hr * s + hi * c;
        }
        re /= k_count as f64;
        im /= k_count as f64;
        powers.push(re * re + im * im);
    }
    Pdp::new(powers, grid, false)
}
