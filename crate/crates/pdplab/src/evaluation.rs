//! Set-level comparison of generated and reference PDPs.
//!
//! Metrics: RMSE between average profiles (linear and dB domains), 1-D SSIM
//! over paired profiles with its empirical CDF, RMS delay-spread CDFs, and
//! an order-statistics Wasserstein distance used as a distribution oracle.
//! [`EvalReport`] carries no timestamps, so identical inputs serialize to
//! identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{rms_delay_spread, DelayGrid, Pdp};
use crate::dataset::{write_atomic, PdpDataset};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// SSIM sliding-window length.
pub const SSIM_WINDOW: usize = 11;
/// Stabilizer on the mean term, (0.01 R)^2 with dynamic range R = 1.
pub const SSIM_C1: f64 = 1e-4;
/// Stabilizer on the variance term, (0.03 R)^2 with dynamic range R = 1.
pub const SSIM_C2: f64 = 9e-4;
/// Default SSIM threshold reported as "fraction above".
pub const DEFAULT_SSIM_THRESHOLD: f64 = 0.6;

/// Per-bin arithmetic mean of a nonempty set of same-grid PDPs.
pub fn average_pdp(pdps: &[Pdp]) -> Result<Pdp> {
    let first = pdps
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot average an empty PDP set".into()))?;
    let grid = first.grid();
    let mut acc = vec![0.0; grid.num_points()];
    for (i, p) in pdps.iter().enumerate() {
        if p.grid() != grid {
            return Err(Error::ShapeMismatch {
                context: "average_pdp",
                left: format!("{:?}", grid),
                right: format!("profile {i}: {:?}", p.grid()),
            });
        }
        for (a, v) in acc.iter_mut().zip(p.powers()) {
            *a += v;
        }
    }
    let n = pdps.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Pdp::new(acc, grid, pdps.iter().all(|p| p.is_normalized()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseDomain {
    Linear,
    Db,
}

/// Power floor applied before the dB transform so zero bins stay finite.
pub const DB_FLOOR: f64 = 1e-10;

fn to_db(p: f64) -> f64 {
    10.0 * p.max(DB_FLOOR).log10()
}

/// Root-mean-square difference between two same-grid profiles, over linear
/// powers or their dB transforms (floored at [`DB_FLOOR`]).
pub fn rmse(a: &Pdp, b: &Pdp, domain: RmseDomain) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::ShapeMismatch {
            context: "rmse",
            left: format!("{:?}", a.grid()),
            right: format!("{:?}", b.grid()),
        });
    }
    let n = a.powers().len() as f64;
    let sum: f64 = a
        .powers()
        .iter()
        .zip(b.powers())
        .map(|(&x, &y)| {
            let (x, y) = match domain {
                RmseDomain::Linear => (x, y),
                RmseDomain::Db => (to_db(x), to_db(y)),
            };
            (x - y) * (x - y)
        })
        .sum();
    Ok((sum / n).sqrt())
}

/// Mean SSIM over length-11 sliding windows (stride 1, uniform weights).
/// Returns 1 exactly when both inputs are the same profile.
pub fn ssim_1d(a: &Pdp, b: &Pdp) -> Result<f64> {
    let (xa, xb) = (a.powers(), b.powers());
    if xa.len() != xb.len() {
        return Err(Error::ShapeMismatch {
            context: "ssim_1d",
            left: format!("{} points", xa.len()),
            right: format!("{} points", xb.len()),
        });
    }
    if xa.len() < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "ssim_1d needs at least {SSIM_WINDOW} points, got {}",
            xa.len()
        )));
    }
    let w = SSIM_WINDOW as f64;
    let mut sum = 0.0;
    let windows = xa.len() - SSIM_WINDOW + 1;
    for start in 0..windows {
        let (wa, wb) = (&xa[start..start + SSIM_WINDOW], &xb[start..start + SSIM_WINDOW]);
        let mu_a = wa.iter().sum::<f64>() / w;
        let mu_b = wb.iter().sum::<f64>() / w;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        let mut cov = 0.0;
        for (&va, &vb) in wa.iter().zip(wb) {
            var_a += (va - mu_a) * (va - mu_a);
            var_b += (vb - mu_b) * (vb - mu_b);
            cov += (va - mu_a) * (vb - mu_b);
        }
        var_a /= w;
        var_b /= w;
        cov /= w;
        let num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
        sum += num / den;
    }
    Ok(sum / windows as f64)
}

/// How generated profiles are matched to reference profiles for SSIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Pair index i with index i; requires equal set sizes. Intended for
    /// self-comparisons.
    Identity,
    /// Pair each generated profile with a uniformly drawn reference profile.
    Random { seed: u64 },
}

/// SSIM values over a pairing, with their empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsimCdf {
    /// One value per generated profile, in pairing order.
    pub values: Vec<f64>,
    /// The same values sorted ascending.
    pub sorted: Vec<f64>,
    /// Empirical CDF heights for `sorted`: (i+1)/n.
    pub quantiles: Vec<f64>,
    pub threshold: f64,
    /// Fraction of values strictly above `threshold`.
    pub fraction_above: f64,
}

pub fn ssim_cdf(
    reference: &[Pdp],
    generated: &[Pdp],
    threshold: f64,
    pairing: Pairing,
) -> Result<SsimCdf> {
    if reference.is_empty() || generated.is_empty() {
        return Err(Error::InvalidInput("ssim_cdf needs nonempty sets".into()));
    }
    let values = match pairing {
        Pairing::Identity => {
            if reference.len() != generated.len() {
                return Err(Error::ShapeMismatch {
                    context: "ssim identity pairing",
                    left: format!("{} reference profiles", reference.len()),
                    right: format!("{} generated profiles", generated.len()),
                });
            }
            generated
                .iter()
                .zip(reference)
                .map(|(g, r)| ssim_1d(r, g))
                .collect::<Result<Vec<f64>>>()?
        }
        Pairing::Random { seed } => {
            let mut rng = RandomStream::from_seed(seed);
            generated
                .iter()
                .map(|g| ssim_1d(&reference[rng.index(reference.len())], g))
                .collect::<Result<Vec<f64>>>()?
        }
    };
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let quantiles = (0..n).map(|i| (i + 1) as f64 / n as f64).collect();
    let above = values.iter().filter(|&&v| v > threshold).count();
    Ok(SsimCdf {
        fraction_above: above as f64 / n as f64,
        values,
        sorted,
        quantiles,
        threshold,
    })
}

/// RMS delay spreads of every profile, sorted ascending.
pub fn delay_spread_cdf(pdps: &[Pdp]) -> Result<Vec<f64>> {
    if pdps.is_empty() {
        return Err(Error::InvalidInput("delay_spread_cdf needs a nonempty set".into()));
    }
    let mut spreads = Vec::with_capacity(pdps.len());
    for (i, p) in pdps.iter().enumerate() {
        let s = rms_delay_spread(p).map_err(|e| match e {
            Error::ZeroTotalPower => {
                Error::InvalidInput(format!("profile {i} has zero total power"))
            }
            other => other,
        })?;
        spreads.push(s);
    }
    spreads.sort_by(f64::total_cmp);
    Ok(spreads)
}

/// Order-statistics Wasserstein-1 distance: both samples are resampled onto
/// a common midpoint-quantile grid of size max(|a|, |b|) and the mean
/// absolute difference of the matched quantiles is returned.
pub fn wasserstein_1d(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::InvalidInput("wasserstein_1d needs nonempty samples".into()));
    }
    let mut sa = samples_a.to_vec();
    let mut sb = samples_b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let m = sa.len().max(sb.len());
    let quantile = |sorted: &[f64], p: f64| -> f64 {
        let idx = ((p * sorted.len() as f64) as usize).min(sorted.len() - 1);
        sorted[idx]
    };
    let mut sum = 0.0;
    for k in 0..m {
        let p = (k as f64 + 0.5) / m as f64;
        sum += (quantile(&sa, p) - quantile(&sb, p)).abs();
    }
    Ok(sum / m as f64)
}

/// Per-profile total received powers, in dataset order.
pub fn total_powers(pdps: &[Pdp]) -> Vec<f64> {
    pdps.iter().map(Pdp::total_power).collect()
}

/// Full comparison of a generated set against a reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub grid: DelayGrid,
    pub reference_count: usize,
    pub generated_count: usize,
    /// RMSE between the two average profiles over linear powers.
    pub rmse_linear: f64,
    /// RMSE between the two average profiles after the dB transform.
    pub rmse_db: f64,
    pub ssim_threshold: f64,
    pub ssim_fraction_above: f64,
    pub ssim_values: Vec<f64>,
    pub ssim_cdf: Vec<f64>,
    pub ssim_cdf_quantiles: Vec<f64>,
    pub delay_spread_reference_s: Vec<f64>,
    pub delay_spread_generated_s: Vec<f64>,
    /// Wasserstein-1 distance between the total-power marginals.
    pub wasserstein_total_power: f64,
    pub reference_average: Vec<f64>,
    pub generated_average: Vec<f64>,
}

pub fn evaluate_sets(
    reference: &PdpDataset,
    generated: &PdpDataset,
    ssim_threshold: f64,
    pairing: Pairing,
) -> Result<EvalReport> {
    if reference.grid != generated.grid {
        return Err(Error::ShapeMismatch {
            context: "evaluate_sets",
            left: format!("reference {:?}", reference.grid),
            right: format!("generated {:?}", generated.grid),
        });
    }
    let ref_pdps = reference.pdps()?;
    let gen_pdps = generated.pdps()?;
    let ref_avg = average_pdp(&ref_pdps)?;
    let gen_avg = average_pdp(&gen_pdps)?;
    let ssim = ssim_cdf(&ref_pdps, &gen_pdps, ssim_threshold, pairing)?;

    Ok(EvalReport {
        grid: reference.grid,
        reference_count: ref_pdps.len(),
        generated_count: gen_pdps.len(),
        rmse_linear: rmse(&ref_avg, &gen_avg, RmseDomain::Linear)?,
        rmse_db: rmse(&ref_avg, &gen_avg, RmseDomain::Db)?,
        ssim_threshold,
        ssim_fraction_above: ssim.fraction_above,
        ssim_values: ssim.values,
        ssim_cdf: ssim.sorted,
        ssim_cdf_quantiles: ssim.quantiles,
        delay_spread_reference_s: delay_spread_cdf(&ref_pdps)?,
        delay_spread_generated_s: delay_spread_cdf(&gen_pdps)?,
        wasserstein_total_power: wasserstein_1d(
            &total_powers(&ref_pdps),
            &total_powers(&gen_pdps),
        )?,
        reference_average: ref_avg.powers().to_vec(),
        generated_average: gen_avg.powers().to_vec(),
    })
}

/// Writes `report.json` plus one CSV per figure into `dir`:
/// `average_pdp.csv`, `ssim_cdf.csv`, and `delay_spread_cdf.csv`.
pub fn save_eval_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    write_atomic(&dir.join("report.json"), &json)?;

    let mut avg = String::from("delay_s,reference,generated\n");
    for (i, (r, g)) in report
        .reference_average
        .iter()
        .zip(&report.generated_average)
        .enumerate()
    {
        avg.push_str(&format!("{},{r},{g}\n", report.grid.delay_at(i)));
    }
    write_atomic(&dir.join("average_pdp.csv"), avg.as_bytes())?;

    let mut ssim = String::from("ssim,quantile\n");
    for (v, q) in report.ssim_cdf.iter().zip(&report.ssim_cdf_quantiles) {
        ssim.push_str(&format!("{v},{q}\n"));
    }
    write_atomic(&dir.join("ssim_cdf.csv"), ssim.as_bytes())?;

    let mut ds = String::from("set,delay_spread_s,quantile\n");
    for (name, values) in [
        ("reference", &report.delay_spread_reference_s),
        ("generated", &report.delay_spread_generated_s),
    ] {
        let n = values.len();
        for (i, v) in values.iter().enumerate() {
            ds.push_str(&format!("{name},{v},{}\n", (i + 1) as f64 / n as f64));
        }
    }
    write_atomic(&dir.join("delay_spread_cdf.csv"), ds.as_bytes())
}
