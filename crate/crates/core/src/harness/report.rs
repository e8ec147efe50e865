use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::d2ps::D2psSampleSet;
use crate::error::{invalid, Error, Result};
use crate::statmodels::{normal_cdf, VariancePrediction};

/// Kolmogorov-Smirnov distance between `samples` and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x: Vec<f64> = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample critical value at significance `level`
/// (0.10, 0.05 or 0.01).
pub fn ks_critical_value(n: usize, level: f64) -> Result<f64> {
    let c = if (level - 0.01).abs() < 1e-12 {
        1.627_6
    } else if (level - 0.05).abs() < 1e-12 {
        1.358_1
    } else if (level - 0.10).abs() < 1e-12 {
        1.223_8
    } else {
        return Err(invalid(format!("no KS constant for level {level}")));
    };
    Ok(c / (n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Empirical density, 1/m.
    pub density: f64,
    /// `N(0, sigma^2)` density at the bin centre.
    pub predicted_density: f64,
}

impl HistogramBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    pub bins: Vec<HistogramBin>,
    pub predicted_sigma2: f64,
    /// KS distance of the samples from the predicted normal.
    pub ks: f64,
}

/// Bin a sample set and sample the predicted normal density on the bin
/// centres. A set with no spread lands in one bin.
pub fn histogram_report(
    set: &D2psSampleSet,
    prediction: &VariancePrediction,
    n_bins: usize,
) -> Result<HistogramReport> {
    if set.is_empty() {
        return Err(invalid("empty sample set"));
    }
    if n_bins < 1 {
        return Err(invalid("need at least one bin"));
    }
    let lo = set.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = set
        .samples
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi, n_bins) = if hi > lo {
        (lo, hi, n_bins)
    } else {
        (lo - 0.5, hi + 0.5, 1)
    };
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &s in &set.samples {
        let k = (((s - lo) / width).floor() as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let sigma2 = prediction.sigma2;
    let n = set.len() as f64;
    let bins = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let b_lo = lo + k as f64 * width;
            let b_hi = if k + 1 == n_bins { hi } else { b_lo + width };
            let x = 0.5 * (b_lo + b_hi);
            let predicted = if sigma2 > 0.0 {
                (-x * x / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
            } else {
                0.0
            };
            HistogramBin {
                lo: b_lo,
                hi: b_hi,
                count: c,
                density: c as f64 / (n * width),
                predicted_density: predicted,
            }
        })
        .collect();
    let sd = sigma2.sqrt();
    let ks = if sd > 0.0 {
        ks_statistic(&set.samples, |x| normal_cdf(x / sd))
    } else {
        f64::NAN
    };
    Ok(HistogramReport {
        bins,
        predicted_sigma2: sigma2,
        ks,
    })
}

impl HistogramReport {
    /// `bin_lo,bin_hi,bin_center,count,density,predicted_density` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "bin_lo",
            "bin_hi",
            "bin_center",
            "count",
            "density",
            "predicted_density",
        ])?;
        for b in &self.bins {
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.center().to_string(),
                b.count.to_string(),
                b.density.to_string(),
                b.predicted_density.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What produced a set of output files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub trials: usize,
    /// SHA-256 of the configuration text.
    pub config_hash: String,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, trials: usize, config_text: &str) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            command: command.into(),
            seed,
            trials,
            config_hash,
            outputs: Vec::new(),
            wall_time_s: 0.0,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
