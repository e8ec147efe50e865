//! Tri-level variance detector: the D²PS sample variance is compared with
//! two chi-squared thresholds derived from the spoofing-free prediction.
//!
//! Too small a variance means every receiver sees the same counterfeit
//! geometry (fully spoofed, H1); too large means a mix of authentic and
//! counterfeit positions (partially spoofed, H2).

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::d2ps::D2psSampleSet;
use crate::error::{invalid, Result};
use crate::statmodels::{chi2_cdf, chi2_inv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    /// Spoofing-free.
    H0,
    /// Fully spoofed.
    H1,
    /// Partially spoofed.
    H2,
}

impl Decision {
    /// Position on the variance axis: H1 < H0 < H2.
    pub fn variance_rank(self) -> u8 {
        match self {
            Decision::H1 => 0,
            Decision::H0 => 1,
            Decision::H2 => 2,
        }
    }

    pub fn is_detection(self) -> bool {
        self != Decision::H0
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::H0 => "H0",
            Decision::H1 => "H1",
            Decision::H2 => "H2",
        })
    }
}

/// Zero-mean variance estimate `sum(d^2) / (N - 1)`.
pub fn sample_variance(set: &D2psSampleSet) -> Result<f64> {
    sample_variance_of(&set.samples)
}

pub fn sample_variance_of(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(invalid(format!(
            "variance needs at least 2 samples, got {n}"
        )));
    }
    Ok(samples.iter().map(|d| d * d).sum::<f64>() / (n - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub gamma1: f64,
    pub gamma2: f64,
    pub epsilon: f64,
    pub m: usize,
    pub sigma2_h0: f64,
}

/// Two-sided thresholds with `epsilon / 2` false alarm on each side and
/// `m` degrees of freedom. `epsilon = 1` collapses both to the median.
pub fn thresholds(sigma2_h0: f64, m: usize, epsilon: f64) -> Result<Thresholds> {
    if !(sigma2_h0 > 0.0) || !sigma2_h0.is_finite() {
        return Err(invalid(format!(
            "spoofing-free variance must be > 0, got {sigma2_h0}"
        )));
    }
    if m < 2 {
        return Err(invalid(format!("need at least 2 receivers, got {m}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(format!(
            "false-alarm probability must be in (0, 1], got {epsilon}"
        )));
    }
    let scale = sigma2_h0 / m as f64;
    Ok(Thresholds {
        gamma1: scale * chi2_inv(epsilon / 2.0, m)?,
        gamma2: scale * chi2_inv(1.0 - epsilon / 2.0, m)?,
        epsilon,
        m,
        sigma2_h0,
    })
}

pub fn decide(sigma2_hat: f64, th: &Thresholds) -> Decision {
    if sigma2_hat < th.gamma1 {
        Decision::H1
    } else if sigma2_hat <= th.gamma2 {
        Decision::H0
    } else {
        Decision::H2
    }
}

/// Predicted detection probabilities for the fully spoofed and partially
/// spoofed hypotheses, given their variances.
pub fn predicted_pd(
    th: &Thresholds,
    sigma2_h1: f64,
    sigma2_h2: f64,
    m: usize,
) -> Result<(f64, f64)> {
    if !(sigma2_h1 > 0.0) || !(sigma2_h2 > 0.0) {
        return Err(invalid("hypothesis variances must be > 0"));
    }
    if m < 1 {
        return Err(invalid("need at least one degree of freedom"));
    }
    let mf = m as f64;
    let pd_h1 = chi2_cdf(mf * th.gamma1 / sigma2_h1, m)?;
    let pd_h2 = 1.0 - chi2_cdf(mf * th.gamma2 / sigma2_h2, m)?;
    Ok((pd_h1, pd_h2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub region_id: usize,
    pub sample_variance: f64,
    pub thresholds: Thresholds,
    pub decision: Decision,
    pub predicted_pd_h1: Option<f64>,
    pub predicted_pd_h2: Option<f64>,
}

/// Run the detector on one region's set.
pub fn detect(
    region_id: usize,
    set: &D2psSampleSet,
    sigma2_h0: f64,
    epsilon: f64,
) -> Result<DetectionReport> {
    let th = thresholds(sigma2_h0, set.m, epsilon)?;
    let v = sample_variance(set)?;
    Ok(DetectionReport {
        region_id,
        sample_variance: v,
        thresholds: th,
        decision: decide(v, &th),
        predicted_pd_h1: None,
        predicted_pd_h2: None,
    })
}

impl DetectionReport {
    /// Attach predictions for known hypothesis variances.
    pub fn with_predictions(mut self, sigma2_h1: f64, sigma2_h2: f64) -> Result<Self> {
        let (a, b) = predicted_pd(&self.thresholds, sigma2_h1, sigma2_h2, self.thresholds.m)?;
        self.predicted_pd_h1 = Some(a);
        self.predicted_pd_h2 = Some(b);
        Ok(self)
    }
}

/// One line of the detection CSV. Numeric fields are optional so the GLRT
/// baseline can share the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub region_id: usize,
    pub variance_m2: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub decision: Decision,
    pub pd_h1_pred: Option<f64>,
    pub pd_h2_pred: Option<f64>,
}

impl From<&DetectionReport> for DetectionRow {
    fn from(r: &DetectionReport) -> Self {
        Self {
            region_id: r.region_id,
            variance_m2: Some(r.sample_variance),
            gamma1: Some(r.thresholds.gamma1),
            gamma2: Some(r.thresholds.gamma2),
            decision: r.decision,
            pd_h1_pred: r.predicted_pd_h1,
            pd_h2_pred: r.predicted_pd_h2,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `region_id,variance_m2,gamma1,gamma2,decision,pd_h1_pred,pd_h2_pred`,
/// plus a trailing `method` column when `method` is given.
pub fn write_detection_csv<W: Write>(
    out: W,
    rows: &[DetectionRow],
    method: Option<&str>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "region_id",
        "variance_m2",
        "gamma1",
        "gamma2",
        "decision",
        "pd_h1_pred",
        "pd_h2_pred",
    ];
    if method.is_some() {
        header.push("method");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.region_id.to_string(),
            opt(r.variance_m2),
            opt(r.gamma1),
            opt(r.gamma2),
            r.decision.to_string(),
            opt(r.pd_h1_pred),
            opt(r.pd_h2_pred),
        ];
        if let Some(m) = method {
            rec.push(m.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
