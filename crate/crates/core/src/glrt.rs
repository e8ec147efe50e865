//! Pairwise GLRT voting baseline.
//!
//! Every (receiver pair, satellite pair) gets its own test of whether the
//! DDP series over the window is pure noise, which is what two receivers
//! locked onto the same counterfeit signals would see. The votes are then
//! aggregated with a supermajority rule.
//!
//! The per-pair statistic is `T = (sum_k ddp_k)^2 / (K * 4 sigma^2)`, which
//! is chi-squared with one degree of freedom when the DDP mean is zero.

use serde::{Deserialize, Serialize};

use crate::d2ps::{ddp, sdp};
use crate::detector::Decision;
use crate::error::{invalid, Result};
use crate::geometry::satellite_pairs;
use crate::n_choose_2;
use crate::scenario::EpochMeasurements;
use crate::statmodels::chi2_inv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlrtConfig {
    pub sigma_rho: f64,
    /// False-alarm probability of a single pair test.
    pub fa_pair: f64,
    pub vote_high: f64,
    pub vote_low: f64,
    pub k: usize,
}

impl Default for GlrtConfig {
    fn default() -> Self {
        Self {
            sigma_rho: 5.0,
            fa_pair: 0.01,
            vote_high: 0.9,
            vote_low: 0.9,
            k: 1,
        }
    }
}

impl GlrtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_rho > 0.0) || !self.sigma_rho.is_finite() {
            return Err(invalid("GLRT needs sigma_rho > 0"));
        }
        if !(self.fa_pair > 0.0 && self.fa_pair < 1.0) {
            return Err(invalid(format!(
                "pair false alarm {} outside (0, 1)",
                self.fa_pair
            )));
        }
        for v in [self.vote_high, self.vote_low] {
            if !(v > 0.5 && v <= 1.0) {
                return Err(invalid(format!("vote fraction {v} outside (0.5, 1]")));
            }
        }
        if self.k < 1 {
            return Err(invalid("GLRT needs at least one epoch"));
        }
        Ok(())
    }

    /// Statistic threshold: `chi2_inv(1 - fa_pair, 1)`.
    pub fn threshold(&self) -> Result<f64> {
        chi2_inv(1.0 - self.fa_pair, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vote {
    /// Both receivers spoofed: the DDP looks like pure noise.
    H1Spoofed,
    H0Authentic,
}

/// `(sum ddp)^2 / (K * 4 sigma^2)`
pub fn pair_statistic(ddp_series: &[f64], sigma_rho: f64) -> f64 {
    let s: f64 = ddp_series.iter().sum();
    s * s / (ddp_series.len() as f64 * 4.0 * sigma_rho * sigma_rho)
}

pub fn glrt_pair_test(ddp_series: &[f64], cfg: &GlrtConfig) -> Result<Vote> {
    cfg.validate()?;
    if ddp_series.is_empty() {
        return Err(invalid("empty DDP series"));
    }
    Ok(vote(
        pair_statistic(ddp_series, cfg.sigma_rho),
        cfg.threshold()?,
    ))
}

#[inline]
fn vote(t: f64, threshold: f64) -> Vote {
    if t <= threshold {
        Vote::H1Spoofed
    } else {
        Vote::H0Authentic
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlrtOutcome {
    pub n_tests: usize,
    pub n_h1_votes: usize,
    pub n_h0_votes: usize,
    pub decision: Decision,
}

impl GlrtOutcome {
    pub fn h1_fraction(&self) -> f64 {
        self.n_h1_votes as f64 / self.n_tests as f64
    }
}

fn aggregate_counts(n_h1: usize, n_tests: usize, cfg: &GlrtConfig) -> GlrtOutcome {
    let n_h0 = n_tests - n_h1;
    let h1 = n_h1 as f64 / n_tests as f64;
    let h0 = n_h0 as f64 / n_tests as f64;
    let decision = if h1 >= cfg.vote_high {
        Decision::H1
    } else if h0 >= cfg.vote_low {
        Decision::H0
    } else {
        Decision::H2
    };
    GlrtOutcome {
        n_tests,
        n_h1_votes: n_h1,
        n_h0_votes: n_h0,
        decision,
    }
}

pub fn glrt_aggregate(votes: &[Vote], cfg: &GlrtConfig) -> Result<GlrtOutcome> {
    cfg.validate()?;
    if votes.is_empty() {
        return Err(invalid("no votes to aggregate"));
    }
    let n_h1 = votes.iter().filter(|v| **v == Vote::H1Spoofed).count();
    Ok(aggregate_counts(n_h1, votes.len(), cfg))
}

/// Pair statistics of a window, sorted, so outcomes for many pair
/// false-alarm levels can be read off without recomputing DDPs.
#[derive(Debug, Clone)]
pub struct PairStatistics {
    sorted: Vec<f64>,
}

impl PairStatistics {
    /// One statistic per unordered receiver pair and satellite pair.
    pub fn compute(epochs: &[EpochMeasurements], sigma_rho: f64) -> Result<Self> {
        let first = epochs.first().ok_or_else(|| invalid("no epochs"))?;
        if !(sigma_rho > 0.0) {
            return Err(invalid("GLRT needs sigma_rho > 0"));
        }
        let m = first.n_receivers();
        let j = first.n_satellites();
        if m < 2 || j < 2 {
            return Err(invalid("GLRT needs at least 2 receivers and 2 satellites"));
        }
        if epochs
            .iter()
            .any(|e| e.n_receivers() != m || e.n_satellites() != j)
        {
            return Err(invalid("epochs in a GLRT window must share dimensions"));
        }
        let k = epochs.len() as f64;
        let norm = 1.0 / (k * 4.0 * sigma_rho * sigma_rho);
        let sat_pairs: Vec<(usize, usize)> = satellite_pairs(j).collect();
        let mut sorted = Vec::with_capacity(n_choose_2(m) * sat_pairs.len());
        for n in 0..m {
            for mm in n + 1..m {
                for &(i, jj) in &sat_pairs {
                    let mut s = 0.0;
                    for e in epochs {
                        s += ddp(
                            sdp(e.get(n, i), e.get(mm, i)),
                            sdp(e.get(n, jj), e.get(mm, jj)),
                        );
                    }
                    sorted.push(s * s * norm);
                }
            }
        }
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn n_tests(&self) -> usize {
        self.sorted.len()
    }

    pub fn outcome(&self, cfg: &GlrtConfig) -> Result<GlrtOutcome> {
        cfg.validate()?;
        let thr = cfg.threshold()?;
        let n_h1 = self.sorted.partition_point(|&t| t <= thr);
        Ok(aggregate_counts(n_h1, self.sorted.len(), cfg))
    }
}

/// Run the baseline over a detection window.
pub fn glrt_detect(epochs: &[EpochMeasurements], cfg: &GlrtConfig) -> Result<GlrtOutcome> {
    cfg.validate()?;
    PairStatistics::compute(epochs, cfg.sigma_rho)?.outcome(cfg)
}

/// Expected fraction of pair tests voting H1 when a fraction `alpha` of
/// `m` receivers is spoofed: only spoofed-spoofed pairs vote H1.
pub fn glrt_predicted_fraction(alpha: f64, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if m < 2 {
        return Err(invalid("need at least 2 receivers"));
    }
    let inv = 1.0 / m as f64;
    Ok((alpha * (alpha - inv) / (1.0 - inv)).clamp(0.0, 1.0))
}
