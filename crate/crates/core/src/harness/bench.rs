use std::io::Write;
use std::time::Instant;

use super::experiment::trial_world;
use crate::d2ps::build_d2ps;
use crate::detector::{decide, sample_variance, thresholds};
use crate::error::{invalid, Result};
use crate::geometry::SkyView;
use crate::glrt::{glrt_detect, GlrtConfig};
use crate::scenario::{RoiBounds, ScenarioConfig};
use crate::statmodels::variance_h0;

const REPEATS: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: &'static str,
    pub m: usize,
    pub mean_seconds: f64,
}

// Scheduler noise only ever adds time, so the fastest repeat is the
// steadiest estimate.
fn fastest(v: Vec<f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

/// Detection time per window for both methods. Each entry is the fastest
/// of 15 repeats of the mean over `trials` windows; world synthesis is not
/// timed.
pub fn timing_benchmark(
    m_list: &[usize],
    j: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<TimingRow>> {
    if trials == 0 {
        return Ok(Vec::new());
    }
    if j > 12 {
        return Err(invalid("the benchmark sky has 12 satellites"));
    }
    let sky = SkyView::sky12().truncated(j)?;
    let mut rows = Vec::new();
    for &m in m_list {
        let mut cfg = ScenarioConfig {
            roi: RoiBounds::centered_square(100.0)?,
            ..ScenarioConfig::default()
        };
        cfg.run.n_receivers = m;
        cfg.run.epochs = k;
        cfg.spoofer.spoofed_fraction = 1.0;
        let worlds = (0..trials)
            .map(|t| {
                trial_world(
                    &cfg,
                    &sky,
                    None,
                    crate::rng::derive_seed(seed, &[m as u64, t as u64]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let s2 = variance_h0(100.0, 100.0, &sky)?.sigma2;
        let th = thresholds(s2, m, 0.001)?;
        let glrt = GlrtConfig {
            sigma_rho: cfg.noise.sigma_rho,
            k,
            ..GlrtConfig::default()
        };
        let mut d2ps_times = Vec::with_capacity(REPEATS);
        let mut glrt_times = Vec::with_capacity(REPEATS);
        for rep in 0..REPEATS {
            // Alternate the methods window by window so slow drifts in
            // machine load hit both alike.
            let (mut d2ps_s, mut glrt_s) = (0.0, 0.0);
            for (t, w) in worlds.iter().enumerate() {
                let start = Instant::now();
                let set = build_d2ps(&w.epochs, (rep * trials + t) as u64)?;
                std::hint::black_box(decide(sample_variance(&set)?, &th));
                d2ps_s += start.elapsed().as_secs_f64();
                let start = Instant::now();
                std::hint::black_box(glrt_detect(&w.epochs, &glrt)?);
                glrt_s += start.elapsed().as_secs_f64();
            }
            d2ps_times.push(d2ps_s / trials as f64);
            glrt_times.push(glrt_s / trials as f64);
        }
        rows.push(TimingRow {
            method: "d2ps",
            m,
            mean_seconds: fastest(d2ps_times),
        });
        rows.push(TimingRow {
            method: "glrt",
            m,
            mean_seconds: fastest(glrt_times),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `method,M,mean_seconds` rows.
pub fn write_timing_csv<W: Write>(out: W, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "M", "mean_seconds"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.m.to_string(),
            r.mean_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
