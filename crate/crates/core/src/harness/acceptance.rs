//! Acceptance runs. Each criterion builds its own scenario, runs it at a
//! fixed seed and reports whether the measured behaviour meets its bound.

use std::time::Instant;

use rand::Rng;

use super::bench::{fit_exponent, timing_benchmark};
use super::experiment::{
    d2ps_trial_variance, run_experiment, trial_world, ExperimentSpec, Method, Sweep,
};
use super::par_map;
use super::report::{ks_critical_value, ks_statistic};
use crate::d2ps::build_d2ps;
use crate::detector::{decide, sample_variance, thresholds, Decision};
use crate::error::Result;
use crate::geometry::SkyView;
use crate::glrt::{glrt_predicted_fraction, GlrtConfig, PairStatistics};
use crate::oracle;
use crate::resize::{
    enclose, map_and_tag, maximal_rectangles, partition, per_region_detection_inputs,
};
use crate::rng::{derive_seed, stream};
use crate::scenario::{
    synthesize_epochs, Enu, ReceiverTruth, RoiBounds, ScenarioConfig, SpooferMode,
};
use crate::statmodels::{
    chi2_cdf, chi2_inv, h2_components, normal_cdf, sum_pdf, variance_h0, variance_h0_with_noise,
    variance_h2, variance_partial_sats, CrossTermReading,
};

const SEED: u64 = 0x5EED_2024;

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
}

type Runner = fn() -> Result<(bool, String)>;

const CRITERIA: [(u8, &str, Runner); 12] = [
    (1, "sum pdf matches triangle convolution", sum_pdf_oracle),
    (2, "noise-free spoofing-free variance", noise_free_h0),
    (3, "fully spoofed variance", fully_spoofed),
    (4, "partially spoofed variance", partially_spoofed),
    (5, "false-alarm calibration", false_alarm),
    (6, "ROC behaviour", roc_behaviour),
    (7, "GLRT vote fraction and flip points", glrt_votes),
    (8, "partially spoofed detection vs alpha", alpha_detection),
    (9, "partial-satellite sweep", partial_satellites),
    (10, "runtime scaling", runtime_scaling),
    (11, "resize correctness", resize_correctness),
    (12, "chi-squared inverse", chi2_round_trip),
];

/// Names of all criteria in order.
pub fn criteria() -> Vec<(u8, &'static str)> {
    CRITERIA.iter().map(|&(id, name, _)| (id, name)).collect()
}

/// Run one criterion. An internal error counts as a failure.
pub fn run_criterion(id: u8) -> Option<CriterionOutcome> {
    let &(id, name, f) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA.iter().filter_map(|c| run_criterion(c.0)).collect()
}

/// Collects failed checks while a criterion runs.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.failures.push(what);
        } else {
            self.notes.push(what);
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn finish(self) -> (bool, String) {
        if self.failures.is_empty() {
            (true, self.notes.join("; "))
        } else {
            (
                false,
                format!(
                    "FAILED: {} | ok: {}",
                    self.failures.join("; "),
                    self.notes.join("; ")
                ),
            )
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance of one world per trial.
fn simulated_variances(
    cfg: &ScenarioConfig,
    sky: &SkyView,
    pf_ratio: Option<f64>,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    par_map(trials, |t| {
        let s = derive_seed(seed, &[t as u64]);
        d2ps_trial_variance(&trial_world(cfg, sky, pf_ratio, s)?, s)
    })
    .into_iter()
    .collect()
}

fn sum_pdf_oracle() -> Result<(bool, String)> {
    let mut rng = stream(SEED, &[1]);
    let mut c = Checks::default();
    let (mut worst_sup, mut worst_int, mut worst_var) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let a: f64 = rng.random_range(1.0..2000.0);
        let b: f64 = rng.random_range(1.0..2000.0);
        let half = a + b;
        for i in 0..=400 {
            let h = -half * 1.05 + 2.1 * half * i as f64 / 400.0;
            let got = sum_pdf(h, a, b)?;
            let want = oracle::triangle_convolution(h, a, b);
            // Scale-free comparison: densities are O(1 / (a + b)).
            worst_sup = worst_sup.max((got - want).abs() * half);
        }
        let f = |h: f64| sum_pdf(h, a, b).unwrap_or(f64::NAN);
        let mut knots = vec![
            -half,
            -a,
            -b,
            -(a - b).abs(),
            0.0,
            (a - b).abs(),
            a,
            b,
            half,
        ];
        knots.sort_by(f64::total_cmp);
        let integral: f64 = knots
            .windows(2)
            .map(|w| oracle::adaptive_simpson(&f, w[0], w[1], 1e-12))
            .sum();
        let second: f64 = knots
            .windows(2)
            .map(|w| {
                oracle::adaptive_simpson(
                    &|h: f64| h * h * f(h),
                    w[0],
                    w[1],
                    1e-11 * (a * a + b * b),
                )
            })
            .sum();
        worst_int = worst_int.max((integral - 1.0).abs());
        worst_var = worst_var.max((second / ((a * a + b * b) / 6.0) - 1.0).abs());
    }
    c.check(
        worst_sup <= 1e-6,
        format!("sup |pdf - conv| * (A+B) = {worst_sup:.2e}"),
    );
    c.check(
        worst_int <= 1e-8,
        format!("max |integral - 1| = {worst_int:.2e}"),
    );
    c.check(
        worst_var <= 1e-6,
        format!("max relative variance error = {worst_var:.2e}"),
    );
    Ok(c.finish())
}

fn h0_config(d: f64, m: usize, sigma_rho: f64) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig {
        roi: RoiBounds::centered_square(d)?,
        ..ScenarioConfig::default()
    };
    cfg.run.n_receivers = m;
    cfg.noise.sigma_rho = sigma_rho;
    cfg.spoofer.mode = SpooferMode::DirectFraction;
    cfg.spoofer.spoofed_fraction = 0.0;
    Ok(cfg)
}

fn noise_free_h0() -> Result<(bool, String)> {
    let sky = SkyView::sky12();
    let cfg = h0_config(100.0, 200, 0.0)?;
    let predicted = variance_h0(100.0, 100.0, &sky)?.sigma2;
    let trials = 500;
    let per_trial: Vec<(f64, f64)> = par_map(trials, |t| {
        let s = derive_seed(SEED, &[2, t as u64]);
        let w = trial_world(&cfg, &sky, None, s)?;
        let set = build_d2ps(&w.epochs, derive_seed(s, &[2]))?;
        Ok((sample_variance(&set)?, set.samples[0]))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let variances: Vec<f64> = per_trial.iter().map(|p| p.0).collect();
    let draws: Vec<f64> = per_trial.iter().map(|p| p.1).collect();
    let rel = mean(&variances) / predicted - 1.0;
    let sd = predicted.sqrt();
    let ks = ks_statistic(&draws, |x| normal_cdf(x / sd));
    let crit = ks_critical_value(trials, 0.01)?;
    let mut c = Checks::default();
    c.check(
        rel.abs() <= 0.05,
        format!(
            "mean variance {:.1} vs {predicted:.1} ({:+.2}%)",
            mean(&variances),
            100.0 * rel
        ),
    );
    c.check(ks <= crit, format!("KS {ks:.4} vs critical {crit:.4}"));
    Ok(c.finish())
}

fn fully_spoofed() -> Result<(bool, String)> {
    let sky = SkyView::sky12();
    let mut cfg = h0_config(100.0, 100, 5.0)?;
    cfg.spoofer.spoofed_fraction = 1.0;
    let v = simulated_variances(&cfg, &sky, None, 1000, derive_seed(SEED, &[3]))?;
    let rel = mean(&v) / 100.0 - 1.0;
    let mut c = Checks::default();
    c.check(
        rel.abs() <= 0.05,
        format!(
            "mean variance {:.2} vs 100 ({:+.2}%)",
            mean(&v),
            100.0 * rel
        ),
    );
    Ok(c.finish())
}

fn partially_spoofed() -> Result<(bool, String)> {
    let sky = SkyView::sky12();
    let mut c = Checks::default();
    let auth = RoiBounds::centered_square(500.0)?;
    let pf = Enu::horizontal(750.0, 0.0);
    let sigma = 5.0;
    let reading = CrossTermReading::default();
    let at0 = variance_h2(0.0, &auth, &pf, &sky, sigma, reading)?.sigma2;
    let h0 = variance_h0(500.0, 500.0, &sky)?.sigma2;
    c.check(
        at0 == h0,
        format!("alpha=0 gives {at0} vs spoofing-free {h0}"),
    );
    let at1 = variance_h2(1.0, &auth, &pf, &sky, sigma, reading)?.sigma2;
    c.check(at1 == 4.0 * sigma * sigma, format!("alpha=1 gives {at1}"));

    let mut cfg = h0_config(500.0, 200, sigma)?;
    cfg.spoofer.spoofed_fraction = 0.5;
    cfg.spoofer.counterfeit_position = pf;
    let v = simulated_variances(&cfg, &sky, None, 500, derive_seed(SEED, &[4]))?;
    let sim = mean(&v);
    let predicted = variance_h2(0.5, &auth, &pf, &sky, sigma, reading)?.sigma2;
    let other = match reading {
        CrossTermReading::Literal => CrossTermReading::StdProduct,
        CrossTermReading::StdProduct => CrossTermReading::Literal,
    };
    let alt = h2_components(&auth, &pf, &sky, sigma)?.combine(0.5, other)?;
    let rel = predicted / sim - 1.0;
    c.check(
        rel.abs() <= 0.15,
        format!(
            "alpha=0.5 predicted {predicted:.0} ({reading:?}) vs simulated {sim:.0} ({:+.1}%)",
            100.0 * rel
        ),
    );
    c.note(format!("{other:?} reading would give {alt:.3e}"));
    Ok(c.finish())
}

fn false_alarm() -> Result<(bool, String)> {
    let sky = SkyView::sky12();
    let (d, m, sigma) = (100.0, 20, 5.0);
    let cfg = h0_config(d, m, sigma)?;
    let trials = 10_000;
    let v = simulated_variances(&cfg, &sky, None, trials, derive_seed(SEED, &[5]))?;
    let s2 = variance_h0_with_noise(d, d, &sky, sigma, 1)?.sigma2;
    let mut c = Checks::default();
    for eps in [0.1, 0.01] {
        let th = thresholds(s2, m, eps)?;
        let hits = v
            .iter()
            .filter(|&&x| decide(x, &th) != Decision::H0)
            .count();
        let rate = hits as f64 / trials as f64;
        let band = 3.0 * (eps * (1.0 - eps) / trials as f64).sqrt();
        c.check(
            (rate - eps).abs() <= band,
            format!(
                "eps={eps}: non-H0 rate {rate:.4} (allowed {:.4}..{:.4})",
                eps - band,
                eps + band
            ),
        );
    }
    let mv = mean(&v);
    let sd = (v.iter().map(|x| (x - mv) * (x - mv)).sum::<f64>() / (trials - 1) as f64).sqrt();
    c.note(format!(
        "relative spread of the sample variance {:.3}, chi2 model {:.3}",
        sd / mv,
        (2.0 / m as f64).sqrt()
    ));
    Ok(c.finish())
}

fn roc_spec(
    d: f64,
    m: usize,
    delta: f64,
    fa: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ExperimentSpec> {
    let mut cfg = h0_config(d, m, 5.0)?;
    cfg.spoofer.spoofed_fraction = 1.0;
    cfg.noise.multipath_enabled = delta > 0.0;
    cfg.noise.delta_sigma = delta;
    let mut spec = ExperimentSpec::new(cfg, Method::Both, trials, seed);
    spec.sweep = Sweep {
        fa: fa.to_vec(),
        ..Sweep::default()
    };
    Ok(spec)
}

fn pd_at(rows: &[super::ResultRow], method: Method, fa: f64) -> f64 {
    rows.iter()
        .find(|r| r.method == method && r.fa == fa)
        .map(|r| r.pd_h1())
        .unwrap_or(f64::NAN)
}

fn roc_behaviour() -> Result<(bool, String)> {
    let grid = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1];
    let trials = 1000;
    let mut c = Checks::default();
    let big = run_experiment(&roc_spec(
        100.0,
        20,
        0.0,
        &grid,
        trials,
        derive_seed(SEED, &[6, 1]),
    )?)?;
    let small = run_experiment(&roc_spec(
        50.0,
        10,
        0.0,
        &grid,
        trials,
        derive_seed(SEED, &[6, 2]),
    )?)?;
    let pd = pd_at(&big, Method::D2ps, 0.001);
    c.check(pd >= 0.99, format!("D=100 M=20 Pd_H1 {pd:.3} at FA 0.001"));
    for &fa in grid.iter().filter(|&&f| f <= 0.01) {
        let (a, b) = (
            pd_at(&big, Method::D2ps, fa),
            pd_at(&small, Method::D2ps, fa),
        );
        c.check(b < a, format!("FA {fa}: D=50 M=10 Pd {b:.3} < {a:.3}"));
    }
    for (k, delta) in [5.0, 10.0].into_iter().enumerate() {
        let rows = run_experiment(&roc_spec(
            100.0,
            20,
            delta,
            &grid,
            trials,
            derive_seed(SEED, &[6, 3 + k as u64]),
        )?)?;
        let pd = pd_at(&rows, Method::D2ps, 0.001);
        c.check(
            pd >= 0.95,
            format!("delta {delta}: D2PS Pd_H1 {pd:.3} at FA 0.001"),
        );
        if delta == 10.0 {
            let d2: Vec<f64> = grid
                .iter()
                .map(|&f| pd_at(&rows, Method::D2ps, f))
                .collect();
            let gl: Vec<f64> = grid
                .iter()
                .map(|&f| pd_at(&rows, Method::Glrt, f))
                .collect();
            let never_above = d2.iter().zip(&gl).all(|(a, b)| b <= a);
            c.check(
                never_above && mean(&gl) < mean(&d2),
                format!("delta 10: GLRT Pd {gl:.3?} vs D2PS {d2:.3?}"),
            );
        }
    }
    Ok(c.finish())
}

fn glrt_alpha_stats(alpha: f64, trials: usize, seed: u64) -> Result<Vec<(f64, Decision)>> {
    let sky = SkyView::sky12();
    let mut cfg = h0_config(1000.0, 100, 5.0)?;
    cfg.run.epochs = 5;
    cfg.spoofer.spoofed_fraction = alpha;
    let g = GlrtConfig {
        sigma_rho: 5.0,
        k: 5,
        ..GlrtConfig::default()
    };
    par_map(trials, |t| {
        let s = derive_seed(seed, &[t as u64]);
        let w = trial_world(&cfg, &sky, Some(1.5), s)?;
        let o = PairStatistics::compute(&w.epochs, 5.0)?.outcome(&g)?;
        Ok((o.h1_fraction(), o.decision))
    })
    .into_iter()
    .collect()
}

/// Modal decision over trials.
fn modal(decisions: impl Iterator<Item = Decision>) -> Decision {
    let mut n = [0usize; 3];
    for d in decisions {
        n[d.variance_rank() as usize] += 1;
    }
    let best = (0..3)
        .max_by_key(|&i| (n[i], std::cmp::Reverse(i)))
        .unwrap_or(0);
    [Decision::H1, Decision::H0, Decision::H2][best]
}

/// First alpha on a fine grid whose modal decision is `to`, starting
/// from a grid point whose modal decision is `from`.
fn flip_point(
    grid: &[f64],
    from: Decision,
    to: Decision,
    trials: usize,
    seed: u64,
) -> Result<Option<f64>> {
    let mut prev = None;
    for (i, &a) in grid.iter().enumerate() {
        let d = modal(
            glrt_alpha_stats(a, trials, derive_seed(seed, &[i as u64]))?
                .into_iter()
                .map(|x| x.1),
        );
        if prev == Some(from) && d == to {
            return Ok(Some(a));
        }
        prev = Some(d);
    }
    Ok(None)
}

fn glrt_votes() -> Result<(bool, String)> {
    let mut c = Checks::default();
    let mut worst = 0.0f64;
    let mut at = 0.0;
    for (i, alpha) in (1..=9).map(|k| k as f64 / 10.0).enumerate() {
        let stats = glrt_alpha_stats(alpha, 1000, derive_seed(SEED, &[7, i as u64]))?;
        let frac = mean(&stats.iter().map(|s| s.0).collect::<Vec<_>>());
        let err = (frac - glrt_predicted_fraction(alpha, 100)?).abs();
        if err > worst {
            worst = err;
            at = alpha;
        }
    }
    c.check(
        worst <= 0.02,
        format!("max |vote fraction - prediction| {worst:.4} at alpha {at}"),
    );
    let low: Vec<f64> = (0..=20).map(|k| 0.26 + 0.005 * k as f64).collect();
    let high: Vec<f64> = (0..=16).map(|k| 0.90 + 0.005 * k as f64).collect();
    let up = flip_point(
        &low,
        Decision::H0,
        Decision::H2,
        200,
        derive_seed(SEED, &[7, 100]),
    )?;
    let down = flip_point(
        &high,
        Decision::H2,
        Decision::H1,
        200,
        derive_seed(SEED, &[7, 200]),
    )?;
    match up {
        Some(a) => c.check((a - 0.316).abs() <= 0.03, format!("H0->H2 flip at {a:.3}")),
        None => c.check(false, "no H0->H2 flip in 0.26..0.36"),
    }
    match down {
        Some(a) => c.check((a - 0.949).abs() <= 0.03, format!("H2->H1 flip at {a:.3}")),
        None => c.check(false, "no H2->H1 flip in 0.90..0.98"),
    }
    Ok(c.finish())
}

fn alpha_detection() -> Result<(bool, String)> {
    let alphas = [0.1, 0.2, 0.3, 0.4, 0.45, 0.5, 0.6, 0.7, 0.8, 0.9];
    let mut c = Checks::default();
    let mut cfg = h0_config(1000.0, 100, 5.0)?;
    cfg.spoofer.mode = SpooferMode::DirectFraction;
    let mut spec = ExperimentSpec::new(cfg, Method::D2ps, 500, derive_seed(SEED, &[8]));
    spec.sweep = Sweep {
        fa: vec![0.001],
        alpha: alphas.to_vec(),
        pf_ratio: vec![1.5, 0.8],
        ..Sweep::default()
    };
    let rows = run_experiment(&spec)?;
    let curve = |ratio: f64| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.point.pf_ratio == Some(ratio))
            .map(|r| (r.point.alpha.unwrap_or(f64::NAN), r.pd_h2()))
            .collect()
    };
    let far = curve(1.5);
    let low = far
        .iter()
        .filter(|p| p.1 < 0.95)
        .map(|p| format!("{}: {:.3}", p.0, p.1))
        .collect::<Vec<_>>();
    c.check(
        low.is_empty(),
        format!(
            "ratio 1.5 Pd_H2 below 0.95 at [{}], min {:.3}",
            low.join(", "),
            far.iter().map(|p| p.1).fold(1.0, f64::min)
        ),
    );
    let near = curve(0.8);
    let (a_max, pd_max) =
        near.iter().copied().fold(
            (f64::NAN, -1.0),
            |best, p| if p.1 > best.1 { p } else { best },
        );
    c.check(
        (0.3..=0.8).contains(&pd_max),
        format!("ratio 0.8 max Pd_H2 {pd_max:.3}"),
    );
    c.check(
        (0.35..=0.55).contains(&a_max),
        format!("ratio 0.8 peak at alpha {a_max}"),
    );
    c.note(format!(
        "ratio 0.8 curve {:?}",
        near.iter()
            .map(|p| (p.0, (p.1 * 1000.0).round() / 1000.0))
            .collect::<Vec<_>>()
    ));
    Ok(c.finish())
}

fn partial_satellites() -> Result<(bool, String)> {
    let sky = SkyView::sky12();
    let counts: Vec<usize> = (4..=12).collect();
    let trials = 300;
    let mut c = Checks::default();
    // (D, M) -> per count (mean variance, D2PS Pd, GLRT Pd)
    let mut table = Vec::new();
    for (ci, &(d, m)) in [(100.0, 25), (100.0, 50), (500.0, 25), (500.0, 50)]
        .iter()
        .enumerate()
    {
        let mut cfg = h0_config(d, m, 5.0)?;
        cfg.spoofer.spoofed_fraction = 1.0;
        cfg.spoofer.spoofer_position = Enu::horizontal(-d, d);
        let s2 = variance_h0(d, d, &sky)?.sigma2;
        let th = thresholds(s2, m, 0.001)?;
        let g = GlrtConfig {
            sigma_rho: 5.0,
            fa_pair: 0.001,
            k: 1,
            ..GlrtConfig::default()
        };
        let mut rows = Vec::new();
        for &s in &counts {
            cfg.spoofer.spoofed_satellite_count = Some(s);
            let out: Vec<(f64, Decision, Decision)> = par_map(trials, |t| {
                let seed = derive_seed(SEED, &[9, ci as u64, s as u64, t as u64]);
                let w = trial_world(&cfg, &sky, None, seed)?;
                let v = d2ps_trial_variance(&w, seed)?;
                let gd = PairStatistics::compute(&w.epochs, 5.0)?
                    .outcome(&g)?
                    .decision;
                Ok((v, decide(v, &th), gd))
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let mv = mean(&out.iter().map(|o| o.0).collect::<Vec<_>>());
            let pd = out.iter().filter(|o| o.1 != Decision::H0).count() as f64 / trials as f64;
            let pg = out.iter().filter(|o| o.2 != Decision::H0).count() as f64 / trials as f64;
            let predicted = variance_partial_sats(s, 12, s2, 5.0)?.sigma2;
            let rel = mv / predicted - 1.0;
            c.check(
                rel.abs() <= 0.15,
                format!(
                    "D={d} M={m} s={s}: variance {mv:.0} vs {predicted:.0} ({:+.0}%)",
                    100.0 * rel
                ),
            );
            rows.push((pd, pg));
        }
        let monotone = rows.windows(2).all(|w| w[1].0 >= w[0].0);
        c.check(
            monotone,
            format!(
                "D={d} M={m}: D2PS Pd {:?} nondecreasing",
                rows.iter().map(|r| r.0).collect::<Vec<_>>()
            ),
        );
        table.push(((d, m), rows));
    }
    let find = |d: f64, m: usize| &table.iter().find(|t| t.0 == (d, m)).expect("config").1;
    for d in [100.0, 500.0] {
        let ok = find(d, 50).iter().zip(find(d, 25)).all(|(a, b)| a.0 >= b.0);
        c.check(ok, format!("D={d}: D2PS Pd at M=50 >= M=25"));
    }
    for m in [25, 50] {
        let ok = find(500.0, m)
            .iter()
            .zip(find(100.0, m))
            .all(|(a, b)| a.1 >= b.1);
        c.check(
            ok,
            format!(
                "M={m}: GLRT Pd D=500 {:?} >= D=100 {:?}",
                find(500.0, m).iter().map(|r| r.1).collect::<Vec<_>>(),
                find(100.0, m).iter().map(|r| r.1).collect::<Vec<_>>()
            ),
        );
    }
    Ok(c.finish())
}

fn runtime_scaling() -> Result<(bool, String)> {
    let ms = [10, 25, 50, 100];
    let rows = timing_benchmark(&ms, 12, 5, 40, derive_seed(SEED, &[10]))?;
    let times = |method: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.method == method)
            .map(|r| r.mean_seconds)
            .collect()
    };
    let (d2, gl) = (times("d2ps"), times("glrt"));
    let x: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let p = fit_exponent(&x, &d2);
    let ratio: Vec<f64> = gl.iter().zip(&d2).map(|(g, d)| g / d).collect();
    let mut c = Checks::default();
    c.check((1.5..=2.5).contains(&p), format!("D2PS exponent {p:.2}"));
    c.check(
        ratio.windows(2).all(|w| w[1] > w[0]),
        format!(
            "GLRT/D2PS time ratio {:?}",
            ratio
                .iter()
                .map(|r| (r * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        ),
    );
    Ok(c.finish())
}

/// Clean cluster in the lower-left 2x2 block of a 5x5 grid, spoofed cluster
/// reporting one cell away from the opposite side.
fn resize_fixture(seed: u64) -> Result<(bool, String)> {
    let sky = SkyView::sky12();
    let roi = RoiBounds::centered_square(1000.0)?;
    let mut rng = stream(seed, &[1]);
    let mut receivers = Vec::new();
    for (cx, cy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        for _ in 0..10 {
            let x = -500.0 + 200.0 * cx as f64 + rng.random_range(0.0..200.0);
            let y = -500.0 + 200.0 * cy as f64 + rng.random_range(0.0..200.0);
            let p = Enu::horizontal(x, y);
            receivers.push(ReceiverTruth {
                id: receivers.len() as u32,
                true_position: p,
                is_spoofed: false,
                reported_position: p,
            });
        }
    }
    let spoofer = crate::scenario::SpooferConfig {
        counterfeit_position: Enu::horizontal(200.0, 200.0),
        ..Default::default()
    };
    for _ in 0..30 {
        let p = Enu::horizontal(
            rng.random_range(-500.0..500.0),
            rng.random_range(0.0..500.0),
        );
        let r = Enu::horizontal(
            200.0 + rng.random_range(-20.0..20.0),
            200.0 + rng.random_range(-20.0..20.0),
        );
        receivers.push(ReceiverTruth {
            id: receivers.len() as u32,
            true_position: p,
            is_spoofed: true,
            reported_position: r,
        });
    }
    let noise = crate::scenario::NoiseConfig::default();
    let epochs = synthesize_epochs(
        &receivers,
        &sky,
        &spoofer,
        &noise,
        1,
        Default::default(),
        &mut rng,
    )?;
    let grid = map_and_tag(&partition(&roi, 5, 5)?, &receivers, 4)?;
    let regions = enclose(&grid);
    if regions.len() != 2 {
        return Ok((false, format!("{} regions", regions.len())));
    }
    let inputs = per_region_detection_inputs(&regions, &epochs)?;
    let mut verdicts = Vec::new();
    for input in &inputs.inputs {
        let set = build_d2ps(
            &input.epochs,
            derive_seed(seed, &[2, input.region_id as u64]),
        )?;
        let s2 = variance_h0_with_noise(input.dx, input.dy, &sky, noise.sigma_rho, 1)?.sigma2;
        let d = decide(sample_variance(&set)?, &thresholds(s2, set.m, 0.01)?);
        let spoofed_region = regions[input.region_id]
            .receiver_ids
            .iter()
            .all(|&id| receivers[id as usize].is_spoofed);
        verdicts.push((spoofed_region, d));
    }
    let ok = verdicts.len() == 2
        && verdicts.iter().all(|&(spoofed, d)| {
            if spoofed {
                d != Decision::H0
            } else {
                d == Decision::H0
            }
        });
    Ok((ok, format!("{verdicts:?}")))
}

fn resize_correctness() -> Result<(bool, String)> {
    let mut c = Checks::default();
    let mut rng = stream(SEED, &[11]);
    let mut mismatches = 0;
    for _ in 0..500 {
        let density: f64 = rng.random_range(0.2..0.9);
        let mask: Vec<bool> = (0..36).map(|_| rng.random_bool(density)).collect();
        let mut got = maximal_rectangles(&mask, 6, 6);
        got.sort_unstable();
        if got != oracle::maximal_rectangles_brute(&mask, 6, 6) {
            mismatches += 1;
        }
    }
    c.check(
        mismatches == 0,
        format!("{mismatches} of 500 masks differ from enumeration"),
    );
    let trials = 200;
    let results: Vec<(bool, String)> = par_map(trials, |t| {
        resize_fixture(derive_seed(SEED, &[11, t as u64]))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let ok = results.iter().filter(|r| r.0).count();
    let first_bad = results
        .iter()
        .find(|r| !r.0)
        .map(|r| r.1.clone())
        .unwrap_or_default();
    c.check(
        ok * 100 >= 95 * trials,
        format!("fixture correct in {ok}/{trials} trials {first_bad}"),
    );
    Ok(c.finish())
}

fn chi2_round_trip() -> Result<(bool, String)> {
    let ps = [
        1e-4, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999, 0.9999,
    ];
    let mut worst = 0.0f64;
    for m in 1..=200 {
        for &p in &ps {
            worst = worst.max((chi2_cdf(chi2_inv(p, m)?, m)? - p).abs());
        }
    }
    let got = chi2_inv(0.95, 10)?;
    let want = oracle::chi2_inv_quadrature(0.95, 10);
    let rel = (got / want - 1.0).abs();
    let mut c = Checks::default();
    c.check(worst <= 1e-8, format!("max round-trip error {worst:.2e}"));
    c.check(
        rel <= 1e-6,
        format!("chi2_inv(0.95, 10) = {got:.10} vs quadrature {want:.10}"),
    );
    Ok(c.finish())
}
