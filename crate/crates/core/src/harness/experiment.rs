use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::par_map;
use crate::d2ps::build_d2ps;
use crate::detector::{decide, sample_variance, thresholds, Decision, Thresholds};
use crate::error::{invalid, Error, Result};
use crate::geometry::SkyView;
use crate::glrt::{GlrtConfig, PairStatistics};
use crate::resize::{enclose, map_and_tag, partition, per_region_detection_inputs};
use crate::rng::{derive_seed, stream};
use crate::scenario::{generate_world, Enu, RoiBounds, ScenarioConfig, SpooferMode, World};
use crate::statmodels::{variance_h0, variance_h0_with_noise};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    D2ps,
    Glrt,
    Both,
}

impl Method {
    fn runs_d2ps(self) -> bool {
        matches!(self, Method::D2ps | Method::Both)
    }

    fn runs_glrt(self) -> bool {
        matches!(self, Method::Glrt | Method::Both)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::D2ps => "d2ps",
            Method::Glrt => "glrt",
            Method::Both => "both",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d2ps" => Ok(Method::D2ps),
            "glrt" => Ok(Method::Glrt),
            "both" => Ok(Method::Both),
            other => Err(invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Parameter lists to sweep. An empty list keeps the scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweep {
    /// False-alarm levels: the overall epsilon for D²PS, the per-pair level
    /// for the GLRT.
    pub fa: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Side of a square region centred on the origin, m.
    pub d: Vec<f64>,
    pub m: Vec<usize>,
    pub delta_sigma: Vec<f64>,
    pub spoofed_sats: Vec<usize>,
    /// Counterfeit distance from the origin over `d`, at a random azimuth
    /// drawn per trial.
    pub pf_ratio: Vec<f64>,
}

/// Grid-partition settings for the resized pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResizeConfig {
    pub nx: usize,
    pub ny: usize,
    pub threshold: usize,
}

impl Default for ResizeConfig {
    fn default() -> Self {
        Self {
            nx: crate::resize::DEFAULT_DIVISIONS,
            ny: crate::resize::DEFAULT_DIVISIONS,
            threshold: crate::resize::DEFAULT_ACTIVITY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub method: Method,
    #[serde(default)]
    pub sweep: Sweep,
    pub trials: usize,
    pub master_seed: u64,
    /// GLRT settings; `sigma_rho` and `k` follow the scenario.
    #[serde(default)]
    pub glrt: GlrtConfig,
    /// Add the `4 sigma^2 / K` noise floor to the spoofing-free prediction.
    #[serde(default)]
    pub h0_noise_floor: bool,
    #[serde(default)]
    pub resize: Option<ResizeConfig>,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, method: Method, trials: usize, master_seed: u64) -> Self {
        Self {
            scenario,
            method,
            sweep: Sweep::default(),
            trials,
            master_seed,
            glrt: GlrtConfig::default(),
            h0_noise_floor: false,
            resize: None,
        }
    }

    fn fa_list(&self) -> Vec<f64> {
        if self.sweep.fa.is_empty() {
            vec![0.001]
        } else {
            self.sweep.fa.clone()
        }
    }
}

/// One point of the swept grid; `None` keeps the scenario's value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridPoint {
    pub alpha: Option<f64>,
    pub d: Option<f64>,
    pub m: Option<usize>,
    pub delta_sigma: Option<f64>,
    pub spoofed_sats: Option<usize>,
    pub pf_ratio: Option<f64>,
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

/// Cartesian product of the sweep lists other than `fa`.
pub fn grid_points(sweep: &Sweep) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &d in &axis(&sweep.d) {
        for &m in &axis(&sweep.m) {
            for &delta_sigma in &axis(&sweep.delta_sigma) {
                for &spoofed_sats in &axis(&sweep.spoofed_sats) {
                    for &pf_ratio in &axis(&sweep.pf_ratio) {
                        for &alpha in &axis(&sweep.alpha) {
                            out.push(GridPoint {
                                alpha,
                                d,
                                m,
                                delta_sigma,
                                spoofed_sats,
                                pf_ratio,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

impl GridPoint {
    fn apply(&self, base: &ScenarioConfig) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        if let Some(d) = self.d {
            cfg.roi = RoiBounds::centered_square(d)?;
        }
        if let Some(m) = self.m {
            cfg.run.n_receivers = m;
        }
        if let Some(a) = self.alpha {
            cfg.spoofer.mode = SpooferMode::DirectFraction;
            cfg.spoofer.spoofed_fraction = a;
        }
        if let Some(ds) = self.delta_sigma {
            cfg.noise.multipath_enabled = ds > 0.0;
            cfg.noise.delta_sigma = ds;
        }
        if let Some(s) = self.spoofed_sats {
            cfg.spoofer.spoofed_satellite_count = Some(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Decision tallies for one (grid point, method, false-alarm level).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub fa: f64,
    pub point: GridPoint,
    pub d: f64,
    pub m: usize,
    pub trials: usize,
    pub n_h0: usize,
    pub n_h1: usize,
    pub n_h2: usize,
    /// Mean D²PS sample variance, or mean GLRT H1 vote fraction.
    pub mean_statistic: f64,
    pub skipped: Option<String>,
    /// Not written to the CSV, which must be reproducible byte for byte.
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn pd_h1(&self) -> f64 {
        self.n_h1 as f64 / self.trials.max(1) as f64
    }

    pub fn pd_h2(&self) -> f64 {
        self.n_h2 as f64 / self.trials.max(1) as f64
    }

    /// Fraction of trials not decided spoofing-free.
    pub fn pd_detect(&self) -> f64 {
        (self.n_h1 + self.n_h2) as f64 / self.trials.max(1) as f64
    }
}

/// Build the world of one trial. A `pf_ratio` places the counterfeit
/// position at `ratio * D` from the origin at a random azimuth.
pub fn trial_world(
    cfg: &ScenarioConfig,
    sky: &SkyView,
    pf_ratio: Option<f64>,
    seed: u64,
) -> Result<World> {
    let mut rng = stream(seed, &[1]);
    let mut cfg = cfg.clone();
    if let Some(ratio) = pf_ratio {
        let az: f64 = rng.random_range(0.0..360.0f64).to_radians();
        let r = ratio * cfg.roi.dx().max(cfg.roi.dy());
        let cx = 0.5 * (cfg.roi.a1 + cfg.roi.a2);
        let cy = 0.5 * (cfg.roi.b1 + cfg.roi.b2);
        let up = cfg.spoofer.counterfeit_position.up;
        cfg.spoofer.counterfeit_position = Enu::new(cx + r * az.sin(), cy + r * az.cos(), up);
    }
    generate_world(&cfg, sky, &mut rng)
}

/// D²PS sample variance of a whole world.
pub fn d2ps_trial_variance(world: &World, seed: u64) -> Result<f64> {
    sample_variance(&build_d2ps(&world.epochs, derive_seed(seed, &[2]))?)
}

struct TrialOutcome {
    d2ps: Vec<Decision>,
    d2ps_stat: f64,
    glrt: Vec<Decision>,
    glrt_stat: f64,
}

/// Worst decision across regions: any H2 wins, then any H1.
fn combine_regions(decisions: &[Decision]) -> Decision {
    if decisions.contains(&Decision::H2) {
        Decision::H2
    } else if decisions.contains(&Decision::H1) {
        Decision::H1
    } else {
        Decision::H0
    }
}

struct PointContext<'a> {
    spec: &'a ExperimentSpec,
    cfg: ScenarioConfig,
    sky: &'a SkyView,
    point: GridPoint,
    fa: Vec<f64>,
    /// Whole-area thresholds per false-alarm level.
    th: Vec<Thresholds>,
    glrt: Vec<GlrtConfig>,
}

impl PointContext<'_> {
    fn h0_variance(&self, dx: f64, dy: f64) -> Result<f64> {
        Ok(if self.spec.h0_noise_floor {
            variance_h0_with_noise(
                dx,
                dy,
                self.sky,
                self.cfg.noise.sigma_rho,
                self.cfg.run.epochs,
            )?
        } else {
            variance_h0(dx, dy, self.sky)?
        }
        .sigma2)
    }

    fn run_trial(&self, seed: u64) -> Result<TrialOutcome> {
        let world = trial_world(&self.cfg, self.sky, self.point.pf_ratio, seed)?;
        let mut out = TrialOutcome {
            d2ps: Vec::new(),
            d2ps_stat: f64::NAN,
            glrt: Vec::new(),
            glrt_stat: f64::NAN,
        };
        if self.spec.method.runs_d2ps() {
            match self.spec.resize {
                None => {
                    let v = d2ps_trial_variance(&world, seed)?;
                    out.d2ps_stat = v;
                    out.d2ps = self.th.iter().map(|t| decide(v, t)).collect();
                }
                Some(rc) => self.resized(&world, seed, rc, &mut out)?,
            }
        }
        if self.spec.method.runs_glrt() {
            let stats = PairStatistics::compute(&world.epochs, self.cfg.noise.sigma_rho)?;
            for (i, g) in self.glrt.iter().enumerate() {
                let o = stats.outcome(g)?;
                if i == 0 {
                    out.glrt_stat = o.h1_fraction();
                }
                out.glrt.push(o.decision);
            }
        }
        Ok(out)
    }

    fn resized(
        &self,
        world: &World,
        seed: u64,
        rc: ResizeConfig,
        out: &mut TrialOutcome,
    ) -> Result<()> {
        let grid = partition(&self.cfg.roi, rc.nx, rc.ny)?;
        let tagged = map_and_tag(&grid, &world.receivers, rc.threshold)?;
        let regions = enclose(&tagged);
        let mut per_fa: Vec<Vec<Decision>> = vec![Vec::new(); self.fa.len()];
        let mut total = 0.0;
        let mut n = 0usize;
        if !regions.is_empty() {
            let inputs = per_region_detection_inputs(&regions, &world.epochs)?;
            for input in &inputs.inputs {
                let set = build_d2ps(
                    &input.epochs,
                    derive_seed(seed, &[2, input.region_id as u64]),
                )?;
                let v = sample_variance(&set)?;
                total += v;
                n += 1;
                let s2 = self.h0_variance(input.dx, input.dy)?;
                for (k, &fa) in self.fa.iter().enumerate() {
                    per_fa[k].push(decide(v, &thresholds(s2, set.m, fa)?));
                }
            }
        }
        out.d2ps_stat = if n > 0 { total / n as f64 } else { f64::NAN };
        out.d2ps = per_fa.iter().map(|d| combine_regions(d)).collect();
        Ok(())
    }
}

/// Run every grid point for `spec.trials` independent worlds.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    if spec.trials < 1 {
        return Err(invalid("an experiment needs at least one trial"));
    }
    spec.scenario.validate()?;
    let sky = spec.scenario.sky_view()?;
    let fa = spec.fa_list();
    let methods: Vec<Method> = match spec.method {
        Method::Both => vec![Method::D2ps, Method::Glrt],
        m => vec![m],
    };
    let mut rows = Vec::new();
    for (gi, point) in grid_points(&spec.sweep).into_iter().enumerate() {
        let started = Instant::now();
        let skipped_rows = |reason: String, d: f64, m: usize| {
            methods
                .iter()
                .flat_map(|&method| fa.iter().map(move |&f| (method, f)))
                .map(|(method, f)| ResultRow {
                    method,
                    fa: f,
                    point,
                    d,
                    m,
                    trials: 0,
                    n_h0: 0,
                    n_h1: 0,
                    n_h2: 0,
                    mean_statistic: f64::NAN,
                    skipped: Some(reason.clone()),
                    wall_time_s: 0.0,
                })
                .collect::<Vec<_>>()
        };
        let cfg = match point.apply(&spec.scenario) {
            Ok(c) => c,
            Err(e) => {
                let d = point.d.unwrap_or(spec.scenario.roi.dx());
                let m = point.m.unwrap_or(spec.scenario.run.n_receivers);
                rows.extend(skipped_rows(e.to_string(), d, m));
                continue;
            }
        };
        let glrt: Vec<GlrtConfig> = fa
            .iter()
            .map(|&f| GlrtConfig {
                sigma_rho: cfg.noise.sigma_rho,
                fa_pair: f,
                k: cfg.run.epochs,
                ..spec.glrt.clone()
            })
            .collect();
        let mut ctx = PointContext {
            spec,
            cfg,
            sky: &sky,
            point,
            fa: fa.clone(),
            th: Vec::new(),
            glrt,
        };
        let s2 = ctx.h0_variance(ctx.cfg.roi.dx(), ctx.cfg.roi.dy())?;
        ctx.th = fa
            .iter()
            .map(|&f| thresholds(s2, ctx.cfg.run.n_receivers, f))
            .collect::<Result<_>>()?;
        if spec.method.runs_glrt() {
            for g in &ctx.glrt {
                g.validate()?;
            }
        }
        let outcomes = par_map(spec.trials, |t| {
            ctx.run_trial(derive_seed(spec.master_seed, &[gi as u64, t as u64]))
        });
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        let elapsed = started.elapsed().as_secs_f64();
        for &method in &methods {
            for (k, &f) in fa.iter().enumerate() {
                let mut row = ResultRow {
                    method,
                    fa: f,
                    point,
                    d: ctx.cfg.roi.dx(),
                    m: ctx.cfg.run.n_receivers,
                    trials: spec.trials,
                    n_h0: 0,
                    n_h1: 0,
                    n_h2: 0,
                    mean_statistic: 0.0,
                    skipped: None,
                    wall_time_s: elapsed,
                };
                let mut stat_sum = 0.0;
                let mut stat_n = 0usize;
                for o in &outcomes {
                    let (d, s) = match method {
                        Method::Glrt => (o.glrt[k], o.glrt_stat),
                        _ => (o.d2ps[k], o.d2ps_stat),
                    };
                    match d {
                        Decision::H0 => row.n_h0 += 1,
                        Decision::H1 => row.n_h1 += 1,
                        Decision::H2 => row.n_h2 += 1,
                    }
                    if s.is_finite() {
                        stat_sum += s;
                        stat_n += 1;
                    }
                }
                row.mean_statistic = if stat_n > 0 {
                    stat_sum / stat_n as f64
                } else {
                    f64::NAN
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Results CSV. Wall time is left out so reruns are byte-identical.
pub fn write_results_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "fa",
        "alpha",
        "d",
        "m",
        "delta_sigma",
        "spoofed_sats",
        "pf_ratio",
        "trials",
        "n_h0",
        "n_h1",
        "n_h2",
        "pd_h1",
        "pd_h2",
        "pd_detect",
        "mean_statistic",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.fa.to_string(),
            opt_str(r.point.alpha),
            r.d.to_string(),
            r.m.to_string(),
            opt_str(r.point.delta_sigma),
            opt_str(r.point.spoofed_sats),
            opt_str(r.point.pf_ratio),
            r.trials.to_string(),
            r.n_h0.to_string(),
            r.n_h1.to_string(),
            r.n_h2.to_string(),
            r.pd_h1().to_string(),
            r.pd_h2().to_string(),
            r.pd_detect().to_string(),
            r.mean_statistic.to_string(),
            r.skipped.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One ROC point: probability of the fully-spoofed decision at `fa`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocRow {
    pub method: Method,
    pub d: f64,
    pub m: usize,
    pub delta_sigma: f64,
    pub fa: f64,
    pub pd: f64,
}

/// ROC table for a fully-spoofed scenario over `spec.sweep.fa`.
pub fn roc_sweep(spec: &ExperimentSpec) -> Result<Vec<RocRow>> {
    if spec.sweep.fa.is_empty() {
        return Err(invalid("a ROC sweep needs a false-alarm list"));
    }
    Ok(run_experiment(spec)?
        .into_iter()
        .filter(|r| r.skipped.is_none())
        .map(|r| RocRow {
            method: r.method,
            d: r.d,
            m: r.m,
            delta_sigma: r
                .point
                .delta_sigma
                .unwrap_or(spec.scenario.noise.delta_sigma),
            fa: r.fa,
            pd: r.pd_h1(),
        })
        .collect())
}

/// `method,d,m,delta_sigma,fa,pd` rows.
pub fn write_roc_csv<W: Write>(out: W, rows: &[RocRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "d", "m", "delta_sigma", "fa", "pd"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.d.to_string(),
            r.m.to_string(),
            r.delta_sigma.to_string(),
            r.fa.to_string(),
            r.pd.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
