//! Simulated worlds: receiver placement, spoofer influence, and synthesized
//! pseudoranges with UERE noise and optional correlated multipath.
//!
//! Ranges use the far-field model by default: `|S^i - p| ~ R_i - e^i . p`,
//! which is the same first-order expansion the double-difference algebra
//! relies on. [`RangeModel::Full3d`] places satellites 20,200 km out along
//! each line of sight instead.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{LosVector, SkyView};
use crate::SPEED_OF_LIGHT;

/// Nominal GPS orbit radius used by the full 3-D range model, m.
pub const SATELLITE_RANGE_M: f64 = 20_200_000.0;

/// Local East-North-Up coordinates, m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Enu {
    pub east: f64,
    pub north: f64,
    #[serde(default)]
    pub up: f64,
}

impl Enu {
    pub const fn new(east: f64, north: f64, up: f64) -> Self {
        Self { east, north, up }
    }

    pub const fn horizontal(east: f64, north: f64) -> Self {
        Self::new(east, north, 0.0)
    }

    pub fn distance(&self, other: &Enu) -> f64 {
        let (de, dn, du) = (
            self.east - other.east,
            self.north - other.north,
            self.up - other.up,
        );
        (de * de + dn * dn + du * du).sqrt()
    }

    pub fn dot(&self, los: &LosVector) -> f64 {
        self.east * los.x + self.north * los.y + self.up * los.z
    }

    fn is_finite(&self) -> bool {
        self.east.is_finite() && self.north.is_finite() && self.up.is_finite()
    }
}

/// Rectangular monitor area `[a1, a2] x [b1, b2]` (east x north), m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBounds {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl RoiBounds {
    pub fn new(a1: f64, a2: f64, b1: f64, b2: f64) -> Result<Self> {
        let roi = Self { a1, a2, b1, b2 };
        roi.validate()?;
        Ok(roi)
    }

    /// Square of side `d` centred on the origin.
    pub fn centered_square(d: f64) -> Result<Self> {
        Self::new(-d / 2.0, d / 2.0, -d / 2.0, d / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a1, self.a2, self.b1, self.b2]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.a1 >= self.a2 || self.b1 >= self.b2 {
            return Err(invalid(format!(
                "degenerate region [{}, {}] x [{}, {}]",
                self.a1, self.a2, self.b1, self.b2
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.a2 - self.a1
    }

    pub fn dy(&self) -> f64 {
        self.b2 - self.b1
    }

    pub fn area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn contains(&self, east: f64, north: f64) -> bool {
        (self.a1..=self.a2).contains(&east) && (self.b1..=self.b2).contains(&north)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpooferMode {
    /// Overwhelming zone within `L_TOV`, distance-decaying risk out to `L_TRI`.
    HighPowerDominant,
    /// Risk zone only, ramping from the spoofer out to `L_TRI`.
    ApproachDragOff,
    /// Exactly `round(alpha * M)` receivers spoofed, chosen uniformly.
    DirectFraction,
}

/// Spoofer and link-budget parameters. Powers in dBm, gains/losses in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpooferConfig {
    pub mode: SpooferMode,
    pub spoofer_position: Enu,
    pub counterfeit_position: Enu,
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_spoof_db: f64,
    pub rx_gain_auth_db: f64,
    pub auth_power_dbm: f64,
    pub env_loss_db: f64,
    pub sapr_tov_db: f64,
    pub sapr_risk_db: f64,
    pub wavelength_m: f64,
    pub hardware_delay_s: f64,
    /// Fraction of receivers spoofed in [`SpooferMode::DirectFraction`].
    pub spoofed_fraction: f64,
    /// Only the first `n` satellites are counterfeit; `None` means all.
    pub spoofed_satellite_count: Option<usize>,
    /// Std of the reported-position scatter, m.
    pub position_scatter_m: f64,
}

impl Default for SpooferConfig {
    fn default() -> Self {
        Self {
            mode: SpooferMode::DirectFraction,
            spoofer_position: Enu::horizontal(-600.0, 600.0),
            counterfeit_position: Enu::horizontal(-400.0, -400.0),
            tx_power_dbm: 0.0,
            tx_gain_db: 0.0,
            rx_gain_spoof_db: -10.0,
            rx_gain_auth_db: 0.0,
            auth_power_dbm: -128.0,
            env_loss_db: 5.0,
            sapr_tov_db: 35.0,
            sapr_risk_db: 5.0,
            wavelength_m: 0.1903,
            hardware_delay_s: 500e-9,
            spoofed_fraction: 0.0,
            spoofed_satellite_count: None,
            position_scatter_m: 5.0,
        }
    }
}

impl SpooferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.spoofed_fraction) {
            return Err(invalid(format!(
                "spoofed fraction {} outside [0, 1]",
                self.spoofed_fraction
            )));
        }
        if !(self.wavelength_m > 0.0) {
            return Err(invalid("wavelength must be positive"));
        }
        // Equal thresholds are accepted: both ranges then coincide.
        if self.sapr_tov_db < self.sapr_risk_db {
            return Err(invalid("overwhelming SAPR threshold below the risky one"));
        }
        if !(self.position_scatter_m >= 0.0) || !(self.hardware_delay_s.is_finite()) {
            return Err(invalid(
                "scatter and hardware delay must be finite, scatter >= 0",
            ));
        }
        if !self.spoofer_position.is_finite() || !self.counterfeit_position.is_finite() {
            return Err(invalid("spoofer positions must be finite"));
        }
        Ok(())
    }
}

/// Pseudorange noise and multipath parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// UERE standard deviation, m.
    pub sigma_rho: f64,
    pub multipath_enabled: bool,
    /// Multipath inflation factor.
    pub delta_sigma: f64,
    /// Gauss-Markov correlation time, s.
    pub tau_corr_s: f64,
    /// Spatial correlation decay distance, m.
    pub tau_d_m: f64,
    /// Arrival elevation of spoofing signals, deg.
    pub theta_spoof_deg: f64,
    pub epoch_interval_s: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_rho: 5.0,
            multipath_enabled: false,
            delta_sigma: 0.0,
            tau_corr_s: 25.0,
            tau_d_m: 25.0,
            theta_spoof_deg: 5.0,
            epoch_interval_s: 1.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_rho >= 0.0 && self.sigma_rho.is_finite()) {
            return Err(invalid("sigma_rho must be finite and >= 0"));
        }
        if !(self.delta_sigma >= 0.0 && self.delta_sigma.is_finite()) {
            return Err(invalid("delta_sigma must be finite and >= 0"));
        }
        if !(self.tau_corr_s > 0.0) || !(self.tau_d_m > 0.0) || !(self.epoch_interval_s > 0.0) {
            return Err(invalid(
                "correlation times, decay distance and epoch interval must be > 0",
            ));
        }
        Ok(())
    }

    /// Stationary multipath variance at `elevation_deg`, m^2.
    pub fn multipath_variance(&self, elevation_deg: f64) -> f64 {
        self.delta_sigma * self.delta_sigma * (0.13 + 0.53 * (-elevation_deg / 10.0).exp())
    }

    /// Gauss-Markov lag-one coefficient `exp(-dt / tau)`.
    pub fn gm_coefficient(&self) -> f64 {
        (-self.epoch_interval_s / self.tau_corr_s).exp()
    }

    fn multipath_active(&self) -> bool {
        self.multipath_enabled && self.delta_sigma > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeModel {
    #[default]
    FarField,
    Full3d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n_receivers: usize,
    pub epochs: usize,
    pub seed: u64,
    /// `"sky12"` or a path to a sky-view file.
    pub sky: String,
    pub range_model: RangeModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_receivers: 20,
            epochs: 1,
            seed: 1,
            sky: "sky12".into(),
            range_model: RangeModel::FarField,
        }
    }
}

/// One simulated world. Serialized as TOML with sections
/// `roi`, `spoofer`, `noise` and `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub roi: RoiBounds,
    #[serde(default)]
    pub spoofer: SpooferConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            roi: RoiBounds::centered_square(100.0).expect("valid"),
            spoofer: SpooferConfig::default(),
            noise: NoiseConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.roi.validate()?;
        self.spoofer.validate()?;
        self.noise.validate()?;
        if self.run.n_receivers < 2 {
            return Err(invalid("at least 2 receivers are required"));
        }
        if self.run.epochs < 1 {
            return Err(invalid("at least 1 epoch is required"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Resolve the `run.sky` entry.
    pub fn sky_view(&self) -> Result<SkyView> {
        if self.run.sky == "sky12" {
            Ok(SkyView::sky12())
        } else {
            SkyView::load(&self.run.sky)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverTruth {
    pub id: u32,
    pub true_position: Enu,
    pub is_spoofed: bool,
    pub reported_position: Enu,
}

/// Pseudoranges of one epoch, receivers x satellites, row-major, m.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMeasurements {
    pub epoch_index: usize,
    pub receiver_ids: Vec<u32>,
    pub satellite_ids: Vec<u32>,
    pseudoranges: Vec<f64>,
}

impl EpochMeasurements {
    pub fn new(
        epoch_index: usize,
        receiver_ids: Vec<u32>,
        satellite_ids: Vec<u32>,
        pseudoranges: Vec<f64>,
    ) -> Result<Self> {
        let expected = receiver_ids.len() * satellite_ids.len();
        if pseudoranges.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: pseudoranges.len(),
            });
        }
        if let Some(bad) = pseudoranges.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite pseudorange at flat index {bad}"
            )));
        }
        Ok(Self {
            epoch_index,
            receiver_ids,
            satellite_ids,
            pseudoranges,
        })
    }

    pub fn n_receivers(&self) -> usize {
        self.receiver_ids.len()
    }

    pub fn n_satellites(&self) -> usize {
        self.satellite_ids.len()
    }

    pub fn get(&self, receiver: usize, satellite: usize) -> f64 {
        self.pseudoranges[receiver * self.n_satellites() + satellite]
    }

    pub fn row(&self, receiver: usize) -> &[f64] {
        let j = self.n_satellites();
        &self.pseudoranges[receiver * j..(receiver + 1) * j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pseudoranges
    }

    /// Keep only the receivers at the given row indices, in that order.
    pub fn select_receivers(&self, rows: &[usize]) -> Result<Self> {
        let j = self.n_satellites();
        let mut ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * j);
        for &r in rows {
            if r >= self.n_receivers() {
                return Err(invalid(format!("receiver row {r} out of range")));
            }
            ids.push(self.receiver_ids[r]);
            values.extend_from_slice(self.row(r));
        }
        Self::new(self.epoch_index, ids, self.satellite_ids.clone(), values)
    }

    /// Keep only the satellites at the given column indices, in that order.
    pub fn select_satellites(&self, cols: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_receivers() * cols.len());
        for r in 0..self.n_receivers() {
            for &c in cols {
                if c >= self.n_satellites() {
                    return Err(invalid(format!("satellite column {c} out of range")));
                }
                values.push(self.get(r, c));
            }
        }
        let ids = cols.iter().map(|&c| self.satellite_ids[c]).collect();
        Self::new(self.epoch_index, self.receiver_ids.clone(), ids, values)
    }
}

/// Receivers i.i.d. uniform over the region, on the ground plane.
pub fn place_receivers<R: Rng + ?Sized>(
    roi: &RoiBounds,
    m: usize,
    rng: &mut R,
) -> Result<Vec<ReceiverTruth>> {
    roi.validate()?;
    if m < 2 {
        return Err(invalid(format!("need at least 2 receivers, got {m}")));
    }
    Ok((0..m)
        .map(|k| {
            let p = Enu::horizontal(
                rng.random_range(roi.a1..roi.a2),
                rng.random_range(roi.b1..roi.b2),
            );
            ReceiverTruth {
                id: k as u32,
                true_position: p,
                is_spoofed: false,
                reported_position: p,
            }
        })
        .collect())
}

/// Overwhelming (`l_tov`) and risky (`l_tri`) spoofed ranges, m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpoofedRanges {
    pub l_tov: f64,
    pub l_tri: f64,
}

/// Free-space range at which the spoofer reaches a given SAPR.
pub fn spoofed_ranges(cfg: &SpooferConfig) -> Result<SpoofedRanges> {
    cfg.validate()?;
    let budget = cfg.tx_power_dbm + cfg.tx_gain_db + cfg.rx_gain_spoof_db
        - cfg.auth_power_dbm
        - cfg.rx_gain_auth_db
        - cfg.env_loss_db;
    let range = |sapr: f64| {
        cfg.wavelength_m / (4.0 * std::f64::consts::PI) * 10f64.powf((budget - sapr) / 20.0)
    };
    Ok(SpoofedRanges {
        l_tov: range(cfg.sapr_tov_db),
        l_tri: range(cfg.sapr_risk_db),
    })
}

/// Spoofing probability at distance `d` from the spoofer.
pub fn spoof_probability(mode: SpooferMode, ranges: &SpoofedRanges, d: f64) -> f64 {
    let inner = match mode {
        SpooferMode::HighPowerDominant => ranges.l_tov,
        SpooferMode::ApproachDragOff => 0.0,
        SpooferMode::DirectFraction => return f64::NAN,
    };
    if mode == SpooferMode::HighPowerDominant && d <= inner {
        1.0
    } else if d >= ranges.l_tri || ranges.l_tri <= inner {
        0.0
    } else {
        ((ranges.l_tri - d) / (ranges.l_tri - inner)).clamp(0.0, 1.0)
    }
}

/// Decide which receivers are spoofed and draw their reported positions.
pub fn assign_spoofed<R: Rng + ?Sized>(
    receivers: &mut [ReceiverTruth],
    cfg: &SpooferConfig,
    rng: &mut R,
) -> Result<()> {
    cfg.validate()?;
    let m = receivers.len();
    match cfg.mode {
        SpooferMode::DirectFraction => {
            let n_spoofed = (cfg.spoofed_fraction * m as f64).round() as usize;
            if n_spoofed > m {
                return Err(invalid("spoofed count exceeds receiver count"));
            }
            for r in receivers.iter_mut() {
                r.is_spoofed = false;
            }
            for k in index::sample(rng, m, n_spoofed) {
                receivers[k].is_spoofed = true;
            }
        }
        mode => {
            let ranges = spoofed_ranges(cfg)?;
            for r in receivers.iter_mut() {
                let d = r.true_position.distance(&cfg.spoofer_position);
                let p = spoof_probability(mode, &ranges, d);
                r.is_spoofed = if p >= 1.0 {
                    true
                } else if p <= 0.0 {
                    false
                } else {
                    rng.random_bool(p)
                };
            }
        }
    }
    let scatter = Normal::new(0.0, cfg.position_scatter_m)
        .map_err(|e| invalid(format!("position scatter: {e}")))?;
    for r in receivers.iter_mut() {
        let base = if r.is_spoofed {
            cfg.counterfeit_position
        } else {
            r.true_position
        };
        r.reported_position = Enu::new(
            base.east + scatter.sample(rng),
            base.north + scatter.sample(rng),
            base.up,
        );
    }
    Ok(())
}

/// First-order Gauss-Markov multipath series at one elevation, m.
pub fn multipath_series<R: Rng + ?Sized>(
    elevation_deg: f64,
    noise: &NoiseConfig,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    noise.validate()?;
    if k < 1 {
        return Err(invalid("multipath series needs at least one epoch"));
    }
    let sigma = noise.multipath_variance(elevation_deg).sqrt();
    let phi = noise.gm_coefficient();
    let drive = (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(k);
    let mut m: f64 = rng.sample::<f64, _>(StandardNormal);
    out.push(sigma * m);
    for _ in 1..k {
        m = phi * m + drive * rng.sample::<f64, _>(StandardNormal);
        out.push(sigma * m);
    }
    Ok(out)
}

/// Spatial correlation `C` of multipath between receivers and its upper
/// triangular square root `R` with `R^T R = C`.
#[derive(Debug, Clone)]
pub struct SpatialCorrelation {
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl SpatialCorrelation {
    /// `R^T z`: turns i.i.d. unit normals into a vector with covariance `C`.
    pub fn mix(&self, z: &[f64], out: &mut [f64]) {
        let n = z.len();
        for (m, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for k in 0..=m {
                acc += self.r[(k, m)] * z[k];
            }
            *o = acc;
        }
    }
}

pub fn spatial_correlation(positions: &[Enu], tau_d: f64) -> Result<SpatialCorrelation> {
    if positions.is_empty() {
        return Err(invalid("spatial correlation needs at least one receiver"));
    }
    if !(tau_d > 0.0) {
        return Err(invalid("correlation decay distance must be positive"));
    }
    let n = positions.len();
    let c = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (-positions[i].distance(&positions[j]) / tau_d).exp()
        }
    });
    let r = match cholesky_upper_psd(&c) {
        Some(r) => r,
        None => {
            let eig = SymmetricEigen::new(c.clone());
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            let rebuilt =
                &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            cholesky_upper_psd(&rebuilt).ok_or_else(|| {
                Error::Numerical("correlation matrix could not be factorized".into())
            })?
        }
    };
    Ok(SpatialCorrelation { c, r })
}

/// Upper-triangular `R` with `R^T R = A` for symmetric positive
/// semi-definite `A`. Zero pivots (duplicate rows) produce zero rows.
fn cholesky_upper_psd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale * n as f64;
    let mut r = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let mut pivot = a[(k, k)];
        for i in 0..k {
            pivot -= r[(i, k)] * r[(i, k)];
        }
        if pivot < -tol {
            return None;
        }
        if pivot <= tol {
            continue;
        }
        let d = pivot.sqrt();
        r[(k, k)] = d;
        for j in k + 1..n {
            let mut s = a[(k, j)];
            for i in 0..k {
                s -= r[(i, k)] * r[(i, j)];
            }
            r[(k, j)] = s / d;
        }
    }
    Some(r)
}

/// Synthesize `k` epochs of pseudoranges for the given receivers.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_epochs<R: Rng + ?Sized>(
    receivers: &[ReceiverTruth],
    sky: &SkyView,
    spoofer: &SpooferConfig,
    noise: &NoiseConfig,
    k: usize,
    range_model: RangeModel,
    rng: &mut R,
) -> Result<Vec<EpochMeasurements>> {
    spoofer.validate()?;
    noise.validate()?;
    let m = receivers.len();
    let j = sky.len();
    if m < 1 || k < 1 {
        return Err(invalid("synthesis needs receivers and at least one epoch"));
    }
    let n_spoofed_sats = spoofer.spoofed_satellite_count.unwrap_or(j);
    if n_spoofed_sats > j {
        return Err(invalid(format!(
            "{n_spoofed_sats} spoofed satellites requested but only {j} in view"
        )));
    }
    let los = sky.los_vectors();
    let elevations: Vec<f64> = sky.satellites().iter().map(|s| s.elevation_deg).collect();

    // Satellite clock and atmosphere terms; identical in authentic and
    // counterfeit signals.
    let sat_const: Vec<f64> = (0..j)
        .map(|_| rng.random_range(-30_000.0..30_000.0) + rng.random_range(2.0..20.0))
        .collect();
    let clock: Vec<f64> = (0..m)
        .map(|_| SPEED_OF_LIGHT * rng.random_range(0.0..1e-3))
        .collect();

    let geometric = |p: &Enu, s: usize| -> f64 {
        match range_model {
            RangeModel::FarField => SATELLITE_RANGE_M - p.dot(&los[s]),
            RangeModel::Full3d => {
                let sat = Enu::new(
                    SATELLITE_RANGE_M * los[s].x,
                    SATELLITE_RANGE_M * los[s].y,
                    SATELLITE_RANGE_M * los[s].z,
                );
                sat.distance(p)
            }
        }
    };

    // Noise-free part: constant across epochs.
    let mut base = vec![0.0; m * j];
    let mut counterfeit = vec![false; m * j];
    for (n, rx) in receivers.iter().enumerate() {
        let time_of_flight = rx.true_position.distance(&spoofer.spoofer_position)
            + SPEED_OF_LIGHT * spoofer.hardware_delay_s;
        for s in 0..j {
            let spoofed = rx.is_spoofed && s < n_spoofed_sats;
            counterfeit[n * j + s] = spoofed;
            base[n * j + s] = if spoofed {
                geometric(&spoofer.counterfeit_position, s) + time_of_flight
            } else {
                geometric(&rx.true_position, s)
            } + sat_const[s]
                + clock[n];
        }
    }

    // Multipath: per satellite a unit-variance Gauss-Markov process over
    // receivers, spatially mixed through R each epoch, then scaled by the
    // elevation-dependent standard deviation of each signal.
    let multipath = if noise.multipath_active() {
        let positions: Vec<Enu> = receivers.iter().map(|r| r.true_position).collect();
        let corr = spatial_correlation(&positions, noise.tau_d_m)?;
        let sigma_auth: Vec<f64> = elevations
            .iter()
            .map(|&el| noise.multipath_variance(el).sqrt())
            .collect();
        let sigma_spoof = noise.multipath_variance(noise.theta_spoof_deg).sqrt();
        let phi = noise.gm_coefficient();
        let drive = (1.0 - phi * phi).sqrt();
        let mut state = vec![0.0; j * m];
        let mut z = vec![0.0; m];
        let mut mixed = vec![0.0; m];
        let mut out = vec![0.0; k * m * j];
        for epoch in 0..k {
            for s in 0..j {
                z.iter_mut()
                    .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
                corr.mix(&z, &mut mixed);
                let st = &mut state[s * m..(s + 1) * m];
                for n in 0..m {
                    st[n] = if epoch == 0 {
                        mixed[n]
                    } else {
                        phi * st[n] + drive * mixed[n]
                    };
                    let sigma = if counterfeit[n * j + s] {
                        sigma_spoof
                    } else {
                        sigma_auth[s]
                    };
                    out[(epoch * m + n) * j + s] = sigma * st[n];
                }
            }
        }
        Some(out)
    } else {
        None
    };

    let ids: Vec<u32> = receivers.iter().map(|r| r.id).collect();
    let sat_ids = sky.ids();
    let sigma = noise.sigma_rho;
    (0..k)
        .map(|epoch| {
            let mut values = base.clone();
            for (idx, v) in values.iter_mut().enumerate() {
                if sigma > 0.0 {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                if let Some(mp) = &multipath {
                    *v += mp[epoch * m * j + idx];
                }
            }
            EpochMeasurements::new(epoch, ids.clone(), sat_ids.clone(), values)
        })
        .collect()
}

/// A complete simulated world.
#[derive(Debug, Clone)]
pub struct World {
    pub receivers: Vec<ReceiverTruth>,
    pub epochs: Vec<EpochMeasurements>,
}

/// Place, assign and synthesize in one go.
pub fn generate_world<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    sky: &SkyView,
    rng: &mut R,
) -> Result<World> {
    cfg.validate()?;
    let mut receivers = place_receivers(&cfg.roi, cfg.run.n_receivers, rng)?;
    assign_spoofed(&mut receivers, &cfg.spoofer, rng)?;
    let epochs = synthesize_epochs(
        &receivers,
        sky,
        &cfg.spoofer,
        &cfg.noise,
        cfg.run.epochs,
        cfg.run.range_model,
        rng,
    )?;
    Ok(World { receivers, epochs })
}

#[derive(Serialize, Deserialize)]
struct MeasurementRecord {
    epoch: usize,
    receiver_id: u32,
    satellite_id: u32,
    pseudorange_m: f64,
}

/// Write `epoch,receiver_id,satellite_id,pseudorange_m` rows.
pub fn write_measurements_csv<W: std::io::Write>(
    out: W,
    epochs: &[EpochMeasurements],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in epochs {
        for (n, &rid) in e.receiver_ids.iter().enumerate() {
            for (j, &sid) in e.satellite_ids.iter().enumerate() {
                w.serialize(MeasurementRecord {
                    epoch: e.epoch_index,
                    receiver_id: rid,
                    satellite_id: sid,
                    pseudorange_m: e.get(n, j),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a measurement dump back into per-epoch matrices. Every epoch must
/// hold the same full receiver x satellite grid.
pub fn read_measurements_csv<R: std::io::Read>(input: R) -> Result<Vec<EpochMeasurements>> {
    use std::collections::BTreeMap;
    let mut rdr = csv::Reader::from_reader(input);
    let mut by_epoch: BTreeMap<usize, BTreeMap<(u32, u32), f64>> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<MeasurementRecord>().enumerate() {
        let r = rec.map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        if by_epoch
            .entry(r.epoch)
            .or_default()
            .insert((r.receiver_id, r.satellite_id), r.pseudorange_m)
            .is_some()
        {
            return Err(Error::Parse {
                line: i + 2,
                message: format!(
                    "duplicate entry for receiver {} satellite {}",
                    r.receiver_id, r.satellite_id
                ),
            });
        }
    }
    let mut out = Vec::with_capacity(by_epoch.len());
    for (epoch, cells) in by_epoch {
        let mut rx: Vec<u32> = cells.keys().map(|k| k.0).collect();
        rx.dedup();
        let mut sats: Vec<u32> = cells.keys().map(|k| k.1).collect();
        sats.sort_unstable();
        sats.dedup();
        let mut values = Vec::with_capacity(rx.len() * sats.len());
        for &r in &rx {
            for &s in &sats {
                let v = cells.get(&(r, s)).ok_or_else(|| {
                    invalid(format!(
                        "epoch {epoch}: no pseudorange for receiver {r} satellite {s}"
                    ))
                })?;
                values.push(*v);
            }
        }
        out.push(EpochMeasurements::new(epoch, rx, sats, values)?);
    }
    if out.is_empty() {
        return Err(invalid("no measurements"));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ReceiverRecord {
    receiver_id: u32,
    true_east: f64,
    true_north: f64,
    reported_east: f64,
    reported_north: f64,
    is_spoofed: bool,
}

/// Write `receiver_id,true_east,true_north,reported_east,reported_north,is_spoofed`.
pub fn write_receivers_csv<W: std::io::Write>(out: W, receivers: &[ReceiverTruth]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in receivers {
        w.serialize(ReceiverRecord {
            receiver_id: r.id,
            true_east: r.true_position.east,
            true_north: r.true_position.north,
            reported_east: r.reported_position.east,
            reported_north: r.reported_position.north,
            is_spoofed: r.is_spoofed,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_receivers_csv<R: std::io::Read>(input: R) -> Result<Vec<ReceiverTruth>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<ReceiverRecord>()
        .enumerate()
        .map(|(i, rec)| {
            let r = rec.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            Ok(ReceiverTruth {
                id: r.receiver_id,
                true_position: Enu::horizontal(r.true_east, r.true_north),
                is_spoofed: r.is_spoofed,
                reported_position: Enu::horizontal(r.reported_east, r.reported_north),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn fig1a() -> SpooferConfig {
        SpooferConfig {
            mode: SpooferMode::HighPowerDominant,
            ..SpooferConfig::default()
        }
    }

    #[test]
    fn fig1a_ranges() {
        let r = spoofed_ranges(&fig1a()).unwrap();
        // 0.1903/(4 pi) * 10^(78/20) and 10^(108/20)
        assert!((r.l_tov - 120.3).abs() < 0.5, "{}", r.l_tov);
        assert!((r.l_tri - 3803.0).abs() < 5.0, "{}", r.l_tri);
        assert!(r.l_tri > r.l_tov);
    }

    #[test]
    fn equal_thresholds_give_equal_ranges() {
        let cfg = SpooferConfig {
            sapr_risk_db: 35.0,
            ..fig1a()
        };
        let r = spoofed_ranges(&cfg).unwrap();
        assert_eq!(r.l_tov, r.l_tri);
    }

    #[test]
    fn twenty_db_scales_ranges_by_ten() {
        let a = spoofed_ranges(&fig1a()).unwrap();
        let b = spoofed_ranges(&SpooferConfig {
            tx_power_dbm: 20.0,
            ..fig1a()
        })
        .unwrap();
        assert!((b.l_tov / a.l_tov - 10.0).abs() < 1e-9);
        assert!((b.l_tri / a.l_tri - 10.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(RoiBounds::new(0.0, 0.0, 0.0, 1.0).is_err());
        let mut rng = stream(1, &[]);
        let roi = RoiBounds::centered_square(10.0).unwrap();
        assert!(place_receivers(&roi, 1, &mut rng).is_err());
        let bad = SpooferConfig {
            spoofed_fraction: 1.5,
            ..SpooferConfig::default()
        };
        let mut rx = place_receivers(&roi, 4, &mut rng).unwrap();
        assert!(assign_spoofed(&mut rx, &bad, &mut rng).is_err());
        assert!(RoiBounds {
            a1: 1.0,
            a2: 1.0,
            b1: 0.0,
            b2: 2.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn placement_is_deterministic_and_inside() {
        let roi = RoiBounds::new(10.0, 60.0, -5.0, 5.0).unwrap();
        let a = place_receivers(&roi, 50, &mut stream(3, &[1])).unwrap();
        let b = place_receivers(&roi, 50, &mut stream(3, &[1])).unwrap();
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|r| roi.contains(r.true_position.east, r.true_position.north)));
    }

    #[test]
    fn placement_mean_converges() {
        let roi = RoiBounds::new(100.0, 300.0, 0.0, 50.0).unwrap();
        let rx = place_receivers(&roi, 100_000, &mut stream(5, &[])).unwrap();
        let mean = rx.iter().map(|r| r.true_position.east).sum::<f64>() / rx.len() as f64;
        let se = roi.dx() / 12f64.sqrt() / (rx.len() as f64).sqrt();
        assert!((mean - 200.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn direct_fraction_counts() {
        let roi = RoiBounds::centered_square(100.0).unwrap();
        let mut rng = stream(9, &[]);
        for (alpha, expected) in [(0.0, 0), (1.0, 40), (0.25, 10), (0.5, 20)] {
            let mut rx = place_receivers(&roi, 40, &mut rng).unwrap();
            let cfg = SpooferConfig {
                spoofed_fraction: alpha,
                ..SpooferConfig::default()
            };
            assign_spoofed(&mut rx, &cfg, &mut rng).unwrap();
            assert_eq!(rx.iter().filter(|r| r.is_spoofed).count(), expected);
        }
    }

    #[test]
    fn zone_rules() {
        let cfg = SpooferConfig {
            spoofer_position: Enu::horizontal(0.0, 0.0),
            ..fig1a()
        };
        let roi = RoiBounds::centered_square(100.0).unwrap();
        let mut rng = stream(11, &[]);
        let mut rx = place_receivers(&roi, 30, &mut rng).unwrap();
        assign_spoofed(&mut rx, &cfg, &mut rng).unwrap();
        assert!(rx.iter().all(|r| r.is_spoofed));
        // Reported positions scatter about the counterfeit position.
        for r in &rx {
            assert!(r.reported_position.distance(&cfg.counterfeit_position) < 40.0);
        }

        let ranges = spoofed_ranges(&cfg).unwrap();
        let hp = SpooferMode::HighPowerDominant;
        assert_eq!(spoof_probability(hp, &ranges, ranges.l_tri + 1.0), 0.0);
        let mid = 0.5 * (ranges.l_tov + ranges.l_tri);
        assert!((spoof_probability(hp, &ranges, mid) - 0.5).abs() < 1e-12);
        let ad = SpooferMode::ApproachDragOff;
        assert!(spoof_probability(ad, &ranges, 1.0) < 1.0);
        assert!(spoof_probability(ad, &ranges, 10.0) > spoof_probability(ad, &ranges, 1000.0));
    }

    #[test]
    fn multipath_zero_inflation_is_silent() {
        let noise = NoiseConfig::default();
        let s = multipath_series(30.0, &noise, 50, &mut stream(1, &[])).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn multipath_stationary_variance_and_autocorrelation() {
        let noise = NoiseConfig {
            multipath_enabled: true,
            delta_sigma: 1.0,
            ..NoiseConfig::default()
        };
        assert!((noise.multipath_variance(0.0) - 0.66).abs() < 1e-12);
        let n = 1_000_000;
        let s = multipath_series(0.0, &noise, n, &mut stream(21, &[])).unwrap();
        let var = s.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var / 0.66 - 1.0).abs() < 0.01 * 5.0, "var {var}");
        let lag1 = s.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1) as f64 / var;
        assert!((lag1 - (-1.0f64 / 25.0).exp()).abs() < 0.02, "lag1 {lag1}");
    }

    #[test]
    fn correlation_examples() {
        let one = spatial_correlation(&[Enu::default()], 25.0).unwrap();
        assert_eq!(one.c[(0, 0)], 1.0);
        assert_eq!(one.r[(0, 0)], 1.0);
        let two = spatial_correlation(&[Enu::default(), Enu::horizontal(25.0, 0.0)], 25.0).unwrap();
        assert!((two.c[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((two.c[(0, 1)] - 0.36788).abs() < 1e-5);
    }

    fn reconstruction_error(corr: &SpatialCorrelation) -> f64 {
        let rtr = corr.r.transpose() * &corr.r;
        (rtr - &corr.c).norm()
    }

    #[test]
    fn correlation_factor_reconstructs() {
        let roi = RoiBounds::centered_square(200.0).unwrap();
        let rx = place_receivers(&roi, 20, &mut stream(4, &[])).unwrap();
        let pos: Vec<Enu> = rx.iter().map(|r| r.true_position).collect();
        let corr = spatial_correlation(&pos, 25.0).unwrap();
        assert!(reconstruction_error(&corr) < 1e-9);
        for i in 0..20 {
            for j in 0..i {
                assert_eq!(corr.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn coincident_receivers_factorize() {
        let p = Enu::horizontal(3.0, 4.0);
        let pos = vec![p, p, Enu::horizontal(30.0, 0.0), p];
        let corr = spatial_correlation(&pos, 25.0).unwrap();
        assert!(reconstruction_error(&corr) < 1e-9);
    }

    #[test]
    fn mixing_preserves_marginal_variance() {
        let roi = RoiBounds::centered_square(100.0).unwrap();
        let rx = place_receivers(&roi, 8, &mut stream(6, &[])).unwrap();
        let pos: Vec<Enu> = rx.iter().map(|r| r.true_position).collect();
        let corr = spatial_correlation(&pos, 25.0).unwrap();
        let mut rng = stream(6, &[1]);
        let n = 100_000;
        let mut acc = vec![0.0; 8];
        let mut z = vec![0.0; 8];
        let mut out = vec![0.0; 8];
        for _ in 0..n {
            z.iter_mut()
                .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
            corr.mix(&z, &mut out);
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o * o;
            }
        }
        for a in acc {
            assert!((a / n as f64 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn synthesis_rejects_too_many_spoofed_satellites() {
        let sky = SkyView::sky12();
        let roi = RoiBounds::centered_square(100.0).unwrap();
        let mut rng = stream(1, &[]);
        let rx = place_receivers(&roi, 3, &mut rng).unwrap();
        let cfg = SpooferConfig {
            spoofed_satellite_count: Some(13),
            ..SpooferConfig::default()
        };
        let r = synthesize_epochs(
            &rx,
            &sky,
            &cfg,
            &NoiseConfig::default(),
            1,
            RangeModel::FarField,
            &mut rng,
        );
        assert!(r.is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("[roi]") && text.contains("[spoofer]"));
        assert!(text.contains("[noise]") && text.contains("[run]"));
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
        let minimal = "[roi]\na1 = 0.0\na2 = 10.0\nb1 = 0.0\nb2 = 10.0\n";
        let parsed = ScenarioConfig::from_toml(minimal).unwrap();
        assert_eq!(parsed.noise.sigma_rho, 5.0);
        assert!(
            ScenarioConfig::from_toml("[roi]\na1 = 1.0\na2 = 0.0\nb1 = 0.0\nb2 = 1.0\n").is_err()
        );
    }

    #[test]
    fn measurement_dump_round_trips() {
        let sky = SkyView::sky12().truncated(4).unwrap();
        let mut cfg = ScenarioConfig::default();
        cfg.run.n_receivers = 3;
        cfg.run.epochs = 2;
        let w = generate_world(&cfg, &sky, &mut stream(8, &[])).unwrap();
        let mut buf = Vec::new();
        write_measurements_csv(&mut buf, &w.epochs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,receiver_id,satellite_id,pseudorange_m\n"));
        assert_eq!(read_measurements_csv(&buf[..]).unwrap(), w.epochs);
        let mut rbuf = Vec::new();
        write_receivers_csv(&mut rbuf, &w.receivers).unwrap();
        assert_eq!(read_receivers_csv(&rbuf[..]).unwrap(), w.receivers);
    }
}
