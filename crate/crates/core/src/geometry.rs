//! Satellite line-of-sight geometry in a local East-North-Up frame.
//!
//! Satellites enter only through their elevation and azimuth. All receivers
//! in a monitor area share one [`SkyView`]; the area is small compared with
//! the satellite distance, so per-receiver angles are not modelled.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// The committed 12-satellite open-sky fixture.
pub const SKY12: &str = include_str!("../fixtures/sky12.txt");

/// One satellite as seen from the monitor area. Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteLos {
    pub id: u32,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

impl SatelliteLos {
    /// Validates the elevation and normalizes the azimuth to [0, 360).
    pub fn new(id: u32, elevation_deg: f64, azimuth_deg: f64) -> Result<Self> {
        check_angles(elevation_deg, azimuth_deg)?;
        let mut az = azimuth_deg.rem_euclid(360.0);
        if az >= 360.0 {
            az = 0.0;
        }
        Ok(Self {
            id,
            elevation_deg,
            azimuth_deg: az,
        })
    }
}

fn check_angles(elevation_deg: f64, azimuth_deg: f64) -> Result<()> {
    if !elevation_deg.is_finite() || !azimuth_deg.is_finite() {
        return Err(invalid("satellite angles must be finite"));
    }
    if !(0.0..=90.0).contains(&elevation_deg) {
        return Err(invalid(format!(
            "elevation {elevation_deg} deg outside [0, 90]"
        )));
    }
    Ok(())
}

/// ENU unit vector pointing from the monitor area to a satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LosVector {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Difference of two line-of-sight unit vectors, `e^i - e^j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffGeomVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// `[cos(el) sin(az), cos(el) cos(az), sin(el)]`.
pub fn los_unit_vector(sat: &SatelliteLos) -> Result<LosVector> {
    check_angles(sat.elevation_deg, sat.azimuth_deg)?;
    let (sin_el, cos_el) = sat.elevation_deg.to_radians().sin_cos();
    let (sin_az, cos_az) = sat.azimuth_deg.to_radians().sin_cos();
    Ok(LosVector {
        x: cos_el * sin_az,
        y: cos_el * cos_az,
        z: sin_el,
    })
}

pub fn diff_geom_vector(i: &SatelliteLos, j: &SatelliteLos) -> Result<DiffGeomVector> {
    let ei = los_unit_vector(i)?;
    let ej = los_unit_vector(j)?;
    Ok(DiffGeomVector {
        x: ei.x - ej.x,
        y: ei.y - ej.y,
        z: ei.z - ej.z,
    })
}

/// Satellite pairs `(i, j)` with `i < j`, in list order.
pub fn satellite_pairs(n_satellites: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_satellites).flat_map(move |i| (i + 1..n_satellites).map(move |j| (i, j)))
}

/// The set of commonly observed satellites, `J >= 2`, unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyView {
    satellites: Vec<SatelliteLos>,
}

impl SkyView {
    pub fn new(satellites: Vec<SatelliteLos>) -> Result<Self> {
        if satellites.len() < 2 {
            return Err(invalid(format!(
                "a sky view needs at least 2 satellites, got {}",
                satellites.len()
            )));
        }
        for (k, s) in satellites.iter().enumerate() {
            check_angles(s.elevation_deg, s.azimuth_deg)?;
            if satellites[..k].iter().any(|o| o.id == s.id) {
                return Err(invalid(format!("duplicate satellite id {}", s.id)));
            }
        }
        Ok(Self { satellites })
    }

    /// The committed `sky12` fixture.
    pub fn sky12() -> Self {
        SKY12.parse().expect("sky12 fixture is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn satellites(&self) -> &[SatelliteLos] {
        &self.satellites
    }

    pub fn len(&self) -> usize {
        self.satellites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.satellites.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.satellites.iter().map(|s| s.id).collect()
    }

    pub fn n_pairs(&self) -> usize {
        crate::n_choose_2(self.len())
    }

    pub fn los_vectors(&self) -> Vec<LosVector> {
        self.satellites
            .iter()
            .map(|s| los_unit_vector(s).expect("validated on construction"))
            .collect()
    }

    /// Differential geometry vectors in pair enumeration order.
    pub fn diff_vectors(&self) -> Vec<DiffGeomVector> {
        let los = self.los_vectors();
        satellite_pairs(self.len())
            .map(|(i, j)| DiffGeomVector {
                x: los[i].x - los[j].x,
                y: los[i].y - los[j].y,
                z: los[i].z - los[j].z,
            })
            .collect()
    }

    /// The first `n` satellites, in list order.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.satellites[..n.min(self.len())].to_vec())
    }

    pub fn reversed(&self) -> Self {
        let mut s = self.satellites.clone();
        s.reverse();
        Self { satellites: s }
    }
}

impl FromStr for SkyView {
    type Err = Error;

    /// `id elevation_deg azimuth_deg` per line, `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut sats = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected 3 fields, got {}",
                    fields.len()
                )));
            }
            let id = fields[0]
                .parse::<u32>()
                .map_err(|e| parse_err(format!("satellite id: {e}")))?;
            let el = fields[1]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("elevation: {e}")))?;
            let az = fields[2]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("azimuth: {e}")))?;
            sats.push(SatelliteLos::new(id, el, az).map_err(|e| parse_err(e.to_string()))?);
        }
        Self::new(sats)
    }
}

impl fmt::Display for SkyView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# id elevation_deg azimuth_deg")?;
        for s in &self.satellites {
            writeln!(f, "{} {} {}", s.id, s.elevation_deg, s.azimuth_deg)?;
        }
        Ok(())
    }
}

/// Sums of squared horizontal differential-geometry components over all
/// satellite pairs. `sum_exy` is the mixed term, which the variance models
/// neglect but the simulations do not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryCoefficients {
    pub sum_ex2: f64,
    pub sum_ey2: f64,
    pub sum_exy: f64,
    pub n_pairs: usize,
}

impl GeometryCoefficients {
    /// `sum_ex2 / n_pairs`
    pub fn mean_ex2(&self) -> f64 {
        self.sum_ex2 / self.n_pairs as f64
    }

    pub fn mean_ey2(&self) -> f64 {
        self.sum_ey2 / self.n_pairs as f64
    }
}

pub fn geometry_coefficients(sky: &SkyView) -> Result<GeometryCoefficients> {
    if sky.len() < 2 {
        return Err(invalid("geometry coefficients need at least 2 satellites"));
    }
    let mut c = GeometryCoefficients {
        sum_ex2: 0.0,
        sum_ey2: 0.0,
        sum_exy: 0.0,
        n_pairs: 0,
    };
    for d in sky.diff_vectors() {
        c.sum_ex2 += d.x * d.x;
        c.sum_ey2 += d.y * d.y;
        c.sum_exy += d.x * d.y;
        c.n_pairs += 1;
    }
    Ok(c)
}
