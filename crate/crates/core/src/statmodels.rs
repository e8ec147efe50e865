//! Closed-form densities and variance predictions for the D²PS set, and the
//! chi-squared distribution functions used by the detector.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{geometry_coefficients, GeometryCoefficients, SkyView};
use crate::n_choose_2;
use crate::scenario::{Enu, RoiBounds};

/// Density of the symmetric triangle on `[-d, d]`, 1/m.
pub fn triangle_pdf(x: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid(format!(
            "triangle half-width must be positive, got {d}"
        )));
    }
    let ax = x.abs();
    Ok(if ax >= d { 0.0 } else { (d - ax) / (d * d) })
}

/// Density of the sum of two independent triangles with half-widths
/// `d_ex` and `d_ey` (the DDP of two uniformly placed receivers for one
/// satellite pair).
///
/// Uses the four-piece cubic when `min >= max - min`; other width ratios go
/// through the exact truncated-power form of the same convolution.
pub fn sum_pdf(h: f64, d_ex: f64, d_ey: f64) -> Result<f64> {
    let (a, b) = canonical_widths(d_ex, d_ey)?;
    if b >= a - b {
        Ok(sum_pdf_closed(h.abs(), a, b))
    } else {
        Ok(sum_pdf_truncated_power(h, a, b))
    }
}

fn canonical_widths(d_ex: f64, d_ey: f64) -> Result<(f64, f64)> {
    if !(d_ex > 0.0 && d_ey > 0.0) || !d_ex.is_finite() || !d_ey.is_finite() {
        return Err(invalid(format!(
            "sum density widths must be positive, got ({d_ex}, {d_ey})"
        )));
    }
    Ok(if d_ex >= d_ey {
        (d_ex, d_ey)
    } else {
        (d_ey, d_ex)
    })
}

/// Piecewise cubic for `a >= b >= a - b`, evaluated at `h = |h| >= 0`.
fn sum_pdf_closed(h: f64, a: f64, b: f64) -> f64 {
    let k = 1.0 / (a * b * a * b);
    let (h2, h3) = (h * h, h * h * h);
    let p = if h < a - b {
        h3 / 3.0 - b * h2 + a * b * b - b * b * b / 3.0
    } else if h < b {
        h3 / 2.0 - (a + b) / 2.0 * h2
            + (a - b) * (a - b) / 2.0 * h
            + (3.0 * b - a) / 6.0 * a * a
            + (3.0 * a - b) / 6.0 * b * b
    } else if h < a {
        h3 / 6.0
            + (b - a) / 2.0 * h2
            + (a * a - b * b - 2.0 * a * b) / 2.0 * h
            + (3.0 * b - a) / 6.0 * a * a
            + (3.0 * a + b) / 6.0 * b * b
    } else if h < a + b {
        let s = a + b;
        -h3 / 6.0 + s / 2.0 * h2 - s * s / 2.0 * h + s * s * s / 6.0
    } else {
        0.0
    };
    k * p
}

/// The same density written as a sum of four uniforms (widths a, a, b, b)
/// and expanded with truncated cubes; valid for every width ratio.
fn sum_pdf_truncated_power(h: f64, a: f64, b: f64) -> f64 {
    let lo = -(a + b);
    if h <= lo || h >= a + b {
        return 0.0;
    }
    let widths = [a, a, b, b];
    let mut acc = 0.0;
    for mask in 0u32..16 {
        let shift: f64 = (0..4)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| widths[i])
            .sum();
        let t = h - lo - shift;
        if t > 0.0 {
            let sign = if mask.count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            acc += sign * t * t * t;
        }
    }
    (acc / (6.0 * a * a * b * b)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
    H2,
    H2PartialSats,
}

/// A predicted D²PS variance together with the inputs it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePrediction {
    pub sigma2: f64,
    pub hypothesis: Hypothesis,
    pub inputs: Vec<(&'static str, f64)>,
}

impl VariancePrediction {
    fn new(sigma2: f64, hypothesis: Hypothesis, inputs: Vec<(&'static str, f64)>) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::Numerical(format!("variance prediction {sigma2}")));
        }
        Ok(Self {
            sigma2,
            hypothesis,
            inputs,
        })
    }

    pub fn std(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn input(&self, name: &str) -> Option<f64> {
        self.inputs
            .iter()
            .find(|(k, _)| *k == name)
            .map(|&(_, v)| v)
    }
}

fn area_variance(dx: f64, dy: f64, g: &GeometryCoefficients) -> f64 {
    let c = g.n_pairs as f64;
    (dx * dx * g.sum_ex2 + dy * dy * g.sum_ey2) / (6.0 * c)
}

/// Spoofing-free variance of a region with dimensions `dx` x `dy`.
pub fn variance_h0(dx: f64, dy: f64, sky: &SkyView) -> Result<VariancePrediction> {
    if !(dx >= 0.0 && dy >= 0.0) || !dx.is_finite() || !dy.is_finite() {
        return Err(invalid(format!(
            "region dimensions must be >= 0, got ({dx}, {dy})"
        )));
    }
    let g = geometry_coefficients(sky)?;
    VariancePrediction::new(
        area_variance(dx, dy, &g),
        Hypothesis::H0,
        vec![("dx", dx), ("dy", dy), ("n_pairs", g.n_pairs as f64)],
    )
}

/// `variance_h0` plus the measurement-noise floor `4 sigma_rho^2 / k`,
/// which the geometric model leaves out.
pub fn variance_h0_with_noise(
    dx: f64,
    dy: f64,
    sky: &SkyView,
    sigma_rho: f64,
    k: usize,
) -> Result<VariancePrediction> {
    let mut p = variance_h0(dx, dy, sky)?;
    p.sigma2 += variance_h1(sigma_rho, k)?.sigma2;
    p.inputs.push(("sigma_rho", sigma_rho));
    p.inputs.push(("k", k as f64));
    Ok(p)
}

/// Fully-spoofed variance: `4 sigma_rho^2`, divided by `k` when `k`
/// epochs are averaged.
pub fn variance_h1(sigma_rho: f64, k: usize) -> Result<VariancePrediction> {
    if !(sigma_rho >= 0.0) || !sigma_rho.is_finite() {
        return Err(invalid(format!("sigma_rho must be >= 0, got {sigma_rho}")));
    }
    if k < 1 {
        return Err(invalid("at least one epoch is required"));
    }
    VariancePrediction::new(
        4.0 * sigma_rho * sigma_rho / k as f64,
        Hypothesis::H1,
        vec![("sigma_rho", sigma_rho), ("k", k as f64)],
    )
}

/// Second moment of the offset between the counterfeit coordinate `f` and
/// an authentic coordinate uniform on `[lo, hi]`, both signs equally likely.
pub fn offset_variance(f: f64, lo: f64, hi: f64) -> f64 {
    let (u, v) = (f - lo, f - hi);
    (u * u + v * v + u * v) / 3.0
}

/// How the mixed last term of the partially-spoofed variance is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossTermReading {
    /// `2a(1-a)(sigma_a^2 + 2 sigma_rho^2) sigma_s^2`, products of variances.
    Literal,
    /// `2a(1-a)(sigma_a + 2 sigma_rho) sigma_s`, products of standard deviations.
    #[default]
    StdProduct,
}

/// Component variances of the partially-spoofed model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H2Components {
    /// Authentic-authentic pairs over the authentic region.
    pub sigma2_auth: f64,
    /// Spoofed-authentic pairs.
    pub sigma2_cross: f64,
    pub sigma_rho: f64,
}

pub fn h2_components(
    auth_region: &RoiBounds,
    p_f: &Enu,
    sky: &SkyView,
    sigma_rho: f64,
) -> Result<H2Components> {
    auth_region.validate()?;
    if !(sigma_rho >= 0.0) || !sigma_rho.is_finite() {
        return Err(invalid(format!("sigma_rho must be >= 0, got {sigma_rho}")));
    }
    let g = geometry_coefficients(sky)?;
    let sx = offset_variance(p_f.east, auth_region.a1, auth_region.a2);
    let sy = offset_variance(p_f.north, auth_region.b1, auth_region.b2);
    Ok(H2Components {
        sigma2_auth: area_variance(auth_region.dx(), auth_region.dy(), &g),
        sigma2_cross: (sx * g.sum_ex2 + sy * g.sum_ey2) / g.n_pairs as f64,
        sigma_rho,
    })
}

impl H2Components {
    /// Combine the components for spoofed fraction `alpha`.
    pub fn combine(&self, alpha: f64, reading: CrossTermReading) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        let b = 1.0 - alpha;
        let s2 = self.sigma_rho * self.sigma_rho;
        let mixed = match reading {
            CrossTermReading::Literal => (self.sigma2_auth + 2.0 * s2) * self.sigma2_cross,
            CrossTermReading::StdProduct => {
                (self.sigma2_auth.sqrt() + 2.0 * self.sigma_rho) * self.sigma2_cross.sqrt()
            }
        };
        Ok(b.powi(4) * self.sigma2_auth
            + 4.0 * alpha.powi(4) * s2
            + 4.0 * alpha * alpha * b * b * self.sigma2_cross
            + 2.0 * alpha * b * mixed)
    }
}

/// Partially-spoofed variance for spoofed fraction `alpha`, authentic
/// receivers in `auth_region` and counterfeit position `p_f`.
pub fn variance_h2(
    alpha: f64,
    auth_region: &RoiBounds,
    p_f: &Enu,
    sky: &SkyView,
    sigma_rho: f64,
    reading: CrossTermReading,
) -> Result<VariancePrediction> {
    let c = h2_components(auth_region, p_f, sky, sigma_rho)?;
    VariancePrediction::new(
        c.combine(alpha, reading)?,
        Hypothesis::H2,
        vec![
            ("alpha", alpha),
            ("dx", auth_region.dx()),
            ("dy", auth_region.dy()),
            ("x_f", p_f.east),
            ("y_f", p_f.north),
            ("sigma_rho", sigma_rho),
            ("sigma2_auth", c.sigma2_auth),
            ("sigma2_cross", c.sigma2_cross),
        ],
    )
}

/// Variance when only the first `n_spoofed` of `j` satellites are
/// counterfeit on every receiver.
pub fn variance_partial_sats(
    n_spoofed: usize,
    j: usize,
    auth_variance: f64,
    sigma_rho: f64,
) -> Result<VariancePrediction> {
    if j < 2 || n_spoofed > j {
        return Err(invalid(format!("{n_spoofed} spoofed of {j} satellites")));
    }
    if !(auth_variance >= 0.0) || !(sigma_rho >= 0.0) {
        return Err(invalid("variances must be >= 0"));
    }
    let r = n_choose_2(n_spoofed) as f64 / n_choose_2(j) as f64;
    VariancePrediction::new(
        (1.0 - r) * (1.0 - r) * auth_variance + 4.0 * r * r * sigma_rho * sigma_rho,
        Hypothesis::H2PartialSats,
        vec![
            ("n_spoofed", n_spoofed as f64),
            ("j", j as f64),
            ("auth_variance", auth_variance),
            ("sigma_rho", sigma_rho),
        ],
    )
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut s = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        s += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) || !a.is_finite() {
        return Err(invalid(format!(
            "incomplete gamma needs a > 0, x >= 0; got ({a}, {x})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let log_prefix = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                return Ok((sum * log_prefix.exp()).min(1.0));
            }
        }
        Err(Error::Numerical(format!(
            "gamma series did not converge at ({a}, {x})"
        )))
    } else {
        // Modified Lentz evaluation of the continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                return Ok((1.0 - log_prefix.exp() * h).max(0.0));
            }
        }
        Err(Error::Numerical(format!(
            "gamma fraction did not converge at ({a}, {x})"
        )))
    }
}

fn check_dof(dof: usize) -> Result<f64> {
    if dof < 1 {
        return Err(invalid("chi-squared needs at least one degree of freedom"));
    }
    Ok(dof as f64)
}

/// Chi-squared CDF with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: usize) -> Result<f64> {
    let k = check_dof(dof)?;
    if !(x >= 0.0) {
        return Err(invalid(format!(
            "chi-squared argument must be >= 0, got {x}"
        )));
    }
    reg_lower_gamma(k / 2.0, x / 2.0)
}

/// Chi-squared density with `dof` degrees of freedom.
pub fn chi2_pdf(x: f64, dof: usize) -> Result<f64> {
    let k = check_dof(dof)?;
    if x < 0.0 {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Ok(match dof {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        });
    }
    let h = k / 2.0;
    Ok(((h - 1.0) * x.ln() - x / 2.0 - h * std::f64::consts::LN_2 - ln_gamma(h)).exp())
}

/// Chi-squared quantile: the `x` with `chi2_cdf(x, dof) = p`.
pub fn chi2_inv(p: f64, dof: usize) -> Result<f64> {
    let k = check_dof(dof)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability must be in (0, 1), got {p}")));
    }
    let mut lo = 0.0;
    let mut hi = k + 10.0 * (2.0 * k).sqrt() + 50.0;
    while chi2_cdf(hi, dof)? < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical(format!(
                "no chi-squared bracket for p = {p}"
            )));
        }
    }
    let mut x = k.max(1e-3).min(0.5 * (lo + hi));
    for _ in 0..200 {
        let f = chi2_cdf(x, dof)? - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = chi2_pdf(x, dof)?;
        let mut next = x - f / pdf;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Standard normal CDF through `P(1/2, z^2/2)`.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let half = 0.5 * reg_lower_gamma(0.5, 0.5 * z * z).unwrap_or(1.0);
    if z >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SatelliteLos;

    fn one_pair_sky() -> SkyView {
        SkyView::new(vec![
            SatelliteLos::new(1, 90.0, 0.0).unwrap(),
            SatelliteLos::new(2, 0.0, 0.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn triangle_examples() {
        assert_eq!(triangle_pdf(0.0, 2.0).unwrap(), 0.5);
        assert_eq!(triangle_pdf(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(triangle_pdf(-2.0, 2.0).unwrap(), 0.0);
        assert!(triangle_pdf(0.0, 0.0).is_err());
    }

    #[test]
    fn sum_pdf_support_and_symmetry() {
        assert_eq!(sum_pdf(1.71, 1.0, 0.7).unwrap(), 0.0);
        assert_eq!(sum_pdf(3.0, 1.0, 0.2).unwrap(), 0.0);
        for h in [0.05, 0.4, 0.8, 1.2, 1.6] {
            assert_eq!(
                sum_pdf(h, 1.0, 0.7).unwrap(),
                sum_pdf(-h, 1.0, 0.7).unwrap()
            );
            assert_eq!(sum_pdf(h, 0.7, 1.0).unwrap(), sum_pdf(h, 1.0, 0.7).unwrap());
        }
        assert!(sum_pdf(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn both_layouts_agree_where_closed_form_applies() {
        for (a, b) in [(1.0, 0.7), (1.0, 0.5), (2.0, 1.9), (1.0, 1.0)] {
            for i in 0..=400 {
                let h = (a + b) * i as f64 / 400.0;
                let d = sum_pdf_closed(h, a, b) - sum_pdf_truncated_power(h, a, b);
                assert!(d.abs() < 1e-12, "({a},{b}) h={h} diff={d}");
            }
        }
    }

    #[test]
    fn h0_examples() {
        assert_eq!(
            variance_h0(0.0, 0.0, &SkyView::sky12()).unwrap().sigma2,
            0.0
        );
        let v = variance_h0(30.0, 100.0, &one_pair_sky()).unwrap().sigma2;
        assert!((v - 10_000.0 / 6.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn h1_examples() {
        assert_eq!(variance_h1(5.0, 1).unwrap().sigma2, 100.0);
        assert_eq!(variance_h1(0.0, 1).unwrap().sigma2, 0.0);
        assert_eq!(variance_h1(5.0, 5).unwrap().sigma2, 20.0);
        assert!(variance_h1(5.0, 0).is_err());
    }

    #[test]
    fn h2_limits_are_exact() {
        let sky = SkyView::sky12();
        let roi = RoiBounds::centered_square(500.0).unwrap();
        let pf = Enu::horizontal(750.0, 0.0);
        let auth = variance_h0(500.0, 500.0, &sky).unwrap().sigma2;
        for reading in [CrossTermReading::Literal, CrossTermReading::StdProduct] {
            let v0 = variance_h2(0.0, &roi, &pf, &sky, 5.0, reading)
                .unwrap()
                .sigma2;
            let v1 = variance_h2(1.0, &roi, &pf, &sky, 5.0, reading)
                .unwrap()
                .sigma2;
            assert_eq!(v0, auth);
            assert_eq!(v1, 100.0);
            assert!(variance_h2(1.1, &roi, &pf, &sky, 5.0, reading).is_err());
        }
    }

    #[test]
    fn h2_is_continuous_in_alpha() {
        let sky = SkyView::sky12();
        let roi = RoiBounds::centered_square(1000.0).unwrap();
        let pf = Enu::horizontal(-300.0, 700.0);
        for reading in [CrossTermReading::Literal, CrossTermReading::StdProduct] {
            let c = h2_components(&roi, &pf, &sky, 5.0).unwrap();
            // A jump would not shrink with the step; a continuous curve
            // changes in proportion to it.
            for i in 0..1000 {
                let a = i as f64 * 1e-3;
                let v = c.combine(a, reading).unwrap();
                let wide = (c.combine(a + 1e-8, reading).unwrap() - v).abs();
                let narrow = (c.combine(a + 1e-11, reading).unwrap() - v).abs();
                assert!(narrow <= 1e-2 * wide + 1e-12 * v, "jump at alpha = {a}");
            }
        }
    }

    #[test]
    fn partial_sats_examples() {
        assert_eq!(
            variance_partial_sats(0, 12, 777.0, 5.0).unwrap().sigma2,
            777.0
        );
        assert_eq!(
            variance_partial_sats(1, 12, 777.0, 5.0).unwrap().sigma2,
            777.0
        );
        assert_eq!(
            variance_partial_sats(12, 12, 777.0, 5.0).unwrap().sigma2,
            100.0
        );
        assert!(variance_partial_sats(13, 12, 777.0, 5.0).is_err());
        let r: f64 = 36.0 / 66.0;
        let v = variance_partial_sats(9, 12, 1000.0, 5.0).unwrap().sigma2;
        assert!((v - ((1.0 - r).powi(2) * 1000.0 + 4.0 * r * r * 25.0)).abs() < 1e-9);
    }

    #[test]
    fn chi2_examples() {
        assert_eq!(chi2_cdf(0.0, 7).unwrap(), 0.0);
        assert!((chi2_cdf(2.0 * 2f64.ln(), 2).unwrap() - 0.5).abs() < 1e-14);
        assert!((chi2_cdf(18.307, 10).unwrap() - 0.95).abs() < 5e-4);
        assert!((chi2_inv(0.5, 2).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-8);
        assert!(chi2_cdf(-1.0, 3).is_err());
        assert!(chi2_inv(0.0, 3).is_err());
        assert!(chi2_inv(1.0, 3).is_err());
        assert!(chi2_cdf(1.0, 0).is_err());
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut f = 1.0f64;
        for n in 1..30 {
            assert!((ln_gamma(n as f64) - f.ln()).abs() < 1e-12 * f.ln().max(1.0));
            f *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }
}
