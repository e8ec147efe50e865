//! Brute-force reference computations for tests and acceptance runs.
//!
//! Nothing here is called from the production pipeline. Each routine takes
//! a deliberately different route to the same quantity: direct loops
//! instead of shared helpers, numerical quadrature instead of closed forms.

use crate::geometry::SkyView;

/// `(sum e_x^2, sum e_y^2, n_pairs)` over all satellite pairs, recomputed
/// from the raw angles.
pub fn pairwise_geometry_sums(sky: &SkyView) -> (f64, f64, usize) {
    let sats = sky.satellites();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0);
    for a in 0..sats.len() {
        for b in 0..sats.len() {
            if a >= b {
                continue;
            }
            let (ea, aa) = (
                sats[a].elevation_deg.to_radians(),
                sats[a].azimuth_deg.to_radians(),
            );
            let (eb, ab) = (
                sats[b].elevation_deg.to_radians(),
                sats[b].azimuth_deg.to_radians(),
            );
            let dx = ea.cos() * aa.sin() - eb.cos() * ab.sin();
            let dy = ea.cos() * aa.cos() - eb.cos() * ab.cos();
            sx += dx * dx;
            sy += dy * dy;
            n += 1;
        }
    }
    (sx, sy, n)
}

fn tri(x: f64, d: f64) -> f64 {
    let ax = x.abs();
    if ax >= d {
        0.0
    } else {
        (d - ax) / (d * d)
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

/// `(tri_a * tri_b)(h)`. The integrand is quadratic between breakpoints,
/// so Simpson's rule on each piece is exact up to rounding.
pub fn triangle_convolution(h: f64, a: f64, b: f64) -> f64 {
    let lo = (-a).max(h - b);
    let hi = a.min(h + b);
    if hi <= lo {
        return 0.0;
    }
    let mut knots = vec![lo, hi];
    for k in [-a, 0.0, a, h - b, h, h + b] {
        if k > lo && k < hi {
            knots.push(k);
        }
    }
    knots.sort_by(f64::total_cmp);
    let f = |t: f64| tri(t, a) * tri(h - t, b);
    knots.windows(2).map(|w| simpson(&f, w[0], w[1])).sum()
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `ln Gamma(k/2)` for integer `k >= 1` from exact factorial products.
fn ln_gamma_half_integer(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        // Gamma(n) = (n-1)!
        (1..k / 2).map(|i| (i as f64).ln()).sum()
    } else {
        // Gamma(n + 1/2) = sqrt(pi) * prod_{i=1..n} (i - 1/2)
        let n = k / 2;
        0.5 * std::f64::consts::PI.ln() + (1..=n).map(|i| (i as f64 - 0.5).ln()).sum::<f64>()
    }
}

/// Chi-squared CDF by integrating the density (after `t = u^2`, which
/// removes the singularity at zero for one degree of freedom).
pub fn chi2_cdf_quadrature(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64;
    let log_norm =
        std::f64::consts::LN_2 - 0.5 * k * std::f64::consts::LN_2 - ln_gamma_half_integer(dof);
    let g = |u: f64| {
        if u <= 0.0 {
            if dof == 1 {
                (log_norm).exp()
            } else {
                0.0
            }
        } else {
            ((k - 1.0) * u.ln() - 0.5 * u * u + log_norm).exp()
        }
    };
    let top = x.sqrt();
    // Split the range so the bell of the integrand is resolved.
    let peak = (k - 1.0).max(0.0).sqrt();
    let mut knots = vec![0.0];
    for c in [peak - 6.0, peak - 2.0, peak, peak + 2.0, peak + 6.0] {
        if c > 0.0 && c < top {
            knots.push(c);
        }
    }
    knots.push(top);
    knots
        .windows(2)
        .map(|w| adaptive_simpson(&g, w[0], w[1], 1e-15))
        .sum::<f64>()
        .min(1.0)
}

/// Chi-squared quantile from the quadrature CDF by plain bisection.
pub fn chi2_inv_quadrature(p: f64, dof: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, dof as f64 + 100.0);
    while chi2_cdf_quadrature(hi, dof) < p {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf_quadrature(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Second moment of the two-sided counterfeit offset mixture
/// `0.5 U(lo - f, hi - f) + 0.5 U(f - hi, f - lo)` by quadrature.
pub fn offset_mixture_second_moment(f: f64, lo: f64, hi: f64) -> f64 {
    let dens = 0.5 / (hi - lo);
    let moment = |a: f64, b: f64| adaptive_simpson(&|x: f64| x * x * dens, a, b, 1e-12);
    moment(lo - f, hi - f) + moment(f - hi, f - lo)
}

/// Maximal all-active rectangles by exhaustive enumeration and pairwise
/// containment, as inclusive `(x0, x1, y0, y1)` sorted ascending.
pub fn maximal_rectangles_brute(
    mask: &[bool],
    nx: usize,
    ny: usize,
) -> Vec<(usize, usize, usize, usize)> {
    let mut all = Vec::new();
    for x0 in 0..nx {
        for x1 in x0..nx {
            for y0 in 0..ny {
                for y1 in y0..ny {
                    let full = (y0..=y1).all(|y| (x0..=x1).all(|x| mask[y * nx + x]));
                    if full {
                        all.push((x0, x1, y0, y1));
                    }
                }
            }
        }
    }
    let inside = |a: &(usize, usize, usize, usize), b: &(usize, usize, usize, usize)| {
        b.0 <= a.0 && a.1 <= b.1 && b.2 <= a.2 && a.3 <= b.3
    };
    let mut out: Vec<_> = all
        .iter()
        .filter(|r| !all.iter().any(|o| o != *r && inside(r, o)))
        .copied()
        .collect();
    out.sort_unstable();
    out
}
