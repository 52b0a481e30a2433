//! Exact stable norm of rotational metrics `f(x₂)⟨·,·⟩` by quadrature.
//!
//! For `|t| < √m` (with `m = min f`) the invariant graphs of the geodesic flow
//! give the points
//!
//! ```text
//! p(t) = (t·J(t), 1) / K(t),   J = ∫ (f − t²)^{-1/2},   K = ∫ f (f − t²)^{-1/2}
//! ```
//!
//! on the unit sphere of the stable norm, and their reflections `−p(t)`. The two
//! remaining pieces of the unit sphere are the segments joining the curve ends
//! to `±e₁/√m`. All integrals are over one period in `x₂`; every integrand
//! concentrates near the minima of `f` as `t² → m`, so each well is integrated
//! in the variable `w` with `u = α sinh(w)`, `α² = (f(s_j) − t²)/c_j`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::export::{csv_string, SvgSeries, SvgStyle};
use crate::metrics::{FourierSeries, Vec2};
use crate::quadrature::integrate;

/// Samples with `m − t²` below this are out of double range for the corner
/// defect and reported as censored.
pub const MIN_GAP: f64 = 1e-280;

const REL_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
struct Well {
    center: f64,
    /// `f(center) − m ≥ 0`.
    offset: f64,
    /// Half the second derivative at the center (positive).
    curvature: f64,
    lo: f64,
    hi: f64,
}

/// Quadrature oracle for a fixed one-dimensional conformal factor.
#[derive(Clone, Debug)]
pub struct RotationalOracle {
    f: FourierSeries,
    min_f: f64,
    argmin: f64,
    wells: Vec<Well>,
}

/// Integrals at fixed gap `ε = m − t²`.
#[derive(Clone, Copy, Debug)]
pub struct OracleIntegrals {
    pub gap: f64,
    /// `∫ (f − t²)^{-1/2}`
    pub j: f64,
    /// `∫ f (f − t²)^{-1/2}`
    pub k: f64,
    /// `∫ (f − t²)^{1/2}`
    pub g: f64,
    /// Largest relative quadrature error estimate of the three.
    pub rel_err: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OraclePoint {
    pub t: f64,
    pub p: Vec2,
    pub err: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCurve {
    pub min_f: f64,
    pub t: Vec<f64>,
    /// Closed polyline ordered by angle, both branches and the two corner
    /// points `±e₁/√m`.
    pub points: Vec<Vec2>,
    pub errors: Vec<f64>,
}

impl OracleCurve {
    /// Every turn of the closed polyline has the same orientation.
    pub fn is_convex(&self) -> bool {
        let n = self.points.len();
        let mut sign = 0.0;
        for i in 0..n {
            let a = self.points[(i + 1) % n] - self.points[i];
            let b = self.points[(i + 2) % n] - self.points[(i + 1) % n];
            let c = a[0] * b[1] - a[1] * b[0];
            if c.abs() < 1e-15 {
                continue;
            }
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return false;
            }
        }
        true
    }

    /// Distance from `q` to the polyline.
    pub fn distance_to(&self, q: Vec2) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                let ab = b - a;
                let s = ((q - a).dot(&ab) / ab.norm_squared().max(1e-300)).clamp(0.0, 1.0);
                (q - (a + ab * s)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 2]> = self.points.iter().map(|p| [p[0], p[1]]).collect();
        csv_string(&["x", "y"], &rows)
    }

    pub fn svg_series(&self, label: &str, color: &str) -> SvgSeries {
        SvgSeries { label: label.into(), color: color.into(), style: SvgStyle::ClosedLine, points: self.points.clone() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaLevelSet {
    pub level: f64,
    pub b: Vec<f64>,
    /// Upper branch `(b, ∫√(2af − b²))` followed by the lower branch.
    pub points: Vec<Vec2>,
    /// `∇α` at the upper-branch points of the level `1/2`, which lie on the unit
    /// sphere of the stable norm; empty for other levels.
    pub gradient_points: Vec<Vec2>,
}

fn polish_critical(f: &FourierSeries, a: f64, b: f64, want_min: bool) -> f64 {
    let d = |s: f64| f.jet(&[s]).grad[0] * if want_min { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (a, b);
    if !(d(lo) < 0.0 && d(hi) > 0.0) {
        return 0.5 * (a + b);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl RotationalOracle {
    pub fn new(f: &FourierSeries) -> Result<Self> {
        if f.dim != 1 {
            return Err(Error::InvalidMetric("the oracle needs a one-dimensional factor".into()));
        }
        let n = 2048;
        let h = 1.0 / n as f64;
        let vals: Vec<f64> = (0..n).map(|i| f.eval(&[i as f64 * h])).collect();
        let lo_grid = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo_grid - f.lipschitz_bound() * h * 0.5 <= 0.0 {
            return Err(Error::InvalidMetric(format!("factor not certified positive (grid minimum {lo_grid})")));
        }
        let mut centers = Vec::new();
        let mut tops = Vec::new();
        if !f.is_constant() {
            for i in 0..n {
                let (p, c, q) = (vals[(i + n - 1) % n], vals[i], vals[(i + 1) % n]);
                let s = i as f64 * h;
                if c < p && c <= q {
                    centers.push(polish_critical(f, s - h, s + h, true));
                }
                if c > p && c >= q {
                    tops.push(s);
                }
            }
        }
        let mut wells = Vec::new();
        if centers.is_empty() {
            wells.push(Well { center: 0.0, offset: 0.0, curvature: 1.0, lo: -0.5, hi: 0.5 });
        } else {
            let m_local: Vec<f64> = centers.iter().map(|&s| f.eval(&[s])).collect();
            let m = m_local.iter().cloned().fold(f64::INFINITY, f64::min);
            for (j, &s) in centers.iter().enumerate() {
                // neighbouring maxima bound the well
                let lo = tops.iter().map(|&t| if t < s { t } else { t - 1.0 }).fold(f64::NEG_INFINITY, f64::max);
                let hi = tops.iter().map(|&t| if t > s { t } else { t + 1.0 }).fold(f64::INFINITY, f64::min);
                let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (s - 0.5, s + 0.5) };
                let curv = 0.5 * f.jet(&[s]).hess[(0, 0)];
                let scale = f.amplitude_sum().max(1e-300);
                wells.push(Well {
                    center: s,
                    offset: (m_local[j] - m).max(0.0),
                    curvature: if curv > 1e-6 * scale { curv } else { scale },
                    lo: lo - s,
                    hi: hi - s,
                });
            }
        }
        let (argmin, min_f) =
            wells.iter().map(|w| (w.center, f.eval(&[w.center]))).min_by(|a, b| a.1.total_cmp(&b.1)).expect("at least one well");
        let min_f = if f.is_constant() { f.constant } else { min_f };
        Ok(RotationalOracle { f: f.clone(), min_f, argmin: argmin - argmin.floor(), wells })
    }

    pub fn min_f(&self) -> f64 {
        self.min_f
    }

    pub fn argmin(&self) -> f64 {
        self.argmin
    }

    pub fn factor(&self) -> &FourierSeries {
        &self.f
    }

    /// `∫ h(Δf, f)` over one period, where `Δf = f − m` is evaluated without
    /// cancellation and the integrand peaks near `Δf = 0` with width `√gap`.
    fn well_integral<H: Fn(f64, f64) -> f64>(&self, gap: f64, h: H) -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut err = 0.0;
        for w in &self.wells {
            let alpha = ((w.offset + gap) / w.curvature).sqrt();
            let integrand = |s: f64| {
                let u = alpha * s.sinh();
                let df = (self.f.difference_1d(w.center, u) + w.offset).max(0.0);
                h(df, self.min_f + df) * alpha * s.cosh()
            };
            let q = integrate(integrand, (w.lo / alpha).asinh(), (w.hi / alpha).asinh(), 1e-300, REL_TOL)?;
            total += q.value;
            err += q.error;
        }
        Ok((total, err))
    }

    pub fn integrals(&self, gap: f64) -> Result<OracleIntegrals> {
        if !(gap > 0.0) {
            return domain(format!("|t| must be below sqrt(min f); gap {gap}"));
        }
        let (j, ej) = self.well_integral(gap, |df, _| 1.0 / (df + gap).sqrt())?;
        let (g, eg) = self.well_integral(gap, |df, _| (df + gap).sqrt())?;
        let t2 = self.min_f - gap;
        let k = g + t2 * j;
        let rel_err = (ej / j).max(eg / g);
        Ok(OracleIntegrals { gap, j, k, g, rel_err })
    }

    /// `m − t²` computed as `(√m − |t|)(√m + |t|)`.
    pub fn gap_of(&self, t: f64) -> f64 {
        let r = self.min_f.sqrt();
        (r - t.abs()) * (r + t.abs())
    }

    /// Point `p(t)` of the unit sphere (upper branch).
    pub fn point(&self, t: f64) -> Result<OraclePoint> {
        let gap = self.gap_of(t);
        if !(gap > 0.0) || !t.is_finite() {
            return domain(format!("|t| = {} must be below sqrt(min f) = {}", t.abs(), self.min_f.sqrt()));
        }
        let q = self.integrals(gap)?;
        Ok(OraclePoint { t, p: Vec2::new(t * q.j, 1.0) / q.k, err: 4.0 * q.rel_err })
    }

    /// `∫ f/√(f − t²)` by direct quadrature (independent of the `G + t²J` identity).
    pub fn k_direct(&self, t: f64) -> Result<f64> {
        let gap = self.gap_of(t);
        Ok(self.well_integral(gap, |df, f| f / (df + gap).sqrt())?.0)
    }

    /// Right-hand slope `D = ∫ √(f − m)` of `y ↦ σ(1, y)` at `y = 0`.
    pub fn corner_slope(&self) -> Result<f64> {
        Ok(self
            .well_integral(0.0, |df, _| df.sqrt())
            .or_else(|_| {
                integrate(|s| (self.f.eval(&[s]) - self.min_f).max(0.0).sqrt(), 0.0, 1.0, 1e-15, REL_TOL).map(|q| (q.value, q.error))
            })?
            .0)
    }

    /// Solve `|t|·J(t) = r` for the gap `m − t²`; `None` when the gap would be
    /// below `MIN_GAP`.
    fn gap_for_ratio(&self, r: f64) -> Result<Option<(f64, OracleIntegrals)>> {
        let m = self.min_f;
        let r = r.abs();
        if r == 0.0 {
            return Ok(Some((m, self.integrals(m)?)));
        }
        let ratio = |gap: f64| -> Result<(f64, OracleIntegrals)> {
            let q = self.integrals(gap)?;
            Ok(((m - gap).max(0.0).sqrt() * q.j, q))
        };
        // |t|J is increasing in |t|; first bracket in t, then in log(gap).
        let half = ratio(0.5 * m)?;
        if r <= half.0 {
            let (mut lo, mut hi) = (0.0, (0.5 * m).sqrt());
            let mut best = half.1;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let (v, q) = ratio(self.gap_of(mid))?;
                best = q;
                if v < r {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 * hi {
                    break;
                }
            }
            let t = 0.5 * (lo + hi);
            let gap = self.gap_of(t);
            if (best.gap - gap).abs() > 1e-15 * gap {
                best = self.integrals(gap)?;
            }
            return Ok(Some((gap, best)));
        }
        let floor = ratio(MIN_GAP)?;
        if r > floor.0 {
            return Ok(None);
        }
        let (mut lo, mut hi) = (MIN_GAP.ln(), (0.5 * m).ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (v, _) = ratio(mid.exp())?;
            // larger gap means smaller ratio
            if v > r {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        let gap = (0.5 * (lo + hi)).exp();
        Ok(Some((gap, self.integrals(gap)?)))
    }

    /// Stable norm of `ξ`.
    pub fn sigma(&self, xi: Vec2) -> Result<f64> {
        if xi.norm() == 0.0 || !xi[0].is_finite() || !xi[1].is_finite() {
            return domain("sigma of the zero vector");
        }
        let rm = self.min_f.sqrt();
        if xi[1] == 0.0 {
            return Ok(rm * xi[0].abs());
        }
        let r = xi[0] / xi[1];
        match self.gap_for_ratio(r)? {
            Some((_, q)) => Ok(xi[1].abs() * q.k),
            // exponentially close to the corner segment
            None => Ok(rm * xi[0].abs() + self.corner_slope()? * xi[1].abs()),
        }
    }

    /// Gradient of `σ` at `ξ` (exists off the horizontal axis).
    pub fn gradient(&self, xi: Vec2) -> Result<Vec2> {
        if xi[1] == 0.0 {
            return domain("sigma is not differentiable on the horizontal axis");
        }
        let sgn = xi[1].signum();
        let r = xi[0] / xi[1];
        let (t, g) = match self.gap_for_ratio(r)? {
            Some((gap, q)) => ((self.min_f - gap).max(0.0).sqrt() * r.signum(), q.g),
            None => (self.min_f.sqrt() * r.signum(), self.corner_slope()?),
        };
        Ok(Vec2::new(t, g) * sgn)
    }

    /// `σ(1, y) − σ(1, 0) − D|y|` for `y ≠ 0`, evaluated without cancellation.
    /// `None` when the value is below double-precision range.
    pub fn corner_defect(&self, y: f64) -> Result<Option<f64>> {
        if y == 0.0 {
            return Ok(Some(0.0));
        }
        let y = y.abs();
        let Some((gap, q)) = self.gap_for_ratio(1.0 / y)? else {
            return Ok(None);
        };
        let rm = self.min_f.sqrt();
        let tau = (self.min_f - gap).max(0.0).sqrt();
        let (gk3, _) = self.well_integral(gap, |df, f| {
            let a = (df + gap).sqrt();
            let b = df.sqrt();
            gap * f / (a * (a + b) * (rm * a + tau * b))
        })?;
        let _ = q;
        Ok(Some(y * gap * gk3 / (rm + tau)))
    }

    /// Closed polyline of the unit sphere with `m_samples` parameters per branch.
    pub fn unit_circle(&self, m_samples: usize) -> Result<OracleCurve> {
        if m_samples < 2 {
            return domain("need at least two samples per branch");
        }
        let rm = self.min_f.sqrt();
        let mut t = Vec::with_capacity(m_samples);
        let mut upper = Vec::with_capacity(m_samples);
        let mut errs = Vec::with_capacity(m_samples);
        for j in 0..m_samples {
            // cosine spacing clusters samples toward ±√m
            let tj = rm * (PI * (j as f64 + 0.5) / m_samples as f64).cos();
            let p = self.point(tj)?;
            t.push(tj);
            upper.push(p.p);
            errs.push(p.err);
        }
        // t decreasing gives increasing angle on the upper branch
        let mut points = vec![Vec2::new(1.0 / rm, 0.0)];
        let mut errors = vec![0.0];
        points.extend(upper.iter().copied());
        errors.extend(errs.iter().copied());
        points.push(Vec2::new(-1.0 / rm, 0.0));
        errors.push(0.0);
        points.extend(upper.iter().map(|p| -p));
        errors.extend(errs.iter().copied());
        Ok(OracleCurve { min_f: self.min_f, t, points, errors })
    }

    /// `g(t) = ∫ √(f − t²)`.
    fn g_of(&self, t: f64) -> Result<f64> {
        Ok(self.integrals(self.gap_of(t))?.g)
    }

    /// Level set `{α = a}` sampled at `m_samples` values of `b`.
    pub fn alpha_level_set(&self, a: f64, m_samples: usize) -> Result<AlphaLevelSet> {
        if !(a > 0.0) {
            return domain("level must be positive");
        }
        let bmax = (2.0 * a * self.min_f).sqrt();
        let mut bs = Vec::new();
        let mut upper = Vec::new();
        let mut grads = Vec::new();
        for j in 0..m_samples {
            let b = bmax * (PI * (j as f64 + 0.5) / m_samples as f64).cos();
            if b * b >= 2.0 * a * self.min_f {
                continue;
            }
            // ∫√(2af − b²) = √(2a) g(b/√(2a))
            let s = (2.0 * a).sqrt();
            let tb = b / s;
            let gv = self.g_of(tb)?;
            bs.push(b);
            upper.push(Vec2::new(b, s * gv));
            if (a - 0.5).abs() < 1e-15 {
                let dg = richardson_derivative(|x| self.g_of(x), tb, 1e-3 * rm_or_one(self.min_f - tb * tb))?;
                grads.push(Vec2::new(-dg, 1.0) / (gv - tb * dg));
            }
        }
        let mut points = upper.clone();
        points.extend(upper.iter().map(|p| Vec2::new(p[0], -p[1])));
        Ok(AlphaLevelSet { level: a, b: bs, points, gradient_points: grads })
    }
}

fn rm_or_one(gap: f64) -> f64 {
    gap.sqrt().min(1.0)
}

/// Central difference with two Richardson extrapolation levels.
pub fn richardson_derivative<F: Fn(f64) -> Result<f64>>(f: F, x: f64, h: f64) -> Result<f64> {
    let d = |h: f64| -> Result<f64> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    let (d1, d2, d3) = (d(h)?, d(h / 2.0)?, d(h / 4.0)?);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    Ok((16.0 * r2 - r1) / 15.0)
}

/// Free-function form of [`RotationalOracle::point`].
pub fn oracle_point(f: &FourierSeries, t: f64) -> Result<OraclePoint> {
    RotationalOracle::new(f)?.point(t)
}

pub fn oracle_unit_circle(f: &FourierSeries, m_samples: usize) -> Result<OracleCurve> {
    RotationalOracle::new(f)?.unit_circle(m_samples)
}

pub fn oracle_sigma(f: &FourierSeries, xi: Vec2) -> Result<f64> {
    RotationalOracle::new(f)?.sigma(xi)
}

pub fn alpha_level_set(f: &FourierSeries, a: f64, m_samples: usize) -> Result<AlphaLevelSet> {
    RotationalOracle::new(f)?.alpha_level_set(a, m_samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> FourierSeries {
        FourierSeries::one_dim(2.0, &[(1, 1.0, 0.0)])
    }

    fn sqrt_f_integral(f: &FourierSeries) -> f64 {
        integrate(|s| f.eval(&[s]).sqrt(), 0.0, 1.0, 0.0, 1e-15).unwrap().value
    }

    #[test]
    fn constant_factor_gives_circle() {
        let c = 3.0;
        let o = RotationalOracle::new(&FourierSeries::constant(1, c)).unwrap();
        for t in [0.0, 0.5, -1.2, 1.7] {
            let p = o.point(t).unwrap().p;
            let want = Vec2::new(t, (c - t * t).sqrt()) / c;
            assert!((p - want).norm() < 1e-13, "{t}: {p:?} {want:?}");
        }
        let one = RotationalOracle::new(&FourierSeries::constant(1, 1.0)).unwrap();
        let curve = one.unit_circle(64).unwrap();
        assert!(curve.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn t_zero_point() {
        let f = standard();
        let p = oracle_point(&f, 0.0).unwrap().p;
        assert!(p[0] == 0.0);
        assert!((p[1] - 1.0 / sqrt_f_integral(&f)).abs() < 1e-13);
    }

    #[test]
    fn corner_limit() {
        // the approach is logarithmic in the gap m − t²
        let o = RotationalOracle::new(&standard()).unwrap();
        let mut last = f64::INFINITY;
        for gap in [1e-2, 1e-10, 1e-50, 1e-250] {
            let q = o.integrals(gap).unwrap();
            let p = Vec2::new((1.0 - gap).sqrt() * q.j, 1.0) / q.k;
            let d = (p - Vec2::new(1.0, 0.0)).norm();
            assert!(d < last);
            last = d;
        }
        assert!(last < 0.05, "{last}");
        assert!(o.point(1.0).is_err());
        assert!(o.point(-1.5).is_err());
    }

    #[test]
    fn sigma_examples() {
        let f = standard();
        let o = RotationalOracle::new(&f).unwrap();
        assert!((o.sigma(Vec2::new(0.0, 1.0)).unwrap() - sqrt_f_integral(&f)).abs() < 1e-13);
        assert_eq!(o.sigma(Vec2::new(1.0, 0.0)).unwrap(), 1.0);
        let s = o.sigma(Vec2::new(2.0, 3.0)).unwrap();
        assert!((o.sigma(Vec2::new(-2.0, -3.0)).unwrap() - s).abs() < 1e-14);
        assert!(o.sigma(Vec2::zeros()).is_err());
    }

    #[test]
    fn k_identity() {
        let o = RotationalOracle::new(&FourierSeries::one_dim(2.0, &[(1, 1.0, 0.3), (2, 0.2, 0.0)])).unwrap();
        for t in [0.0, 0.4, 0.9 * o.min_f().sqrt(), -0.99 * o.min_f().sqrt()] {
            let q = o.integrals(o.gap_of(t)).unwrap();
            let direct = o.k_direct(t).unwrap();
            assert!((q.k - direct).abs() <= 1e-7 * direct);
        }
    }

    #[test]
    fn gradient_is_dual_to_sigma() {
        let o = RotationalOracle::new(&standard()).unwrap();
        for xi in [Vec2::new(0.3, 1.0), Vec2::new(2.0, 0.5), Vec2::new(-1.0, -0.7)] {
            let g = o.gradient(xi).unwrap();
            // Euler identity for a 1-homogeneous function
            assert!((g.dot(&xi) - o.sigma(xi).unwrap()).abs() < 1e-12);
            let h = 1e-5;
            for k in 0..2 {
                let mut e = Vec2::zeros();
                e[k] = h;
                let fd = (o.sigma(xi + e).unwrap() - o.sigma(xi - e).unwrap()) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn corner_defect_matches_direct_difference() {
        let o = RotationalOracle::new(&standard()).unwrap();
        let d = o.corner_slope().unwrap();
        assert!((d - 2.0 * 2f64.sqrt() / PI).abs() < 1e-14);
        let y = 0.5;
        let direct = o.sigma(Vec2::new(1.0, y)).unwrap() - 1.0 - d * y;
        let formula = o.corner_defect(y).unwrap().unwrap();
        assert!((direct - formula).abs() < 1e-13, "{direct} {formula}");
        // high-precision reference values
        let v = o.corner_defect(0.2).unwrap().unwrap();
        assert!((v / 1.6214e-10 - 1.0).abs() < 1e-3, "{v}");
        let v = o.corner_defect(0.1).unwrap().unwrap();
        assert!((v / 1.825e-20 - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn curve_is_convex_and_symmetric() {
        let curve = oracle_unit_circle(&standard(), 48).unwrap();
        assert!(curve.is_convex());
        let n = curve.points.len();
        for i in 0..n / 2 {
            assert!((curve.points[i] + curve.points[i + n / 2]).norm() < 1e-14);
        }
    }

    #[test]
    fn alpha_levels() {
        let one = alpha_level_set(&FourierSeries::constant(1, 1.0), 0.5, 16).unwrap();
        assert!(one.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        let f = standard();
        let a1 = alpha_level_set(&f, 0.5, 16).unwrap();
        let a2 = alpha_level_set(&f, 2.0, 16).unwrap();
        for (p, q) in a1.points.iter().zip(&a2.points) {
            assert!((q - p * 2.0).norm() < 1e-12);
        }
        let o = RotationalOracle::new(&f).unwrap();
        for (b, g) in a1.b.iter().zip(&a1.gradient_points) {
            let p = o.point(*b).unwrap().p;
            assert!((p - g).norm() < 1e-6, "{b}: {p:?} {g:?}");
        }
    }

    #[test]
    fn two_well_factor() {
        let f = FourierSeries::one_dim(2.0, &[(2, -0.5, 0.0)]);
        let o = RotationalOracle::new(&f).unwrap();
        assert_eq!(o.wells.len(), 2);
        assert!((o.min_f() - 1.5).abs() < 1e-15);
        let s = o.sigma(Vec2::new(0.0, 1.0)).unwrap();
        assert!((s - sqrt_f_integral(&f)).abs() < 1e-13);
    }
}
