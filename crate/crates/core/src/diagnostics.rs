//! Defect profiles, model fits, direction classification, heteroclinic windows
//! and broken-curve upper bounds.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::export::csv_string;
use crate::geodesic_flow::{monodromy_of_closed, ClosedGeodesic, FloquetReport};
use crate::linalg::linear_fit;
use crate::loop_minimizer::{
    find_periodic_minimizers, torus_hausdorff, Chain, LatticeVector, PeriodicMinimizers, PeriodicOrbit, CLUSTER_THRESHOLD,
};
use crate::metrics::{MetricSpec, Vec2};
use crate::rational_approx::rational_direction;
use crate::stable_norm::{defect_beta, defect_sigma, NormSource, TableOptions, RATIONAL_Q_MAX, RATIONAL_TOL};

/// Residual ratio required to prefer one model over the other.
pub const DECISION_MARGIN: f64 = 10.0;
/// Default heteroclinic half-window, in periods.
pub const DEFAULT_WINDOW: usize = 6;
const MIN_SAMPLES: usize = 4;
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Split `ξ + v` into its part along `ξ` and its part across.
pub fn radial_decompose(xi: Vec2, v: Vec2) -> Result<(Vec2, Vec2)> {
    let r = xi.norm();
    if r == 0.0 || !r.is_finite() {
        return domain("base direction must be nonzero");
    }
    let u = xi / r;
    let along = v.dot(&u);
    Ok((u * (r + along), v - u * along))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectMode {
    /// σ-defect at a rational base direction.
    Sigma,
    /// β-defect at an irrational base direction.
    Beta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectSample {
    pub t: f64,
    pub value: f64,
    pub err: f64,
    /// Only an upper bound `err` is known.
    pub censored: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectProfile {
    pub xi: Vec2,
    pub direction: Vec2,
    pub mode: DefectMode,
    pub samples: Vec<DefectSample>,
    pub uninformative: bool,
}

impl DefectProfile {
    pub fn uncensored(&self) -> impl Iterator<Item = &DefectSample> {
        self.samples.iter().filter(|s| !s.censored)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 4]> = self.samples.iter().map(|s| [s.t, s.value, s.err, if s.censored { 1.0 } else { 0.0 }]).collect();
        csv_string(&["t", "defect", "err", "censored"], &rows)
    }
}

/// Geometric grid `t0 · ratio^i`, `i = 0..count`.
pub fn geometric_grid(t0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| t0 * ratio.powi(i as i32)).collect()
}

pub fn default_mode(xi: Vec2) -> DefectMode {
    if rational_direction(xi, RATIONAL_Q_MAX, RATIONAL_TOL).is_some() {
        DefectMode::Sigma
    } else {
        DefectMode::Beta
    }
}

pub fn profile_defect(src: &dyn NormSource, xi: Vec2, direction: Vec2, t_grid: &[f64]) -> Result<DefectProfile> {
    profile_defect_with(src, xi, direction, t_grid, default_mode(xi))
}

/// Sample the defect along the ray `ξ + t·v̂`.
pub fn profile_defect_with(src: &dyn NormSource, xi: Vec2, direction: Vec2, t_grid: &[f64], mode: DefectMode) -> Result<DefectProfile> {
    if xi.norm() == 0.0 {
        return domain("base direction must be nonzero");
    }
    let dn = direction.norm();
    if dn == 0.0 || !dn.is_finite() {
        return domain("ray direction must be nonzero");
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return domain("t grid must be positive and strictly decreasing");
    }
    let u = direction / dn;
    let mut samples = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let d = match mode {
            DefectMode::Sigma => defect_sigma(src, xi, u * t)?,
            DefectMode::Beta => defect_beta(src, xi, u * t)?,
        };
        let censored = d.inconclusive || !(d.value > d.err);
        samples.push(DefectSample { t, value: d.value, err: d.err.max(f64::MIN_POSITIVE), censored });
    }
    let uninformative = samples.iter().all(|s| s.censored);
    Ok(DefectProfile { xi, direction: u, mode, samples, uninformative })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    QuadraticPinch,
    ExponentialFlat,
    Undetermined,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub c_lo: f64,
    pub c_hi: f64,
    /// Geometric-mean constant used for the residual.
    pub c: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentialFit {
    /// Power of `t` in the exponent, 1 or 1/4.
    pub power: f64,
    pub c: f64,
    pub lambda: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub model: Model,
    pub quadratic: Option<QuadraticFit>,
    pub exponential: Option<ExponentialFit>,
    pub used: usize,
    pub reason: String,
}

/// Log-space RMS of the uncensored misfit, plus a hinge for censored samples
/// whose upper bound the model overshoots.
fn residual(samples: &[DefectSample], model: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for s in samples {
        let pred = model(s.t);
        if s.censored {
            let h = (pred.ln() - s.err.ln()).max(0.0);
            acc += h * h;
        } else {
            let r = s.value.ln() - pred.ln();
            acc += r * r;
        }
    }
    (acc / samples.len() as f64).sqrt()
}

/// Exponent power for a mode: `1/t` at rational directions, `1/t^{1/4}` at
/// irrational ones.
pub fn exponent_power(mode: DefectMode) -> f64 {
    match mode {
        DefectMode::Sigma => 1.0,
        DefectMode::Beta => 0.25,
    }
}

/// Fit the quadratic-pinch and exponential-flat models and pick one.
pub fn fit_models(profile: &DefectProfile) -> FitReport {
    let used: Vec<&DefectSample> = profile.uncensored().filter(|s| s.value > 0.0).collect();
    if used.len() < MIN_SAMPLES {
        return FitReport {
            model: Model::Undetermined,
            quadratic: None,
            exponential: None,
            used: used.len(),
            reason: format!("{} uncensored samples, need {MIN_SAMPLES}", used.len()),
        };
    }
    let all = &profile.samples;
    let ratios: Vec<f64> = used.iter().map(|s| s.value / (s.t * s.t)).collect();
    let c_lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c_hi = ratios.iter().copied().fold(0.0, f64::max);
    let c = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let quad = QuadraticFit { c_lo, c_hi, c, residual: residual(all, |t| c * t * t) };

    let p = exponent_power(profile.mode);
    let xs: Vec<f64> = used.iter().map(|s| s.t.powf(-p)).collect();
    let ys: Vec<f64> = used.iter().map(|s| s.value.ln() - p * s.t.ln()).collect();
    let exponential = linear_fit(&xs, &ys).map(|(b0, b1)| {
        let (ce, lambda) = (b0.exp(), -b1);
        let res = residual(all, |t| ce * t.powf(p) * (-lambda * t.powf(-p)).exp());
        ExponentialFit { power: p, c: ce, lambda, residual: res }
    });

    let rq = quad.residual.max(RESIDUAL_FLOOR);
    let (model, reason) = match &exponential {
        None => (Model::Undetermined, "exponential regression degenerate".to_string()),
        Some(e) => {
            let re = e.residual.max(RESIDUAL_FLOOR);
            if e.lambda > 0.0 && DECISION_MARGIN * re <= rq {
                (Model::ExponentialFlat, format!("residual {re:.3e} vs quadratic {rq:.3e}"))
            } else if DECISION_MARGIN * rq <= re {
                (Model::QuadraticPinch, format!("residual {rq:.3e} vs exponential {re:.3e}"))
            } else {
                (Model::Undetermined, format!("residuals {rq:.3e} (quadratic) and {re:.3e} (exponential) within margin"))
            }
        }
    };
    FitReport { model, quadratic: Some(quad), exponential, used: used.len(), reason }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    KamLike,
    HyperbolicLike,
    Undetermined,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SideEvidence {
    pub profile: DefectProfile,
    pub fit: FitReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Classification {
    pub xi: Vec2,
    pub verdict: Verdict,
    pub rational: Option<LatticeVector>,
    pub sides: Vec<SideEvidence>,
    pub floquet: Option<FloquetReport>,
    pub reason: String,
    pub caveat: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ClassifyOptions {
    /// First ray length relative to `|ξ|`.
    pub t0_rel: f64,
    pub ratio: f64,
    pub samples: usize,
    pub table: TableOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { t0_rel: 0.2, ratio: 0.5, samples: 9, table: TableOptions { restarts: 8, ..TableOptions::default() } }
    }
}

const FLATNESS_CAVEAT: &str =
    "flatness is only guaranteed along some sequence of ray lengths; a fixed geometric grid can miss it or see it spuriously";

/// Floquet data for the best periodic minimizer of a primitive class.
pub fn floquet_of_class(spec: &MetricSpec, z: LatticeVector, opts: &TableOptions) -> Result<FloquetReport> {
    let m = find_periodic_minimizers(spec, z, opts.restarts, opts.seed, &opts.minimize)?;
    let best = m.best();
    let g = ClosedGeodesic::from_points(spec, z, &best.loop_ref().points, best.sigma())?;
    monodromy_of_closed(spec, &g)
}

/// Profile both transverse rays at `ξ` and combine the fits with Floquet data.
pub fn classify_direction(spec: &MetricSpec, src: &dyn NormSource, xi: Vec2, opts: &ClassifyOptions) -> Result<Classification> {
    let r = xi.norm();
    if r == 0.0 || !r.is_finite() {
        return domain("base direction must be nonzero");
    }
    let rational = rational_direction(xi, RATIONAL_Q_MAX, RATIONAL_TOL);
    let grid = geometric_grid(opts.t0_rel * r, opts.ratio, opts.samples);
    let across = Vec2::new(-xi[1], xi[0]) / r;
    let mut sides = Vec::new();
    for dir in [across, -across] {
        let profile = profile_defect(src, xi, dir, &grid)?;
        let fit = fit_models(&profile);
        sides.push(SideEvidence { profile, fit });
    }
    let all = |m: Model| sides.iter().all(|s| s.fit.model == m);
    let mut floquet = None;
    let (verdict, reason) = if all(Model::QuadraticPinch) {
        (Verdict::KamLike, "quadratic pinch on both sides".to_string())
    } else if all(Model::ExponentialFlat) {
        match rational {
            Some(z) => {
                let f = floquet_of_class(spec, z, &opts.table)?;
                let hyp = f.is_hyperbolic();
                floquet = Some(f);
                if hyp {
                    (Verdict::HyperbolicLike, format!("exponential flatness on both sides, periodic minimizer of {z} hyperbolic"))
                } else {
                    (Verdict::Undetermined, format!("exponential flatness but periodic minimizer of {z} not hyperbolic"))
                }
            }
            None => (Verdict::HyperbolicLike, "exponential flatness on both sides".to_string()),
        }
    } else {
        let ms: Vec<String> = sides.iter().map(|s| format!("{:?} ({})", s.fit.model, s.fit.reason)).collect();
        (Verdict::Undetermined, format!("sides disagree or inconclusive: {}", ms.join("; ")))
    };
    let caveat = (verdict == Verdict::HyperbolicLike).then(|| FLATNESS_CAVEAT.to_string());
    Ok(Classification { xi, verdict, rational, sides, floquet, reason, caveat })
}

/// `⟨p, z⟩ / |z|²`: position along the class direction, one unit per period.
fn along(z: LatticeVector, p: Vec2) -> f64 {
    p.dot(&z.to_vec2()) / z.norm_sq() as f64
}

/// Point of an orbit lift at a given along-coordinate.
fn point_at_along(o: &PeriodicOrbit, x: f64) -> Vec2 {
    let z = o.z();
    let sig = o.sigma();
    let mut s = (x - along(z, o.at(0.0))) * sig;
    for _ in 0..8 {
        let e = x - along(z, o.at(s));
        s += e * sig;
        if e.abs() < 1e-14 {
            break;
        }
    }
    o.at(s)
}

/// Minimize an open path from `a` at along-coordinate `x0` to `b` at `x1`.
fn splice_path(
    spec: &MetricSpec,
    a: &PeriodicOrbit,
    b: &PeriodicOrbit,
    x0: f64,
    x1: f64,
    density: usize,
) -> Result<(Vec<Vec2>, f64, bool)> {
    let p0 = point_at_along(a, x0);
    let p1 = point_at_along(b, x1);
    splice_between(spec, a, b, x0, x1, p0, p1, density)
}

#[allow(clippy::too_many_arguments)]
fn splice_between(
    spec: &MetricSpec,
    a: &PeriodicOrbit,
    b: &PeriodicOrbit,
    x0: f64,
    x1: f64,
    p0: Vec2,
    p1: Vec2,
    density: usize,
) -> Result<(Vec<Vec2>, f64, bool)> {
    let n = (((x1 - x0).abs() * density as f64).ceil() as usize).max(8);
    let interior: Vec<Vec2> = (1..n)
        .map(|i| {
            let u = i as f64 / n as f64;
            let x = x0 + (x1 - x0) * u;
            let w = u * u * (3.0 - 2.0 * u);
            point_at_along(a, x) * (1.0 - w) + point_at_along(b, x) * w
        })
        .collect();
    let chain = Chain::open(spec, p0, p1);
    let m = chain.minimize(interior, 1e-11, 400)?;
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(p0);
    pts.extend(m.points);
    pts.push(p1);
    Ok((pts, m.length, m.converged))
}

fn density_of(o: &PeriodicOrbit) -> usize {
    o.loop_ref().len().clamp(64, 256)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecaySample {
    pub t: f64,
    pub to_source: f64,
    pub to_target: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeteroclinicSegment {
    pub z: LatticeVector,
    pub window: usize,
    /// Along-coordinates of the two splice points.
    pub splice: (f64, f64),
    pub points: Vec<Vec2>,
    pub length: f64,
    /// `length − 2·window·σ(z)`.
    pub excess: f64,
    pub decay: Vec<DecaySample>,
    pub lambda_fit: Option<f64>,
    pub lambda_floquet: Option<f64>,
    /// Fitted and Floquet rates agree within a factor of two.
    pub consistent: Option<bool>,
    pub converged: bool,
}

/// Two neighbouring minimal orbits of a class: distinct orbits if there are
/// several, otherwise the orbit and its next lattice translate.
pub fn neighboring_pair(set: &PeriodicMinimizers) -> Result<(PeriodicOrbit, PeriodicOrbit)> {
    if set.foliated {
        return Err(Error::Precondition(format!("minimizers of {} foliate the torus, no gaps to connect", set.z)));
    }
    let copies = strip_copies(set, 1)?;
    Ok((copies[0].clone(), copies[1].clone()))
}

/// All lifts in one fundamental strip, sorted by height (descending for
/// `s = −1`), followed by the first translated by `s·z^⊥`.
fn strip_copies(set: &PeriodicMinimizers, s: i64) -> Result<Vec<PeriodicOrbit>> {
    let z = set.z;
    let c = z.complement()?.to_vec2();
    let span = z.norm_sq();
    let h0 = set.best().height();
    let mut copies: Vec<(f64, PeriodicOrbit)> = Vec::new();
    for o in &set.orbits {
        let h = o.height();
        let base = (h - h0).floor() as i64;
        for k in 0..span {
            let shift = (k - base) as f64;
            let hh = h + shift;
            if hh >= h0 - 1e-9 && hh < h0 + span as f64 - 1e-9 {
                copies.push((hh, o.translated(c * shift)));
            }
        }
    }
    copies.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s < 0 {
        copies.reverse();
    }
    let mut out: Vec<PeriodicOrbit> = copies.into_iter().map(|c| c.1).collect();
    let first = out[0].translated(z.perp().to_vec2() * s as f64);
    out.push(first);
    Ok(out)
}

fn distance_to_orbit(o: &PeriodicOrbit, p: Vec2) -> f64 {
    (p - point_at_along(o, along(o.z(), p))).norm()
}

/// Windowed minimizing path from orbit `a` to the neighbouring lift of `b`,
/// spanning `window` periods on each side of the splice midpoint.
pub fn find_heteroclinic(spec: &MetricSpec, a: &PeriodicOrbit, b: &PeriodicOrbit, window: usize) -> Result<HeteroclinicSegment> {
    let z = a.z();
    if b.z() != z {
        return Err(Error::Precondition(format!("orbits in different classes {z} and {}", b.z())));
    }
    if window == 0 {
        return domain("window must be at least one period");
    }
    let (ha, hb) = (a.height(), b.height());
    if (ha - hb).abs() < 0.5 && torus_hausdorff(a.loop_ref(), b.loop_ref()) < CLUSTER_THRESHOLD {
        return Err(Error::Precondition("source and target orbits coincide".into()));
    }
    // lift b into the strip just above a
    let k = (ha - hb).floor() + 1.0;
    let c = z.complement()?.to_vec2();
    let b = if (hb - ha) > 0.0 && (hb - ha) <= 1.0 { b.clone() } else { b.translated(c * k) };
    let x_mid = along(z, a.at(0.0));
    let m = window as f64;
    let (x0, x1) = (x_mid - m, x_mid + m);
    let (points, length, converged) = splice_path(spec, a, &b, x0, x1, density_of(a))?;

    let mut decay = Vec::with_capacity(points.len());
    let mut t = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            t += (p - points[i - 1]).norm();
        }
        decay.push(DecaySample { t, to_source: distance_to_orbit(a, *p), to_target: distance_to_orbit(&b, *p) });
    }
    let total = t;
    let period_t = total / (2.0 * m);
    let fit = |pick: &dyn Fn(&DecaySample) -> Option<f64>| -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            decay.iter().filter_map(|d| pick(d).filter(|v| *v > 1e-11 && *v < 2e-2).map(|v| (d.t, v.ln()))).unzip();
        if xs.len() < 8 {
            return None;
        }
        linear_fit(&xs, &ys).map(|(_, slope)| slope.abs())
    };
    let half = 0.5 * total;
    let lam_a = fit(&|d| (d.t > 0.5 * period_t && d.t < half).then_some(d.to_source));
    let lam_b = fit(&|d| (d.t > half && d.t < total - 0.5 * period_t).then_some(d.to_target));
    let lambda_fit = match (lam_a, lam_b) {
        (Some(x), Some(y)) => Some(0.5 * (x + y)),
        (x, y) => x.or(y),
    };
    let lambda_floquet = ClosedGeodesic::from_points(spec, z, &a.loop_ref().points, a.sigma())
        .and_then(|g| monodromy_of_closed(spec, &g))
        .ok()
        .and_then(|f| f.lyapunov);
    let consistent = match (lambda_fit, lambda_floquet) {
        (Some(x), Some(y)) if y > 0.0 => Some(x / y <= 2.0 && y / x <= 2.0),
        _ => None,
    };
    Ok(HeteroclinicSegment {
        z,
        window,
        splice: (x0, x1),
        excess: length - 2.0 * m * a.sigma(),
        points,
        length,
        decay,
        lambda_fit,
        lambda_floquet,
        consistent,
        converged,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrokenCurve {
    pub z: LatticeVector,
    pub side: i64,
    pub n: i64,
    pub partition: Vec<i64>,
    /// One period of the curve; the next period is shifted by `class`.
    pub points: Vec<Vec2>,
    pub class: [i64; 2],
    pub class_ok: bool,
    /// Distance bridged by the closing segment.
    pub closing_gap: f64,
    pub length: f64,
    /// `n·σ(z)`.
    pub sigma_nz: f64,
    /// `length − n·σ(z)`; tends to `D⁺σ(z)[s·z^⊥]` as the gaps grow.
    pub excess: f64,
    /// `2 Σ exp(−λσ(z)·gap/2)` with the Floquet rate and unit constant.
    pub tail: Option<f64>,
    pub converged: bool,
}

impl BrokenCurve {
    /// Certified upper bound for `σ(nz + s·z^⊥)`.
    pub fn upper_bound(&self) -> f64 {
        self.length
    }
}

/// Part of a polyline whose along-coordinate lies in `[lo, hi]`, with the end
/// points interpolated onto the bounds.
fn clip_along(z: LatticeVector, pts: &[Vec2], lo: f64, hi: f64) -> Vec<Vec2> {
    let at = |i: usize, x: f64| {
        let (a, b) = (pts[i], pts[i + 1]);
        let (xa, xb) = (along(z, a), along(z, b));
        let u = if xb == xa { 0.0 } else { ((x - xa) / (xb - xa)).clamp(0.0, 1.0) };
        a + (b - a) * u
    };
    let mut out = Vec::new();
    for i in 0..pts.len() - 1 {
        let (xa, xb) = (along(z, pts[i]), along(z, pts[i + 1]));
        if xa < lo && xb >= lo {
            out.push(at(i, lo));
        }
        if xa >= lo && xa <= hi && !(i == 0 && xa == lo && !out.is_empty()) {
            out.push(pts[i]);
        }
        if xa <= hi && xb > hi {
            out.push(at(i, hi));
            break;
        }
    }
    out
}

/// Points of an orbit lift with along-coordinate in `[lo, hi]`.
fn orbit_arc(o: &PeriodicOrbit, lo: f64, hi: f64, density: usize) -> Vec<Vec2> {
    if hi <= lo {
        return Vec::new();
    }
    let n = ((hi - lo) * density as f64).ceil() as usize;
    (0..=n).map(|i| point_at_along(o, lo + (hi - lo) * i as f64 / n as f64)).collect()
}

/// Closed curve in the class `nz + s·z^⊥` that follows one strip copy after
/// another. The transition from copy `j` to copy `j + 1` is a heteroclinic
/// centred at along-position `n_j`, cut halfway to the neighbouring
/// transitions; consecutive cuts are joined by straight segments.
///
/// `partition` lists the transition positions `n₀ ≤ … ≤ n_{k−1}` followed by
/// `n_k = n`, where `k` is the number of orbit copies per fundamental strip.
pub fn broken_curve(spec: &MetricSpec, set: &PeriodicMinimizers, side: i64, n: i64, partition: &[i64]) -> Result<BrokenCurve> {
    let z = set.z;
    if side != 1 && side != -1 {
        return domain("side must be +1 or -1");
    }
    if n < 1 {
        return domain("n must be positive");
    }
    if set.foliated {
        return Err(Error::Precondition(format!("minimizers of {z} foliate the torus, no heteroclinics")));
    }
    let copies = strip_copies(set, side)?;
    let k = copies.len() - 1;
    if partition.len() != k + 1 {
        return domain(format!("partition must have {} entries for {k} copies per strip", k + 1));
    }
    if partition[k] != n || partition[0] < 0 || partition.windows(2).any(|w| w[1] < w[0]) || partition[k - 1] - partition[0] > n {
        return domain("partition must be nondecreasing, start at or above 0 and end at n");
    }
    let class = z.scaled(n)?.plus(&z.perp().scaled(side)?)?;
    let shift = class.to_vec2();
    let origin = along(z, copies[0].at(0.0)).round();
    let centre = |j: usize| origin + partition[j] as f64;
    // gap after transition j, cyclically
    let gap = |j: usize| if j + 1 < k { (partition[j + 1] - partition[j]) as f64 } else { (partition[0] + n - partition[k - 1]) as f64 };
    let gap_before = |j: usize| if j == 0 { gap(k - 1) } else { gap(j - 1) };
    let density = density_of(set.best());
    let m = DEFAULT_WINDOW as f64;

    let mut points: Vec<Vec2> = Vec::new();
    let mut converged = true;
    for j in 0..k {
        let c = centre(j);
        let (lo, hi) = (c - 0.5 * gap_before(j), c + 0.5 * gap(j));
        let (het, _, ok) = splice_path(spec, &copies[j], &copies[j + 1], c - m, c + m, density)?;
        converged &= ok;
        let mut full = orbit_arc(&copies[j], lo.min(c - m), c - m, density);
        full.pop();
        full.extend_from_slice(&het);
        let tail = orbit_arc(&copies[j + 1], c + m, hi.max(c + m), density);
        full.extend(tail.into_iter().skip(1));
        let piece = clip_along(z, &full, lo, hi);
        if piece.is_empty() {
            return Err(Error::Construction(format!("empty piece {j} of the broken curve")));
        }
        points.extend(piece);
    }
    let first = points[0];
    let last = *points.last().expect("non-empty");
    // the last cut should sit on the first cut shifted by the class; any
    // mismatch is bridged by the closing segment of the chain
    let closing_gap = (last - (first + shift)).norm();
    points.pop();
    let span = along(z, last) - along(z, first);
    let class_ok = (span - n as f64).abs() < 1e-9 && closing_gap < 0.5;
    points.dedup_by(|a, b| (*a - *b).norm() < 1e-14);
    let length = Chain::closed(spec, shift).length(&points);
    let sigma_z = set.sigma;
    let lambda = ClosedGeodesic::from_points(spec, z, &set.best().loop_ref().points, sigma_z)
        .and_then(|g| monodromy_of_closed(spec, &g))
        .ok()
        .and_then(|f| f.lyapunov);
    let tail = lambda.map(|l| 2.0 * (0..k).map(|j| (-l * sigma_z * gap(j) / 2.0).exp()).sum::<f64>());
    Ok(BrokenCurve {
        z,
        side,
        n,
        partition: partition.to_vec(),
        points,
        class: [class.a(), class.b()],
        class_ok,
        closing_gap,
        length,
        sigma_nz: n as f64 * sigma_z,
        excess: length - n as f64 * sigma_z,
        tail,
        converged,
    })
}
