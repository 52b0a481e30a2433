//! Stable-norm tables over primitive classes, the homogeneous extension with
//! certified inner/outer bounds, forward derivatives and convexity defects.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::export::{csv_string, svg_plot, SvgSeries, SvgStyle};
use crate::geodesic_flow::{monodromy_of_closed, ClosedGeodesic, FloquetReport};
use crate::loop_minimizer::{find_periodic_minimizers, LatticeVector, MinimizeOptions, PeriodicMinimizers};
use crate::metrics::{MetricSpec, Vec2};
use crate::rational_approx::{primitive_vectors, rational_direction};
use crate::rotational_oracle::RotationalOracle;

/// Largest denominator treated as a rational direction.
pub const RATIONAL_Q_MAX: i64 = 64;
/// Angular tolerance for recognising a rational direction.
pub const RATIONAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableOptions {
    pub restarts: usize,
    pub seed: u64,
    pub minimize: MinimizeOptions,
    /// Attach a Floquet report for the best orbit of every entry.
    pub floquet: bool,
    /// Multiples `n` used for forward derivatives at lattice classes.
    pub n_list: Vec<i64>,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions { restarts: 8, seed: 0, minimize: MinimizeOptions::default(), floquet: true, n_list: vec![2, 4, 8, 16] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableEntry {
    pub z: LatticeVector,
    pub sigma: f64,
    /// Error bar from the last refinement step.
    pub err: f64,
    pub count: usize,
    pub foliated: bool,
    pub converged: bool,
    #[serde(rename = "N")]
    pub n: usize,
    pub grad_norm: f64,
    pub floquet: Option<FloquetReport>,
    pub error: Option<String>,
    #[serde(skip)]
    pub minimizers: Option<PeriodicMinimizers>,
}

impl TableEntry {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.sigma.is_finite()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub entries: usize,
    pub failures: usize,
    pub unconverged: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StableNormTable {
    pub schema: String,
    pub metric_hash: String,
    pub metric: MetricSpec,
    #[serde(rename = "Q")]
    pub q: f64,
    pub seed: u64,
    pub restarts: usize,
    pub entries: Vec<TableEntry>,
    pub diagnostics: BuildDiagnostics,
}

/// Error bar for an extrapolated length: the change between the last two
/// extrapolates, or the last correction when only two levels exist.
fn entry_error(hist: &[(usize, f64)], sigma: f64) -> f64 {
    let floor = 1e-13 * sigma;
    let extrap = |a: f64, b: f64| b + (b - a) / 3.0;
    match hist {
        [.., (_, a), (_, b), (_, c)] => (extrap(*b, *c) - extrap(*a, *b)).abs().max(floor),
        [.., (_, a), (_, b)] => ((a - b) / 3.0).abs().max(floor),
        _ => floor,
    }
}

/// Minimize in one primitive class and attach Floquet data.
pub fn compute_entry(spec: &MetricSpec, z: LatticeVector, opts: &TableOptions) -> TableEntry {
    let run = || -> Result<TableEntry> {
        let m = find_periodic_minimizers(spec, z, opts.restarts, opts.seed, &opts.minimize)?;
        let best = m.best();
        let floquet = if opts.floquet {
            let lp = best.loop_ref();
            ClosedGeodesic::from_points(spec, z, &lp.points, best.sigma()).and_then(|g| monodromy_of_closed(spec, &g)).ok()
        } else {
            None
        };
        Ok(TableEntry {
            z,
            sigma: m.sigma,
            err: entry_error(&best.result.history, m.sigma),
            count: m.count(),
            foliated: m.foliated,
            converged: m.all_converged,
            n: best.result.n,
            grad_norm: best.result.grad_norm,
            floquet,
            error: None,
            minimizers: Some(m),
        })
    };
    run().unwrap_or_else(|e| TableEntry {
        z,
        sigma: f64::NAN,
        err: f64::INFINITY,
        count: 0,
        foliated: false,
        converged: false,
        n: 0,
        grad_norm: f64::NAN,
        floquet: None,
        error: Some(e.to_string()),
        minimizers: None,
    })
}

/// Tabulate σ over all primitive classes with `|z| ≤ q`, both orientations.
pub fn build_table(spec: &MetricSpec, q: f64, opts: &TableOptions) -> Result<StableNormTable> {
    if !(q >= 3.0) {
        return domain(format!("table cutoff must be at least 3, got {q}"));
    }
    spec.validate()?;
    let classes = primitive_vectors(q);
    let entries: Vec<TableEntry> = classes.par_iter().map(|&z| compute_entry(spec, z, opts)).collect();
    let failures = entries.iter().filter(|e| !e.ok()).count();
    let unconverged = entries.iter().filter(|e| e.ok() && !e.converged).count();
    Ok(StableNormTable {
        schema: crate::SCHEMA.into(),
        metric_hash: spec.hash_hex(),
        metric: spec.clone(),
        q,
        seed: opts.seed,
        restarts: opts.restarts,
        diagnostics: BuildDiagnostics { entries: entries.len(), failures, unconverged },
        entries,
    })
}

/// Certified interval for σ at a direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sandwich {
    pub xi: Vec2,
    pub lower: f64,
    pub upper: f64,
    pub certifying: Vec<LatticeVector>,
}

impl Sandwich {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Distance along the unit ray `d` to the line through `a` and `b`, if the ray
/// meets it in front of the origin.
fn ray_line(d: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let den = cross(d, e);
    if den.abs() < 1e-300 {
        return None;
    }
    let r = cross(a, e) / den;
    (r > 0.0).then_some(r)
}

impl StableNormTable {
    pub fn ok_entries(&self) -> impl Iterator<Item = &TableEntry> {
        self.entries.iter().filter(|e| e.ok())
    }

    pub fn get(&self, z: LatticeVector) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.z == z && e.ok())
    }

    /// σ of a lattice vector through its primitive part.
    pub fn sigma_lattice(&self, z: LatticeVector) -> Option<Estimate> {
        let (p, k) = z.primitive_part();
        self.get(p).map(|e| Estimate { value: k as f64 * e.sigma, err: k as f64 * e.err })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Unit-sphere points `z/σ(z)` ordered by angle.
    pub fn unit_points(&self) -> Vec<(LatticeVector, Vec2, f64)> {
        let mut v: Vec<_> = self.ok_entries().map(|e| (e.z, e.z.to_vec2() / e.sigma, e.err / e.sigma)).collect();
        v.sort_by(|a, b| a.0.angle().total_cmp(&b.0.angle()));
        v
    }

    /// Two-sided bound for σ(ξ) from the tabulated classes: chords of the unit
    /// sphere give the upper bound, extensions of neighbouring chords the lower.
    pub fn sigma_at(&self, xi: Vec2) -> Result<Sandwich> {
        let r = xi.norm();
        if r == 0.0 || !r.is_finite() {
            return domain("sigma of the zero vector");
        }
        let d = xi / r;
        let pts = self.unit_points();
        let n = pts.len();
        if n < 3 {
            return Err(Error::Precondition("table has fewer than three usable entries".into()));
        }
        // exact hits
        for (z, p, rel) in &pts {
            let zd = z.to_vec2() / z.norm();
            if cross(zd, d).abs() <= 1e-15 && zd.dot(&d) > 0.0 {
                let s = r / p.norm();
                return Ok(Sandwich { xi, lower: s * (1.0 - rel), upper: s * (1.0 + rel), certifying: vec![*z] });
            }
        }
        let max_rel = pts.iter().map(|p| p.2).fold(0.0, f64::max);
        // upper bound: best chord over all pairs whose cone contains ξ
        let mut upper = f64::INFINITY;
        let mut cert = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (pts[i].1, pts[j].1);
                let det = cross(a, b);
                if det <= 0.0 {
                    continue;
                }
                // d = α a + β b
                let alpha = cross(d, b) / det;
                let beta = cross(a, d) / det;
                if alpha >= 0.0 && beta >= 0.0 {
                    let u = alpha + beta;
                    if u < upper {
                        upper = u;
                        cert = vec![pts[i].0, pts[j].0];
                    }
                }
            }
        }
        if !upper.is_finite() {
            return Err(Error::Precondition("no tabulated pair brackets the direction".into()));
        }
        // lower bound: the sphere arc crossed by the ray lies inside the lines
        // through the two neighbouring chords
        let idx = (0..n)
            .find(|&i| {
                let (a, b) = (pts[i].1, pts[(i + 1) % n].1);
                cross(a, d) >= 0.0 && cross(d, b) >= 0.0 && cross(a, b) > 0.0
            })
            .ok_or_else(|| Error::Precondition("direction not bracketed by adjacent classes".into()))?;
        let p = |k: isize| pts[((idx as isize + k).rem_euclid(n as isize)) as usize].1;
        let r1 = ray_line(d, p(-1), p(0)).unwrap_or(f64::INFINITY);
        let r2 = ray_line(d, p(1), p(2)).unwrap_or(f64::INFINITY);
        let rmax = r1.min(r2);
        let lower = if rmax.is_finite() { 1.0 / rmax } else { 0.0 };
        let infl = 1.0 + max_rel;
        let mut certifying = cert;
        for k in [-1isize, 0, 1, 2] {
            let z = pts[((idx as isize + k).rem_euclid(n as isize)) as usize].0;
            if !certifying.contains(&z) {
                certifying.push(z);
            }
        }
        Ok(Sandwich { xi, lower: r * lower.min(upper) / infl, upper: r * upper * infl, certifying })
    }

    /// Polyline through the unit-sphere points, as CSV `x, y, z1, z2, sigma`.
    pub fn unit_circle_csv(&self) -> String {
        let rows: Vec<[f64; 5]> =
            self.unit_points().iter().map(|(z, p, _)| [p[0], p[1], z.a() as f64, z.b() as f64, z.norm() / p.norm()]).collect();
        csv_string(&["x", "y", "z1", "z2", "sigma"], &rows)
    }

    /// SVG of the unit sphere with optional overlays.
    pub fn unit_circle_svg(&self, overlays: &[SvgSeries]) -> String {
        let pts: Vec<Vec2> = self.unit_points().iter().map(|p| p.1).collect();
        let mut series = vec![
            SvgSeries { label: "variational polyline".into(), color: "#1f77b4".into(), style: SvgStyle::ClosedLine, points: pts.clone() },
            SvgSeries { label: "z / sigma(z)".into(), color: "#d62728".into(), style: SvgStyle::Markers, points: pts },
        ];
        series.extend(overlays.iter().cloned());
        svg_plot("unit sphere of the stable norm", &series)
    }
}

/// A value with an absolute error bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, err: 0.0 }
    }
}

/// Convexity defect sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub value: f64,
    pub err: f64,
    /// Error bar exceeds the value, or the value is below double range.
    pub inconclusive: bool,
}

impl Defect {
    fn from_parts(value: f64, err: f64) -> Self {
        Defect { value, err, inconclusive: !(value.abs() > err) }
    }

    fn underflow() -> Self {
        Defect { value: 0.0, err: f64::MIN_POSITIVE, inconclusive: true }
    }
}

/// Something that can evaluate σ and its one-sided derivative.
pub trait NormSource: Sync {
    fn name(&self) -> &'static str;

    fn sigma(&self, xi: Vec2) -> Result<Estimate>;

    /// `D⁺σ(ξ)[v] = lim_{h→0⁺} (σ(ξ + hv) − σ(ξ))/h`.
    fn forward_derivative(&self, xi: Vec2, v: Vec2) -> Result<Estimate>;

    /// `σ(ξ + v) − σ(ξ) − D⁺σ(ξ)[v]`.
    fn defect_sigma(&self, xi: Vec2, v: Vec2) -> Result<Defect> {
        let a = self.sigma(xi + v)?;
        let b = self.sigma(xi)?;
        let d = self.forward_derivative(xi, v)?;
        let round = 4.0 * f64::EPSILON * (a.value.abs() + b.value.abs() + d.value.abs());
        Ok(Defect::from_parts(a.value - b.value - d.value, a.err + b.err + d.err + round))
    }
}

/// x-independent metrics: σ is the norm itself.
pub struct FlatSource {
    spec: MetricSpec,
}

impl FlatSource {
    pub fn new(spec: &MetricSpec) -> Result<Self> {
        if !spec.is_flat() {
            return Err(Error::Precondition("flat source needs an x-independent metric".into()));
        }
        Ok(FlatSource { spec: spec.clone() })
    }
}

impl NormSource for FlatSource {
    fn name(&self) -> &'static str {
        "flat"
    }

    fn sigma(&self, xi: Vec2) -> Result<Estimate> {
        if xi.norm() == 0.0 {
            return domain("sigma of the zero vector");
        }
        Ok(Estimate::exact(self.spec.f_unchecked(&Vec2::zeros(), &xi)))
    }

    fn forward_derivative(&self, xi: Vec2, v: Vec2) -> Result<Estimate> {
        let (_, fv) = self.spec.eval_df(&crate::metrics::TangentSample::new(Vec2::zeros(), xi))?;
        Ok(Estimate::exact(fv.dot(&v)))
    }
}

/// Rotational metrics: σ by quadrature, exact gradient, and the corner defect at
/// the horizontal direction without cancellation.
pub struct OracleSource {
    oracle: RotationalOracle,
    corner_slope: f64,
}

impl OracleSource {
    pub fn new(spec: &MetricSpec) -> Result<Self> {
        match spec {
            MetricSpec::Rotational { factor } => {
                let oracle = RotationalOracle::new(factor)?;
                let corner_slope = oracle.corner_slope()?;
                Ok(OracleSource { oracle, corner_slope })
            }
            _ => Err(Error::Precondition("oracle source needs a rotational metric".into())),
        }
    }

    pub fn oracle(&self) -> &RotationalOracle {
        &self.oracle
    }

    fn rel(&self) -> f64 {
        1e-12
    }
}

impl NormSource for OracleSource {
    fn name(&self) -> &'static str {
        "rotational-oracle"
    }

    fn sigma(&self, xi: Vec2) -> Result<Estimate> {
        let s = self.oracle.sigma(xi)?;
        Ok(Estimate { value: s, err: self.rel() * s })
    }

    fn forward_derivative(&self, xi: Vec2, v: Vec2) -> Result<Estimate> {
        if xi.norm() == 0.0 {
            return domain("derivative at the origin");
        }
        let rm = self.oracle.min_f().sqrt();
        if xi[1] == 0.0 {
            let d = xi[0].signum() * rm * v[0] + self.corner_slope * v[1].abs();
            return Ok(Estimate { value: d, err: self.rel() * v.norm() });
        }
        let g = self.oracle.gradient(xi)?;
        Ok(Estimate { value: g.dot(&v), err: self.rel() * g.norm() * v.norm() })
    }

    fn defect_sigma(&self, xi: Vec2, v: Vec2) -> Result<Defect> {
        if xi[1] == 0.0 && xi[0] != 0.0 {
            // radial reduction: with ξ + v = (a, b), a on the side of ξ,
            // Δ = |a| · Δσ(1, b/a)
            let w = xi + v;
            if w[0] * xi[0] > 0.0 {
                let a = w[0].abs();
                return Ok(match self.oracle.corner_defect(w[1] / a)? {
                    Some(c) => Defect::from_parts(a * c, 1e-9 * a * c),
                    None => Defect::underflow(),
                });
            }
        }
        let a = self.sigma(xi + v)?;
        let b = self.sigma(xi)?;
        let d = self.forward_derivative(xi, v)?;
        let round = 4.0 * f64::EPSILON * (a.value.abs() + b.value.abs() + d.value.abs());
        Ok(Defect::from_parts(a.value - b.value - d.value, round + 1e-13 * (a.value + b.value)))
    }
}

/// Forward derivative at a lattice class from `d_n = σ(nz + w) − nσ(z)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForwardDerivative {
    pub z: LatticeVector,
    pub w: LatticeVector,
    pub value: f64,
    /// Last step of the trace plus the σ error bars.
    pub err: f64,
    /// `(n, d_n)` in the order of `n_list`.
    pub trace: Vec<(i64, f64)>,
    /// Error bar of each `d_n` in the trace.
    pub trace_err: Vec<f64>,
    /// `d_{k+1} ≤ d_k` along the trace, up to the error bars.
    pub monotone: bool,
    pub reliable: bool,
}

/// σ of a lattice class by multi-start minimization of its primitive part,
/// with an error bar and the convergence flag.
pub fn sigma_lattice(spec: &MetricSpec, z: LatticeVector, opts: &TableOptions) -> Result<(Estimate, bool)> {
    let (p, k) = z.primitive_part();
    let m = find_periodic_minimizers(spec, p, opts.restarts, opts.seed, &opts.minimize)?;
    let err = entry_error(&m.best().result.history, m.sigma);
    Ok((Estimate { value: k as f64 * m.sigma, err: k as f64 * err }, m.all_converged))
}

pub fn forward_derivative_at_lattice(
    spec: &MetricSpec,
    z: LatticeVector,
    w: LatticeVector,
    n_list: &[i64],
    opts: &TableOptions,
) -> Result<ForwardDerivative> {
    if !z.is_primitive() {
        return Err(Error::Precondition(format!("{z} is not primitive")));
    }
    if n_list.is_empty() || n_list.windows(2).any(|p| p[1] <= p[0]) || n_list[0] < 1 {
        return domain("n_list must be positive and increasing");
    }
    let (sz, mut reliable) = sigma_lattice(spec, z, opts)?;
    let trace: Vec<Result<(i64, f64, f64, bool)>> = n_list
        .par_iter()
        .map(|&n| {
            let c = z.scaled(n)?.plus(&w)?;
            let (s, ok) = sigma_lattice(spec, c, opts)?;
            Ok((n, s.value - n as f64 * sz.value, s.err + n as f64 * sz.err, ok))
        })
        .collect();
    let mut out = Vec::new();
    let mut bars = Vec::new();
    for t in trace {
        let (n, d, e, ok) = t?;
        reliable &= ok;
        out.push((n, d));
        bars.push(e);
    }
    let monotone = (1..out.len()).all(|i| out[i].1 <= out[i - 1].1 + bars[i] + bars[i - 1]);
    // geometric tail bound from the last two steps of the trace
    let k = out.len();
    let tail = match out.as_slice() {
        [.., (_, a), (_, b), (_, c)] => {
            let (prev, step) = ((b - a).abs(), (c - b).abs());
            let r = step / prev.max(f64::MIN_POSITIVE);
            if r < 0.9 {
                step * r / (1.0 - r)
            } else {
                10.0 * step
            }
        }
        [.., (_, a), (_, b)] => (b - a).abs(),
        _ => out[0].1.abs(),
    };
    let err = tail + bars[k - 1];
    Ok(ForwardDerivative { z, w, value: out[k - 1].1, err, trace: out, trace_err: bars, monotone, reliable })
}

/// Variational σ: lattice minimization on small-denominator rays, sandwich
/// bounds from a table elsewhere.
pub struct VariationalSource<'a> {
    spec: MetricSpec,
    table: Option<&'a StableNormTable>,
    opts: TableOptions,
    lattice_cache: Mutex<HashMap<LatticeVector, Estimate>>,
    derivative_cache: Mutex<HashMap<(LatticeVector, LatticeVector), Estimate>>,
}

impl<'a> VariationalSource<'a> {
    pub fn new(spec: &MetricSpec, table: Option<&'a StableNormTable>, opts: TableOptions) -> Self {
        VariationalSource {
            spec: spec.clone(),
            table,
            opts,
            lattice_cache: Mutex::new(HashMap::new()),
            derivative_cache: Mutex::new(HashMap::new()),
        }
    }

    fn lattice(&self, z: LatticeVector) -> Result<Estimate> {
        if let Some(s) = self.lattice_cache.lock().expect("cache lock").get(&z) {
            return Ok(*s);
        }
        let s = match self.table.and_then(|t| t.sigma_lattice(z)) {
            Some(s) => s,
            None => sigma_lattice(&self.spec, z, &self.opts)?.0,
        };
        self.lattice_cache.lock().expect("cache lock").insert(z, s);
        Ok(s)
    }

    fn lattice_derivative(&self, z: LatticeVector, w: LatticeVector) -> Result<Estimate> {
        if let Some(d) = self.derivative_cache.lock().expect("cache lock").get(&(z, w)) {
            return Ok(*d);
        }
        let fd = forward_derivative_at_lattice(&self.spec, z, w, &self.opts.n_list, &self.opts)?;
        let d = Estimate { value: fd.value, err: fd.err };
        self.derivative_cache.lock().expect("cache lock").insert((z, w), d);
        Ok(d)
    }
}

/// Richardson-extrapolated symmetric difference of σ along `v`, with the error
/// bar inflated by the σ bars.
pub fn symmetric_derivative<S: NormSource + ?Sized>(src: &S, xi: Vec2, v: Vec2) -> Result<Estimate> {
    let vn = v.norm();
    if vn == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let u = v / vn;
    let h0 = 0.02 * xi.norm();
    let mut d = Vec::new();
    let mut bar: f64 = 0.0;
    for k in 0..3 {
        let h = h0 / 2f64.powi(k);
        let a = src.sigma(xi + u * h)?;
        let b = src.sigma(xi - u * h)?;
        d.push((a.value - b.value) / (2.0 * h));
        bar = bar.max((a.err + b.err) / (2.0 * h));
    }
    let r1 = (4.0 * d[1] - d[0]) / 3.0;
    let r2 = (4.0 * d[2] - d[1]) / 3.0;
    let r = (16.0 * r2 - r1) / 15.0;
    Ok(Estimate { value: r * vn, err: ((r - r2).abs() + bar) * vn })
}

impl NormSource for VariationalSource<'_> {
    fn name(&self) -> &'static str {
        "variational"
    }

    fn sigma(&self, xi: Vec2) -> Result<Estimate> {
        let r = xi.norm();
        if r == 0.0 {
            return domain("sigma of the zero vector");
        }
        if let Some(z) = rational_direction(xi, RATIONAL_Q_MAX, RATIONAL_TOL) {
            let s = r / z.norm();
            let e = self.lattice(z)?;
            return Ok(Estimate { value: e.value * s, err: e.err * s });
        }
        let table = self.table.ok_or_else(|| Error::Precondition("irrational direction needs a table".into()))?;
        let sw = table.sigma_at(xi)?;
        Ok(Estimate { value: sw.mid(), err: 0.5 * sw.width() })
    }

    fn forward_derivative(&self, xi: Vec2, v: Vec2) -> Result<Estimate> {
        if let Some(z) = rational_direction(xi, RATIONAL_Q_MAX, RATIONAL_TOL) {
            let zv = z.to_vec2();
            let zp = z.perp();
            let n2 = z.norm_sq() as f64;
            let along = v.dot(&zv) / n2;
            let across = v.dot(&zp.to_vec2()) / n2;
            let sz = self.lattice(z)?;
            let mut d = Estimate { value: along * sz.value, err: along.abs() * sz.err };
            if across != 0.0 {
                let w = if across > 0.0 { zp } else { zp.neg() };
                let dw = self.lattice_derivative(z, w)?;
                d.value += across.abs() * dw.value;
                d.err += across.abs() * dw.err;
            }
            return Ok(d);
        }
        symmetric_derivative(self, xi, v)
    }
}

/// Pick the most accurate σ evaluator available for a metric.
pub fn auto_source<'a>(spec: &MetricSpec, table: Option<&'a StableNormTable>, opts: &TableOptions) -> Result<Box<dyn NormSource + 'a>> {
    Ok(match spec {
        MetricSpec::FlatNorm { .. } => Box::new(FlatSource::new(spec)?),
        MetricSpec::Rotational { .. } => Box::new(OracleSource::new(spec)?),
        MetricSpec::Conformal { factor } if factor.is_constant() => {
            let c = factor.constant;
            Box::new(FlatSource::new(&MetricSpec::flat([[c, 0.0], [0.0, c]], [0.0, 0.0]))?)
        }
        MetricSpec::Conformal { .. } => Box::new(VariationalSource::new(spec, table, opts.clone())),
    })
}

pub fn defect_sigma(src: &dyn NormSource, xi: Vec2, v: Vec2) -> Result<Defect> {
    if xi.norm() == 0.0 {
        return domain("base direction must be nonzero");
    }
    src.defect_sigma(xi, v)
}

/// `β(ξ + v) − β(ξ) − Dβ(ξ)[v]` with `β = σ²/2`.
pub fn defect_beta(src: &dyn NormSource, xi: Vec2, v: Vec2) -> Result<Defect> {
    if xi.norm() == 0.0 {
        return domain("base direction must be nonzero");
    }
    let a = src.sigma(xi + v)?;
    let b = src.sigma(xi)?;
    let d = src.forward_derivative(xi, v)?;
    let value = 0.5 * (a.value * a.value - b.value * b.value) - b.value * d.value;
    let err = a.value * a.err
        + b.value * b.err
        + b.value * d.err
        + b.err * d.value.abs()
        + 4.0 * f64::EPSILON * (a.value * a.value + b.value * b.value);
    Ok(Defect::from_parts(value, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(a: i64, b: i64) -> LatticeVector {
        LatticeVector::new(a, b).unwrap()
    }

    fn quick_opts() -> TableOptions {
        TableOptions { restarts: 2, floquet: false, ..TableOptions::default() }
    }

    #[test]
    fn euclidean_table_and_sandwich() {
        let e = MetricSpec::euclidean();
        let t = build_table(&e, 10.0, &quick_opts()).unwrap();
        assert!(t.ok_entries().all(|x| (x.sigma - x.z.norm()).abs() < 1e-5));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let xi = Vec2::new(1.0, g);
        let s = t.sigma_at(xi).unwrap();
        assert!(s.contains(xi.norm()), "{s:?}");
        assert!(s.width() < 1e-2 * xi.norm());
        let hit = t.sigma_at(Vec2::new(3.0, 4.0)).unwrap();
        assert!((hit.upper - 5.0).abs() < 1e-9 && (hit.lower - 5.0).abs() < 1e-9);
        let s2 = t.sigma_at(xi * 2.0).unwrap();
        assert_eq!(s2.lower, 2.0 * s.lower);
        assert_eq!(s2.upper, 2.0 * s.upper);
        assert!(t.sigma_at(Vec2::zeros()).is_err());
    }

    #[test]
    fn drift_table() {
        let d = MetricSpec::flat([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.0]);
        let t = build_table(&d, 3.0, &quick_opts()).unwrap();
        assert!((t.get(lv(1, 0)).unwrap().sigma - 1.5).abs() < 1e-9);
        assert!((t.get(lv(-1, 0)).unwrap().sigma - 0.5).abs() < 1e-9);
    }

    #[test]
    fn flat_defects() {
        let e = MetricSpec::euclidean();
        let src = FlatSource::new(&e).unwrap();
        let d = defect_sigma(&src, Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.1)).unwrap();
        assert!((d.value - (1.01f64.sqrt() - 1.0)).abs() < 1e-15);
        let d = defect_sigma(&src, Vec2::new(0.3, 0.7), Vec2::new(0.3, 0.7) * 0.4).unwrap();
        assert!(d.value.abs() < 1e-15);
        let xi = Vec2::new(1.0, 0.618).normalize();
        let v = Vec2::new(-xi[1], xi[0]) * 0.1;
        let b = defect_beta(&src, xi, v).unwrap();
        assert!((b.value - 0.005).abs() < 1e-15);
        let b = defect_beta(&src, xi * 2.0, xi * 0.6).unwrap();
        assert!((b.value - 2.0 * 0.09).abs() < 1e-14);
    }

    #[test]
    fn oracle_source_corner() {
        let r = MetricSpec::standard_rotational();
        let src = OracleSource::new(&r).unwrap();
        let d = defect_sigma(&src, Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.1)).unwrap();
        assert!(d.value < 1e-4 && d.value > 0.0);
        let d = defect_sigma(&src, Vec2::new(1.0, 0.0), Vec2::new(0.5, 0.0)).unwrap();
        assert_eq!(d.value, 0.0);
        // radial reduction agrees with the direct difference where both resolve
        let v = Vec2::new(0.1, 0.6);
        let red = src.defect_sigma(Vec2::new(1.0, 0.0), v).unwrap().value;
        let direct = src.sigma(Vec2::new(1.1, 0.6)).unwrap().value - 1.0 - src.forward_derivative(Vec2::new(1.0, 0.0), v).unwrap().value;
        assert!((red - direct).abs() < 1e-12, "{red} {direct}");
    }

    #[test]
    fn symmetric_derivative_matches_gradient() {
        let src = OracleSource::new(&MetricSpec::standard_rotational()).unwrap();
        let xi = Vec2::new(0.618, 1.0);
        let v = Vec2::new(1.0, -0.3);
        let s = symmetric_derivative(&src, xi, v).unwrap();
        let g = src.forward_derivative(xi, v).unwrap();
        assert!((s.value - g.value).abs() < 1e-8 && (s.value - g.value).abs() <= s.err + 1e-9);
    }

    #[test]
    fn euclidean_forward_derivative() {
        let e = MetricSpec::euclidean();
        let fd = forward_derivative_at_lattice(&e, lv(1, 0), lv(0, 1), &[2, 4, 8, 16], &quick_opts()).unwrap();
        for (n, d) in &fd.trace {
            let want = ((n * n + 1) as f64).sqrt() - *n as f64;
            assert!((d - want).abs() < 1e-5);
        }
        assert!(fd.monotone);
        assert!((fd.value - (257f64.sqrt() - 16.0)).abs() < 1e-5);
    }
}
