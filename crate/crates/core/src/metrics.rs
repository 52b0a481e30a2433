//! Metric families on the 2-torus with exact derivatives.
//!
//! Three variants are supported:
//!
//! * `FlatNorm`: a translation-invariant Randers norm `F(v) = sqrt(vᵀGv) + ⟨d, v⟩`;
//! * `Conformal`: `F(x, v) = sqrt(f(x)) |v|` with `f` a trigonometric polynomial on T²;
//! * `Rotational`: `F(x, v) = sqrt(f(x₂)) |v|` with `f` a trigonometric polynomial on T¹.
//!
//! Conformal factors are finite Fourier series, so every derivative used downstream
//! (Euler–Lagrange vector field, its Jacobian, the Hessian of the discrete energy)
//! is evaluated in closed form.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

const TWO_PI: f64 = 2.0 * PI;

/// Grid resolution per axis used when certifying positivity of a conformal factor.
pub const POSITIVITY_GRID: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    /// Frequency vector. One-dimensional series only use `k[0]`.
    pub k: [i32; 2],
    pub cos: f64,
    pub sin: f64,
}

/// Finite real Fourier series `c + Σ aₖ cos(2π k·x) + bₖ sin(2π k·x)`, 1-periodic in
/// every coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub dim: usize,
    pub constant: f64,
    pub terms: Vec<FourierTerm>,
}

/// Value, gradient and Hessian of a scalar function on ℝ² (unused components are
/// zero for one-dimensional series).
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec2,
    pub hess: Mat2,
}

#[inline]
fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// `(sin 2πr, cos 2πr)` with exact reduction to the nearest quarter turn, so
/// that quarter-turn multiples give exact zeros.
pub fn sincos_turns(r: f64) -> (f64, f64) {
    let r = frac(r);
    let q = (4.0 * r).round();
    let f = r - 0.25 * q;
    let (s, c) = (TWO_PI * f).sin_cos();
    match q as i64 % 4 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

impl FourierSeries {
    /// One-dimensional series from `(k, cos, sin)` triples.
    pub fn one_dim(constant: f64, terms: &[(i32, f64, f64)]) -> Self {
        FourierSeries { dim: 1, constant, terms: terms.iter().map(|&(k, c, s)| FourierTerm { k: [k, 0], cos: c, sin: s }).collect() }
    }

    /// Two-dimensional series from `([k1, k2], cos, sin)` triples.
    pub fn two_dim(constant: f64, terms: &[([i32; 2], f64, f64)]) -> Self {
        FourierSeries { dim: 2, constant, terms: terms.iter().map(|&(k, c, s)| FourierTerm { k, cos: c, sin: s }).collect() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        FourierSeries { dim, constant: c, terms: Vec::new() }
    }

    /// Fold zero-frequency terms into the constant and drop vanishing terms.
    pub fn normalized(mut self) -> Self {
        let mut constant = self.constant;
        self.terms.retain(|t| {
            if t.k == [0, 0] {
                constant += t.cos;
                false
            } else {
                t.cos != 0.0 || t.sin != 0.0
            }
        });
        self.constant = constant;
        self
    }

    /// `(sin, cos)` of the phase `2π k·x`, with coordinates reduced modulo 1.
    fn phase(&self, t: &FourierTerm, x: &[f64]) -> (f64, f64) {
        let mut p = 0.0;
        for (i, xi) in x.iter().enumerate().take(self.dim) {
            p += t.k[i] as f64 * frac(*xi);
        }
        sincos_turns(p)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let (s, c) = self.phase(t, x);
            v += t.cos * c + t.sin * s;
        }
        v
    }

    /// Value with first and second derivatives.
    pub fn jet(&self, x: &[f64]) -> Jet {
        let mut value = self.constant;
        let mut grad = Vec2::zeros();
        let mut hess = Mat2::zeros();
        for t in &self.terms {
            let (s, c) = self.phase(t, x);
            value += t.cos * c + t.sin * s;
            let d1 = TWO_PI * (-t.cos * s + t.sin * c);
            let d2 = -TWO_PI * TWO_PI * (t.cos * c + t.sin * s);
            let k = Vec2::new(t.k[0] as f64, if self.dim > 1 { t.k[1] as f64 } else { 0.0 });
            grad += k * d1;
            hess += k * k.transpose() * d2;
        }
        Jet { value, grad, hess }
    }

    /// `f(s + u) − f(s)` for a one-dimensional series, evaluated through product
    /// formulas so that small differences keep full relative accuracy.
    pub fn difference_1d(&self, s: f64, u: f64) -> f64 {
        let mut d = 0.0;
        for t in &self.terms {
            let k = t.k[0] as f64;
            let (sa, ca) = sincos_turns(k * frac(s));
            let (half, ch) = (PI * k * u).sin_cos();
            // sin and cos of 2πks + πku, expanded so exact zeros of the first
            // angle survive
            let sm = sa * ch + ca * half;
            let cm = ca * ch - sa * half;
            d += -2.0 * t.cos * sm * half + 2.0 * t.sin * cm * half;
        }
        d
    }

    /// Sum of absolute amplitudes `Σ sqrt(aₖ² + bₖ²)`.
    pub fn amplitude_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.cos.hypot(t.sin)).sum()
    }

    /// Upper bound on the Euclidean norm of the gradient.
    pub fn lipschitz_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let kn = (t.k[0] as f64).hypot(if self.dim > 1 { t.k[1] as f64 } else { 0.0 });
                TWO_PI * kn * t.cos.hypot(t.sin)
            })
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }
}

/// Location and value of the minimum of a one-dimensional series, found by dense
/// sampling followed by bisection on the derivative.
pub fn minimize_1d(f: &FourierSeries) -> (f64, f64) {
    let n = 4 * POSITIVITY_GRID;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..n {
        let s = i as f64 / n as f64;
        let v = f.eval(&[s]);
        if v < best.1 {
            best = (s, v);
        }
    }
    if f.is_constant() {
        return (0.0, f.constant);
    }
    let h = 1.0 / n as f64;
    let deriv = |s: f64| f.jet(&[s]).grad[0];
    let (mut lo, mut hi) = (best.0 - h, best.0 + h);
    if deriv(lo) < 0.0 && deriv(hi) > 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let v = f.eval(&[s]);
        if v <= best.1 {
            best = (s, v);
        }
    }
    (frac(best.0), best.1)
}

/// Minimum of a two-dimensional series: grid search then damped Newton polishing.
fn minimize_2d(f: &FourierSeries) -> (Vec2, f64) {
    let n = POSITIVITY_GRID;
    let mut best = (Vec2::zeros(), f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            let x = Vec2::new(i as f64 / n as f64, j as f64 / n as f64);
            let v = f.eval(x.as_slice());
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    let mut x = best.0;
    for _ in 0..50 {
        let jet = f.jet(x.as_slice());
        let step = match jet.hess.cholesky() {
            Some(ch) => ch.solve(&jet.grad),
            None => break,
        };
        let cand = x - step;
        let v = f.eval(cand.as_slice());
        if v > best.1 || step.norm() > 2.0 / n as f64 {
            break;
        }
        best = (cand, v);
        x = cand;
        if step.norm() < 1e-15 {
            break;
        }
    }
    best
}

/// A parametric Finsler metric on the 2-torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MetricSpec {
    /// `F(v) = sqrt(vᵀ G v) + ⟨d, v⟩`, independent of the base point.
    FlatNorm { matrix: [[f64; 2]; 2], drift: [f64; 2] },
    /// `F(x, v) = sqrt(f(x)) |v|` with `f` a 2-D series.
    Conformal { factor: FourierSeries },
    /// `F(x, v) = sqrt(f(x₂)) |v|` with `f` a 1-D series.
    Rotational { factor: FourierSeries },
}

/// A point of the tangent bundle in universal-cover coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentSample {
    pub x: Vec2,
    pub v: Vec2,
}

impl TangentSample {
    pub fn new(x: Vec2, v: Vec2) -> Self {
        TangentSample { x, v }
    }
}

/// `L = F²/2` with first and second derivatives.
#[derive(Clone, Copy, Debug)]
pub struct LagrangianJet {
    pub value: f64,
    pub dx: Vec2,
    pub dv: Vec2,
    pub dvv: Mat2,
    pub dxx: Mat2,
    /// Mixed derivative, `dxv[(i, j)] = ∂²L / ∂xᵢ ∂vⱼ`.
    pub dxv: Mat2,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    /// Minimum of the conformal factor (grid minimum after local polishing).
    pub min_factor: Option<f64>,
    pub max_factor: Option<f64>,
    /// Certified lower bound on the conformal factor.
    pub certified_lower_bound: Option<f64>,
    /// `1 − |d|_{G⁻¹}` for flat Randers norms.
    pub randers_margin: Option<f64>,
    pub message: String,
}

impl MetricSpec {
    pub fn euclidean() -> Self {
        MetricSpec::FlatNorm { matrix: [[1.0, 0.0], [0.0, 1.0]], drift: [0.0, 0.0] }
    }

    pub fn flat(matrix: [[f64; 2]; 2], drift: [f64; 2]) -> Self {
        MetricSpec::FlatNorm { matrix, drift }
    }

    pub fn rotational(factor: FourierSeries) -> Self {
        MetricSpec::Rotational { factor: FourierSeries { dim: 1, ..factor }.normalized() }
    }

    pub fn conformal(factor: FourierSeries) -> Self {
        MetricSpec::Conformal { factor: FourierSeries { dim: 2, ..factor }.normalized() }
    }

    /// The rotational metric with `f(x₂) = cos(2π x₂) + 2`.
    pub fn standard_rotational() -> Self {
        Self::rotational(FourierSeries::one_dim(2.0, &[(1, 1.0, 0.0)]))
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, MetricSpec::FlatNorm { .. })
    }

    /// Reversible metrics satisfy `F(x, −v) = F(x, v)`.
    pub fn is_reversible(&self) -> bool {
        match self {
            MetricSpec::FlatNorm { drift, .. } => drift[0] == 0.0 && drift[1] == 0.0,
            _ => true,
        }
    }

    fn gram(matrix: &[[f64; 2]; 2]) -> Mat2 {
        Mat2::new(matrix[0][0], matrix[0][1], matrix[1][0], matrix[1][1])
    }

    /// Conformal factor jet at `x` (rotational factors depend on `x₂` only).
    fn factor_jet(&self, x: &Vec2) -> Option<Jet> {
        match self {
            MetricSpec::FlatNorm { .. } => None,
            MetricSpec::Conformal { factor } => Some(factor.jet(x.as_slice())),
            MetricSpec::Rotational { factor } => {
                let j = factor.jet(&[x[1]]);
                Some(Jet { value: j.value, grad: Vec2::new(0.0, j.grad[0]), hess: Mat2::new(0.0, 0.0, 0.0, j.hess[(0, 0)]) })
            }
        }
    }

    /// Length density `F(x, v)`.
    pub fn eval_f(&self, s: &TangentSample) -> Result<f64> {
        if s.v.norm() == 0.0 {
            return domain("zero velocity");
        }
        Ok(self.f_unchecked(&s.x, &s.v))
    }

    pub(crate) fn f_unchecked(&self, x: &Vec2, v: &Vec2) -> f64 {
        match self {
            MetricSpec::FlatNorm { matrix, drift } => {
                let g = Self::gram(matrix);
                (v.dot(&(g * v))).sqrt() + drift[0] * v[0] + drift[1] * v[1]
            }
            _ => {
                let f = self.factor_value(x);
                f.sqrt() * v.norm()
            }
        }
    }

    pub(crate) fn factor_value(&self, x: &Vec2) -> f64 {
        match self {
            MetricSpec::FlatNorm { .. } => 1.0,
            MetricSpec::Conformal { factor } => factor.eval(x.as_slice()),
            MetricSpec::Rotational { factor } => factor.eval(&[x[1]]),
        }
    }

    /// `(∂F/∂x, ∂F/∂v)`.
    pub fn eval_df(&self, s: &TangentSample) -> Result<(Vec2, Vec2)> {
        let vn = s.v.norm();
        if vn == 0.0 {
            return domain("zero velocity");
        }
        match self {
            MetricSpec::FlatNorm { matrix, drift } => {
                let g = Self::gram(matrix);
                let gv = g * s.v;
                let q = s.v.dot(&gv).sqrt();
                Ok((Vec2::zeros(), gv / q + Vec2::new(drift[0], drift[1])))
            }
            _ => {
                let j = self.factor_jet(&s.x).expect("conformal variant");
                let sf = j.value.sqrt();
                Ok((j.grad * (vn / (2.0 * sf)), s.v * (sf / vn)))
            }
        }
    }

    /// `L = F²/2` and its derivatives up to second order.
    pub fn eval_lagrangian(&self, s: &TangentSample) -> Result<LagrangianJet> {
        match self {
            MetricSpec::FlatNorm { matrix, drift } => {
                let d = Vec2::new(drift[0], drift[1]);
                let g = Self::gram(matrix);
                if d == Vec2::zeros() {
                    let gv = g * s.v;
                    return Ok(LagrangianJet {
                        value: 0.5 * s.v.dot(&gv),
                        dx: Vec2::zeros(),
                        dv: gv,
                        dvv: g,
                        dxx: Mat2::zeros(),
                        dxv: Mat2::zeros(),
                    });
                }
                if s.v.norm() == 0.0 {
                    return domain("zero velocity");
                }
                let gv = g * s.v;
                let q = s.v.dot(&gv).sqrt();
                let f = q + d.dot(&s.v);
                let fv = gv / q + d;
                let fvv = (g - gv * gv.transpose() / (q * q)) / q;
                Ok(LagrangianJet {
                    value: 0.5 * f * f,
                    dx: Vec2::zeros(),
                    dv: fv * f,
                    dvv: fv * fv.transpose() + fvv * f,
                    dxx: Mat2::zeros(),
                    dxv: Mat2::zeros(),
                })
            }
            _ => {
                let j = self.factor_jet(&s.x).expect("conformal variant");
                let v2 = s.v.norm_squared();
                Ok(LagrangianJet {
                    value: 0.5 * j.value * v2,
                    dx: j.grad * (0.5 * v2),
                    dv: s.v * j.value,
                    dvv: Mat2::identity() * j.value,
                    dxx: j.hess * (0.5 * v2),
                    dxv: j.grad * s.v.transpose(),
                })
            }
        }
    }

    /// Euler–Lagrange acceleration `v̇ = L_vv⁻¹ (L_x − L_vx v)`.
    pub fn acceleration(&self, x: &Vec2, v: &Vec2) -> Result<Vec2> {
        let lj = self.eval_lagrangian(&TangentSample::new(*x, *v))?;
        // (L_vx v)_i = Σ_j ∂²L/∂vᵢ∂xⱼ vⱼ = (dxvᵀ v)_i
        let rhs = lj.dx - lj.dxv.transpose() * v;
        let ch = lj
            .dvv
            .cholesky()
            .ok_or_else(|| Error::Integration(format!("fiber Hessian not positive definite at x = ({}, {})", x[0], x[1])))?;
        Ok(ch.solve(&rhs))
    }

    /// Acceleration together with its Jacobian `(∂a/∂x, ∂a/∂v)`; the trace of
    /// `∂a/∂v` is the phase-space divergence of the Euler–Lagrange field.
    pub fn acceleration_jacobian(&self, x: &Vec2, v: &Vec2) -> Result<(Vec2, Mat2, Mat2)> {
        match self {
            MetricSpec::FlatNorm { .. } => {
                let a = self.acceleration(x, v)?;
                Ok((a, Mat2::zeros(), Mat2::zeros()))
            }
            _ => {
                let j = self.factor_jet(x).expect("conformal variant");
                let f = j.value;
                if f <= 0.0 {
                    return Err(Error::Integration("non-positive conformal factor".into()));
                }
                let g = j.grad;
                let h = j.hess;
                let v2 = v.norm_squared();
                let gv = g.dot(v);
                let num = g * (0.5 * v2) - v * gv;
                let a = num / f;
                let hv = h * v;
                let mut dax = Mat2::zeros();
                let mut dav = Mat2::zeros();
                for jj in 0..2 {
                    let dn_dx = h.column(jj) * (0.5 * v2) - v * hv[jj];
                    let col = dn_dx / f - num * (g[jj] / (f * f));
                    dax.set_column(jj, &col);
                    let mut dn_dv = g * v[jj] - v * g[jj];
                    dn_dv[jj] -= gv;
                    dav.set_column(jj, &(dn_dv / f));
                }
                Ok((a, dax, dav))
            }
        }
    }

    /// Certified lower bound `α` with `F(x, v) ≥ α |v|` everywhere.
    pub fn lower_bound_constant(&self) -> f64 {
        match self {
            MetricSpec::FlatNorm { matrix, drift } => {
                let g = Self::gram(matrix);
                let lam = g.symmetric_eigenvalues().min().max(0.0).sqrt();
                (lam - drift[0].hypot(drift[1])).max(0.0)
            }
            _ => self.validate().ok().and_then(|r| r.certified_lower_bound).unwrap_or(0.0).max(0.0).sqrt(),
        }
    }

    /// Upper bound `β` with `F(x, v) ≤ β |v|` everywhere.
    pub fn upper_bound_constant(&self) -> f64 {
        match self {
            MetricSpec::FlatNorm { matrix, drift } => {
                let g = Self::gram(matrix);
                g.symmetric_eigenvalues().max().max(0.0).sqrt() + drift[0].hypot(drift[1])
            }
            MetricSpec::Conformal { factor } | MetricSpec::Rotational { factor } => {
                (factor.constant + factor.amplitude_sum()).max(0.0).sqrt()
            }
        }
    }

    /// Check positivity and the Randers condition.
    pub fn validate(&self) -> Result<ValidationReport> {
        match self {
            MetricSpec::FlatNorm { matrix, drift } => {
                let g = Self::gram(matrix);
                if (g[(0, 1)] - g[(1, 0)]).abs() > 1e-12 * g.abs().max() {
                    return Err(Error::InvalidMetric("matrix is not symmetric".into()));
                }
                let ch = g.cholesky().ok_or_else(|| Error::InvalidMetric("matrix is not positive definite".into()))?;
                let d = Vec2::new(drift[0], drift[1]);
                let dual = d.dot(&ch.solve(&d)).sqrt();
                let margin = 1.0 - dual;
                if margin <= 0.0 {
                    return Err(Error::InvalidMetric(format!(
                        "drift violates the Randers condition: |d|_(G^-1) = {dual}, margin {margin}"
                    )));
                }
                Ok(ValidationReport {
                    valid: true,
                    min_factor: None,
                    max_factor: None,
                    certified_lower_bound: None,
                    randers_margin: Some(margin),
                    message: format!("flat Randers norm, margin {margin}"),
                })
            }
            MetricSpec::Conformal { factor } | MetricSpec::Rotational { factor } => {
                let expected_dim = if matches!(self, MetricSpec::Conformal { .. }) { 2 } else { 1 };
                if factor.dim != expected_dim {
                    return Err(Error::InvalidMetric(format!("factor must be a {expected_dim}-dimensional series")));
                }
                if expected_dim == 1 && factor.terms.iter().any(|t| t.k[1] != 0) {
                    return Err(Error::InvalidMetric("rotational factor terms must have k2 = 0".into()));
                }
                let n = POSITIVITY_GRID;
                let h = 1.0 / n as f64;
                let (mut grid_min, mut grid_max) = (f64::INFINITY, f64::NEG_INFINITY);
                if expected_dim == 1 {
                    for i in 0..n {
                        let v = factor.eval(&[i as f64 * h]);
                        grid_min = grid_min.min(v);
                        grid_max = grid_max.max(v);
                    }
                } else {
                    for i in 0..n {
                        for j in 0..n {
                            let v = factor.eval(&[i as f64 * h, j as f64 * h]);
                            grid_min = grid_min.min(v);
                            grid_max = grid_max.max(v);
                        }
                    }
                }
                // Every point lies within h/2 (per axis) of a grid node.
                let reach = 0.5 * h * (expected_dim as f64).sqrt();
                let certified = grid_min - factor.lipschitz_bound() * reach;
                let polished_min = if expected_dim == 1 { minimize_1d(factor).1 } else { minimize_2d(factor).1 };
                let min_f = polished_min.min(grid_min);
                let max_f = grid_max.max(factor.constant + factor.amplitude_sum().min(0.0));
                if certified <= 0.0 {
                    return Err(Error::InvalidMetric(format!(
                        "conformal factor not certified positive: grid minimum {grid_min}, certified bound {certified} <= 0"
                    )));
                }
                Ok(ValidationReport {
                    valid: true,
                    min_factor: Some(min_f),
                    max_factor: Some(max_f),
                    certified_lower_bound: Some(certified.min(min_f)),
                    randers_margin: None,
                    message: format!("conformal factor in [{min_f}, {max_f}]"),
                })
            }
        }
    }

    /// Stable SHA-256 digest of the canonical JSON form.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_string(self).expect("metric serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}

/// Free-function form of [`MetricSpec::eval_f`].
pub fn eval_f(spec: &MetricSpec, s: &TangentSample) -> Result<f64> {
    spec.eval_f(s)
}

pub fn eval_df(spec: &MetricSpec, s: &TangentSample) -> Result<(Vec2, Vec2)> {
    spec.eval_df(s)
}

pub fn eval_lagrangian(spec: &MetricSpec, s: &TangentSample) -> Result<LagrangianJet> {
    spec.eval_lagrangian(s)
}

pub fn validate_spec(spec: &MetricSpec) -> Result<ValidationReport> {
    spec.validate()
}
