//! Euler–Lagrange flow of `L = F²/2`, its linearization, and Floquet analysis of
//! closed geodesics.

use nalgebra::{Complex, Matrix3, Matrix4, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::csv_string;
use crate::metrics::{Mat2, MetricSpec, Vec2};
use crate::rational_approx::LatticeVector;

/// Default fixed step for orbit and variational integration.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Real multipliers and modulus deviations below this are treated as unity.
pub const HYPERBOLIC_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub x: Vec2,
    pub v: Vec2,
    pub t: f64,
}

impl GeodesicState {
    pub fn new(x: Vec2, v: Vec2) -> Self {
        GeodesicState { x, v, t: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<GeodesicState>,
    /// Step actually used (the requested step shrunk to divide the duration).
    pub step: f64,
}

impl Trajectory {
    pub fn last(&self) -> &GeodesicState {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Largest deviation of `F(x(t), v(t))` from its initial value.
    pub fn energy_drift(&self, spec: &MetricSpec) -> f64 {
        let f0 = spec.f_unchecked(&self.states[0].x, &self.states[0].v);
        self.states.iter().map(|s| (spec.f_unchecked(&s.x, &s.v) - f0).abs()).fold(0.0, f64::max)
    }

    /// CSV rows `t, x1, x2, v1, v2, F`.
    pub fn to_csv(&self, spec: &MetricSpec) -> String {
        let rows: Vec<[f64; 6]> = self.states.iter().map(|s| [s.t, s.x[0], s.x[1], s.v[0], s.v[1], spec.f_unchecked(&s.x, &s.v)]).collect();
        csv_string(&["t", "x1", "x2", "v1", "v2", "F"], &rows)
    }
}

type State4 = SVector<f64, 4>;
// x, v, the 4×4 variational matrix (column major) and the log-Liouville scalar
type State21 = SVector<f64, 21>;

fn rk4<const D: usize, F>(f: &mut F, y: &SVector<f64, D>, h: f64) -> Result<SVector<f64, D>>
where
    F: FnMut(&SVector<f64, D>) -> Result<SVector<f64, D>>,
{
    let k1 = f(y)?;
    let k2 = f(&(y + k1 * (0.5 * h)))?;
    let k3 = f(&(y + k2 * (0.5 * h)))?;
    let k4 = f(&(y + k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn steps_for(duration: f64, step: f64) -> Result<(usize, f64)> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Domain(format!("duration must be non-negative, got {duration}")));
    }
    let n = (duration / step).ceil().max(1.0) as usize;
    Ok((n, duration / n as f64))
}

fn orbit_field(spec: &MetricSpec, y: &State4) -> Result<State4> {
    let x = Vec2::new(y[0], y[1]);
    let v = Vec2::new(y[2], y[3]);
    let a = spec.acceleration(&x, &v)?;
    Ok(State4::new(v[0], v[1], a[0], a[1]))
}

fn joint_field(spec: &MetricSpec, y: &State21) -> Result<State21> {
    let x = Vec2::new(y[0], y[1]);
    let v = Vec2::new(y[2], y[3]);
    let (a, dax, dav) = spec.acceleration_jacobian(&x, &v)?;
    let ymat = Matrix4::from_column_slice(&y.as_slice()[4..20]);
    let mut jac = Matrix4::zeros();
    jac.fixed_view_mut::<2, 2>(0, 2).copy_from(&Mat2::identity());
    jac.fixed_view_mut::<2, 2>(2, 0).copy_from(&dax);
    jac.fixed_view_mut::<2, 2>(2, 2).copy_from(&dav);
    let dy = jac * ymat;
    let mut out = State21::zeros();
    out[0] = v[0];
    out[1] = v[1];
    out[2] = a[0];
    out[3] = a[1];
    out.as_mut_slice()[4..20].copy_from_slice(dy.as_slice());
    out[20] = dav.trace();
    Ok(out)
}

/// Fixed-step RK4 integration of the Euler–Lagrange equations.
pub fn integrate_geodesic(spec: &MetricSpec, initial: GeodesicState, duration: f64, step: f64) -> Result<Trajectory> {
    if initial.v.norm() == 0.0 {
        return Err(Error::Domain("zero initial velocity".into()));
    }
    let (n, h) = steps_for(duration, step)?;
    let mut y = State4::new(initial.x[0], initial.x[1], initial.v[0], initial.v[1]);
    let mut states = Vec::with_capacity(n + 1);
    states.push(initial);
    let mut field = |s: &State4| orbit_field(spec, s);
    for i in 1..=n {
        y = rk4(&mut field, &y, h)?;
        states.push(GeodesicState { x: Vec2::new(y[0], y[1]), v: Vec2::new(y[2], y[3]), t: initial.t + i as f64 * h });
    }
    Ok(Trajectory { states, step: h })
}

/// Endpoint of the flow without storing the trajectory.
pub fn flow_map(spec: &MetricSpec, x: Vec2, v: Vec2, duration: f64, step: f64) -> Result<(Vec2, Vec2)> {
    let (n, h) = steps_for(duration, step)?;
    let mut y = State4::new(x[0], x[1], v[0], v[1]);
    let mut field = |s: &State4| orbit_field(spec, s);
    for _ in 0..n {
        y = rk4(&mut field, &y, h)?;
    }
    Ok((Vec2::new(y[0], y[1]), Vec2::new(y[2], y[3])))
}

/// Fundamental matrix of the variational equation at the end of an orbit.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub matrix: Matrix4<f64>,
    pub endpoint: GeodesicState,
    /// `exp(∫ div)` along the orbit, the determinant predicted by Liouville's formula.
    pub predicted_det: f64,
}

impl Linearization {
    pub fn det_deviation(&self) -> f64 {
        (self.matrix.determinant() - self.predicted_det).abs()
    }
}

fn linearize(spec: &MetricSpec, x: Vec2, v: Vec2, duration: f64, step: f64) -> Result<Linearization> {
    let (n, h) = steps_for(duration, step)?;
    let mut y = State21::zeros();
    y[0] = x[0];
    y[1] = x[1];
    y[2] = v[0];
    y[3] = v[1];
    y.as_mut_slice()[4..20].copy_from_slice(Matrix4::<f64>::identity().as_slice());
    let mut field = |s: &State21| joint_field(spec, s);
    for _ in 0..n {
        y = rk4(&mut field, &y, h)?;
    }
    Ok(Linearization {
        matrix: Matrix4::from_column_slice(&y.as_slice()[4..20]),
        endpoint: GeodesicState { x: Vec2::new(y[0], y[1]), v: Vec2::new(y[2], y[3]), t: duration },
        predicted_det: y[20].exp(),
    })
}

/// Integrate the variational equation along the orbit of `trajectory` (same
/// initial state, duration and step).
pub fn linearize_along(spec: &MetricSpec, trajectory: &Trajectory) -> Result<Linearization> {
    let s0 = trajectory.states[0];
    let duration = trajectory.last().t - s0.t;
    linearize(spec, s0.x, s0.v, duration, trajectory.step)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitClass {
    Hyperbolic,
    Parabolic,
    Elliptic,
    /// Monodromy not resolved: the orbit failed to close or the trace
    /// changed too much under step halving.
    Degenerate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FloquetReport {
    pub period: f64,
    /// All four monodromy eigenvalues as `(re, im)`.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Transverse pair, larger modulus first.
    pub multipliers: [(f64, f64); 2],
    pub classification: OrbitClass,
    /// `ln|μ| / T` for hyperbolic orbits.
    pub lyapunov: Option<f64>,
    /// `|det M − 1|`.
    pub det_residual: f64,
    /// Distance of the two eigenvalues identified as trivial from 1.
    pub trivial_deviation: f64,
    /// Error estimate for `tr M`.
    pub trace_uncertainty: f64,
    pub closing_defect: f64,
}

impl FloquetReport {
    pub fn is_hyperbolic(&self) -> bool {
        self.classification == OrbitClass::Hyperbolic
    }

    /// Real part of the dominant multiplier (`μ` for hyperbolic orbits).
    pub fn mu(&self) -> f64 {
        self.multipliers[0].0
    }
}

/// A closed geodesic in class `z`: `x(T) = x₀ + z`, `v(T) = v₀`, unit speed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedGeodesic {
    pub z: LatticeVector,
    pub x0: Vec2,
    pub v0: Vec2,
    pub period: f64,
    pub closing_defect: f64,
}

fn unit_velocity(spec: &MetricSpec, x: &Vec2, angle: f64) -> Vec2 {
    let d = Vec2::new(angle.cos(), angle.sin());
    d / spec.f_unchecked(x, &d)
}

fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * (a / t).round()
}

impl ClosedGeodesic {
    /// Shooting refinement from an initial point, direction and period guess.
    pub fn from_guess(spec: &MetricSpec, z: LatticeVector, x0: Vec2, direction: Vec2, period: f64) -> Result<Self> {
        let n_hat = z.perp().to_vec2() / z.norm();
        let zv = z.to_vec2();
        let h = DEFAULT_STEP;
        let residual = |p: &Vector3<f64>| -> Result<Vector3<f64>> {
            let x = x0 + n_hat * p[0];
            let v = unit_velocity(spec, &x, p[1]);
            let (xt, vt) = flow_map(spec, x, v, p[2], h)?;
            let dx = xt - x - zv;
            Ok(Vector3::new(dx[0], dx[1], wrap_angle(vt[1].atan2(vt[0]) - p[1])))
        };
        let mut p = Vector3::new(0.0, direction[1].atan2(direction[0]), period);
        let mut r = residual(&p)?;
        for _ in 0..40 {
            if r.norm() < 1e-11 {
                break;
            }
            let mut jac = Matrix3::zeros();
            for j in 0..3 {
                let mut dp = Vector3::zeros();
                dp[j] = 1e-7 * if j == 2 { p[2].max(1.0) } else { 1.0 };
                let col = (residual(&(p + dp))? - residual(&(p - dp))?) / (2.0 * dp[j]);
                jac.set_column(j, &col);
            }
            // least squares handles the rank deficiency of foliated families
            let svd = jac.svd(true, true);
            let step = svd.solve(&(-r), 1e-8 * svd.singular_values.max()).map_err(|e| Error::Integration(e.into()))?;
            let mut lambda = 1.0;
            let mut improved = false;
            while lambda > 1e-4 {
                let cand = p + step * lambda;
                if cand[2] > 0.0 {
                    let rc = residual(&cand)?;
                    if rc.norm() < r.norm() {
                        p = cand;
                        r = rc;
                        improved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let x = x0 + n_hat * p[0];
        Ok(ClosedGeodesic { z, x0: x, v0: unit_velocity(spec, &x, p[1]), period: p[2], closing_defect: r.norm() })
    }

    /// Refine a closed polygon approximating a minimizer (points of one period,
    /// closure `x_N = x_0 + z`) into a closed geodesic.
    pub fn from_points(spec: &MetricSpec, z: LatticeVector, points: &[Vec2], length: f64) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Domain("need at least three points".into()));
        }
        let n = points.len();
        let next = points[1];
        let prev = points[n - 1] - z.to_vec2();
        ClosedGeodesic::from_guess(spec, z, points[0], next - prev, length)
    }
}

/// Monodromy matrix and Floquet classification of a closed geodesic.
pub fn monodromy_of_closed(spec: &MetricSpec, orbit: &ClosedGeodesic) -> Result<FloquetReport> {
    let coarse = linearize(spec, orbit.x0, orbit.v0, orbit.period, DEFAULT_STEP)?;
    let lin = linearize(spec, orbit.x0, orbit.v0, orbit.period, DEFAULT_STEP / 2.0)?;
    let m = lin.matrix;
    let mut eig: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()));
    let trivial_deviation = (eig[0] - 1.0).norm().max((eig[1] - 1.0).norm());
    let det_residual = (m.determinant() - 1.0).abs();
    // The trivial pair contributes 2 to the trace, so μ + 1/μ = tr M − 2. The
    // trace stays well conditioned where near-Jordan eigenvalues do not.
    let tau = m.trace() - 2.0;
    // step-halving change plus the effect of the closing defect
    let trace_uncertainty = (coarse.matrix.trace() - m.trace()).abs() + orbit.closing_defect * m.norm();
    let th = HYPERBOLIC_THRESHOLD;
    let resolved = |margin: f64| margin > 3.0 * trace_uncertainty;
    let (m1, m2) = if tau.abs() >= 2.0 {
        let r = (tau * tau - 4.0).sqrt();
        let big = 0.5 * (tau + tau.signum() * r);
        (Complex::new(big, 0.0), Complex::new(1.0 / big, 0.0))
    } else {
        let c = 0.5 * tau;
        let s = (1.0 - c * c).sqrt();
        (Complex::new(c, s), Complex::new(c, -s))
    };
    let classification = if !tau.is_finite() || det_residual > 1e-3 || trace_uncertainty > 0.1 {
        OrbitClass::Degenerate
    } else if m1.im == 0.0 && m1.re.abs() > 1.0 + th && resolved(tau.abs() - 2.0) {
        OrbitClass::Hyperbolic
    } else if m1.im.abs() > th && m1.re < 1.0 && resolved(2.0 - tau) {
        OrbitClass::Elliptic
    } else {
        OrbitClass::Parabolic
    };
    let lyapunov = (classification == OrbitClass::Hyperbolic).then(|| m1.re.abs().ln() / orbit.period);
    Ok(FloquetReport {
        period: orbit.period,
        eigenvalues: m.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect(),
        multipliers: [(m1.re, m1.im), (m2.re, m2.im)],
        classification,
        lyapunov,
        det_residual,
        trivial_deviation,
        trace_uncertainty,
        closing_defect: orbit.closing_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::FourierSeries;

    fn st(x: [f64; 2], v: [f64; 2]) -> GeodesicState {
        GeodesicState::new(Vec2::new(x[0], x[1]), Vec2::new(v[0], v[1]))
    }

    #[test]
    fn euclidean_straight_line() {
        let e = MetricSpec::euclidean();
        let tr = integrate_geodesic(&e, st([0.0, 0.0], [1.0, 0.0]), 1.0, 1e-3).unwrap();
        let end = tr.last();
        assert!((end.x - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert!((end.v - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn invariant_circle_is_kept() {
        let r = MetricSpec::standard_rotational();
        let tr = integrate_geodesic(&r, st([0.0, 0.5], [1.0, 0.0]), 10.0, 1e-3).unwrap();
        assert!(tr.states.iter().all(|s| (s.x[1] - 0.5).abs() < 1e-10));
    }

    #[test]
    fn flat_fundamental_matrix() {
        for spec in [MetricSpec::euclidean(), MetricSpec::flat([[1.0, 0.0], [0.0, 1.0]], [0.3, 0.1])] {
            let tr = integrate_geodesic(&spec, st([0.2, 0.1], [0.6, 0.8]), 2.0, 1e-2).unwrap();
            let lin = linearize_along(&spec, &tr).unwrap();
            let mut want = Matrix4::identity();
            want[(0, 2)] = 2.0;
            want[(1, 3)] = 2.0;
            assert!((lin.matrix - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_velocity_and_bad_step() {
        let e = MetricSpec::euclidean();
        assert!(integrate_geodesic(&e, st([0.0, 0.0], [0.0, 0.0]), 1.0, 1e-3).is_err());
        assert!(integrate_geodesic(&e, st([0.0, 0.0], [1.0, 0.0]), 1.0, 0.0).is_err());
    }

    #[test]
    fn euclidean_closed_geodesic_is_parabolic() {
        let e = MetricSpec::euclidean();
        let z = LatticeVector::new(1, 0).unwrap();
        let g = ClosedGeodesic::from_guess(&e, z, Vec2::new(0.0, 0.3), Vec2::new(1.0, 0.0), 1.0).unwrap();
        let rep = monodromy_of_closed(&e, &g).unwrap();
        assert_eq!(rep.classification, OrbitClass::Parabolic);
        assert!((rep.multipliers[0].0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotational_circles() {
        let r = MetricSpec::standard_rotational();
        let z = LatticeVector::new(1, 0).unwrap();
        let min = ClosedGeodesic::from_guess(&r, z, Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.0), 1.0).unwrap();
        let rep = monodromy_of_closed(&r, &min).unwrap();
        assert_eq!(rep.classification, OrbitClass::Hyperbolic, "{rep:?}");
        assert!(rep.mu() > 1.0 + 1e-4);
        let max = ClosedGeodesic::from_guess(&r, z, Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 3f64.sqrt()).unwrap();
        let rep = monodromy_of_closed(&r, &max).unwrap();
        assert_eq!(rep.classification, OrbitClass::Elliptic, "{rep:?}");
    }

    #[test]
    fn conformal_energy_conservation() {
        let c = MetricSpec::conformal(FourierSeries::two_dim(2.0, &[([0, 1], 0.1, 0.0)]));
        let tr = integrate_geodesic(&c, st([0.1, 0.2], [0.7, 0.4]), 10.0, 1e-3).unwrap();
        assert!(tr.energy_drift(&c) < 1e-8);
    }

    #[test]
    fn trajectory_csv_header() {
        let e = MetricSpec::euclidean();
        let tr = integrate_geodesic(&e, st([0.0, 0.0], [1.0, 0.0]), 0.5, 0.25).unwrap();
        let csv = tr.to_csv(&e);
        assert!(csv.starts_with("t,x1,x2,v1,v2,F\n0,0,0,1,0,1\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
