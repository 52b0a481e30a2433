//! Shortest closed curves per homotopy class by minimizing a discrete energy.
//!
//! A loop is a polygon `x₀, …, x_{N−1}` in the universal cover closed up by
//! `x_N = x₀ + z`. Its energy with unit parameter interval is
//! `E = N Σ L(mᵢ, xᵢ₊₁ − xᵢ)` with `mᵢ` the segment midpoint; at a minimizer the
//! speed is constant and `length² = 2E`. The optimizer is a damped Newton
//! method on the exact banded Hessian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymBand;
use crate::metrics::{Mat2, MetricSpec, TangentSample, Vec2};

pub use crate::rational_approx::LatticeVector;

/// Default distinct-orbit threshold (Hausdorff distance on the torus).
pub const CLUSTER_THRESHOLD: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLoop {
    pub z: LatticeVector,
    pub points: Vec<Vec2>,
}

impl DiscreteLoop {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point `i` for any integer index, using `x_{i+N} = x_i + z`.
    pub fn point(&self, i: i64) -> Vec2 {
        let n = self.points.len() as i64;
        let k = i.div_euclid(n);
        self.points[i.rem_euclid(n) as usize] + self.z.to_vec2() * k as f64
    }

    /// Loop with a midpoint inserted into every segment.
    pub fn doubled(&self) -> DiscreteLoop {
        let n = self.points.len() as i64;
        let mut pts = Vec::with_capacity(2 * n as usize);
        for i in 0..n {
            let a = self.point(i);
            let b = self.point(i + 1);
            pts.push(a);
            pts.push((a + b) * 0.5);
        }
        DiscreteLoop { z: self.z, points: pts }
    }

    /// CSV point list `i, x1, x2`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 3]> = self.points.iter().enumerate().map(|(i, p)| [i as f64, p[0], p[1]]).collect();
        crate::export::csv_string(&["i", "x1", "x2"], &rows)
    }
}

/// Straight loop from `offset` to `offset + z` with `n` uniform samples.
pub fn init_loop(z: LatticeVector, offset: Vec2, n: usize) -> Result<DiscreteLoop> {
    if n < 3 {
        return Err(Error::Domain(format!("a loop needs at least 3 points, got {n}")));
    }
    let zv = z.to_vec2();
    let points = (0..n).map(|i| offset + zv * (i as f64 / n as f64)).collect();
    Ok(DiscreteLoop { z, points })
}

fn check_segments(lp: &DiscreteLoop) -> Result<()> {
    let n = lp.points.len();
    if n < 3 {
        return Err(Error::Domain("a loop needs at least 3 points".into()));
    }
    for i in 0..n as i64 {
        if (lp.point(i + 1) - lp.point(i)).norm() == 0.0 {
            return Err(Error::Domain(format!("degenerate segment at index {i}")));
        }
    }
    Ok(())
}

pub fn discrete_energy(spec: &MetricSpec, lp: &DiscreteLoop) -> Result<f64> {
    check_segments(lp)?;
    let chain = Chain::closed(spec, lp.z.to_vec2());
    chain.energy(&lp.points)
}

pub fn discrete_length(spec: &MetricSpec, lp: &DiscreteLoop) -> Result<f64> {
    check_segments(lp)?;
    Ok(Chain::closed(spec, lp.z.to_vec2()).length(&lp.points))
}

/// How a chain of free points is closed up.
#[derive(Clone, Copy, Debug)]
pub enum Boundary {
    /// Periodic: the point after the last is the first shifted by `shift`.
    Closed { shift: Vec2 },
    /// Path with fixed endpoints; the free points are the interior vertices.
    Open { start: Vec2, end: Vec2 },
}

/// Discrete energy functional on a chain of points.
pub struct Chain<'a> {
    spec: &'a MetricSpec,
    boundary: Boundary,
}

struct Segment {
    a: Vec2,
    b: Vec2,
    ia: Option<usize>,
    ib: Option<usize>,
}

impl<'a> Chain<'a> {
    pub fn closed(spec: &'a MetricSpec, shift: Vec2) -> Self {
        Chain { spec, boundary: Boundary::Closed { shift } }
    }

    pub fn open(spec: &'a MetricSpec, start: Vec2, end: Vec2) -> Self {
        Chain { spec, boundary: Boundary::Open { start, end } }
    }

    fn segment_count(&self, n: usize) -> usize {
        match self.boundary {
            Boundary::Closed { .. } => n,
            Boundary::Open { .. } => n + 1,
        }
    }

    fn segment(&self, pts: &[Vec2], i: usize) -> Segment {
        let n = pts.len();
        match self.boundary {
            Boundary::Closed { shift } => {
                if i + 1 < n {
                    Segment { a: pts[i], b: pts[i + 1], ia: Some(i), ib: Some(i + 1) }
                } else {
                    Segment { a: pts[i], b: pts[0] + shift, ia: Some(i), ib: Some(0) }
                }
            }
            Boundary::Open { start, end } => {
                let a = if i == 0 { start } else { pts[i - 1] };
                let b = if i == n { end } else { pts[i] };
                Segment { a, b, ia: i.checked_sub(1), ib: (i < n).then_some(i) }
            }
        }
    }

    /// Position of free point `i` in the band ordering.
    fn slot(&self, n: usize, i: usize) -> usize {
        match self.boundary {
            // interleave 0, N−1, 1, N−2, … so the wrap-around coupling stays banded
            Boundary::Closed { .. } => {
                if 2 * i < n {
                    2 * i
                } else {
                    2 * (n - 1 - i) + 1
                }
            }
            Boundary::Open { .. } => i,
        }
    }

    fn band_width(&self) -> usize {
        match self.boundary {
            Boundary::Closed { .. } => 5,
            Boundary::Open { .. } => 3,
        }
    }

    pub fn energy(&self, pts: &[Vec2]) -> Result<f64> {
        let s = self.segment_count(pts.len());
        let mut e = 0.0;
        for i in 0..s {
            let seg = self.segment(pts, i);
            let l = self.spec.eval_lagrangian(&TangentSample::new((seg.a + seg.b) * 0.5, seg.b - seg.a))?;
            e += l.value;
        }
        Ok(e * s as f64)
    }

    pub fn length(&self, pts: &[Vec2]) -> f64 {
        let s = self.segment_count(pts.len());
        (0..s)
            .map(|i| {
                let seg = self.segment(pts, i);
                let d = seg.b - seg.a;
                if d.norm() == 0.0 {
                    0.0
                } else {
                    self.spec.f_unchecked(&((seg.a + seg.b) * 0.5), &d)
                }
            })
            .sum()
    }

    /// Energy, gradient (in point order) and Hessian (in band order).
    fn assemble(&self, pts: &[Vec2]) -> Result<(f64, Vec<f64>, SymBand)> {
        let n = pts.len();
        let s = self.segment_count(n);
        let sf = s as f64;
        let mut e = 0.0;
        let mut grad = vec![0.0; 2 * n];
        let mut hess = SymBand::zeros(2 * n, self.band_width());
        for i in 0..s {
            let seg = self.segment(pts, i);
            let l = self.spec.eval_lagrangian(&TangentSample::new((seg.a + seg.b) * 0.5, seg.b - seg.a))?;
            e += l.value;
            let ga = (l.dx * 0.5 - l.dv) * sf;
            let gb = (l.dx * 0.5 + l.dv) * sf;
            let q = l.dxx * 0.25;
            let haa = (q - (l.dxv + l.dxv.transpose()) * 0.5 + l.dvv) * sf;
            let hbb = (q + (l.dxv + l.dxv.transpose()) * 0.5 + l.dvv) * sf;
            // rows b, columns a
            let hba = (q - l.dxv * 0.5 + l.dxv.transpose() * 0.5 - l.dvv) * sf;
            if let Some(a) = seg.ia {
                grad[2 * a] += ga[0];
                grad[2 * a + 1] += ga[1];
                self.add_block(&mut hess, n, a, a, &haa);
            }
            if let Some(b) = seg.ib {
                grad[2 * b] += gb[0];
                grad[2 * b + 1] += gb[1];
                self.add_block(&mut hess, n, b, b, &hbb);
            }
            if let (Some(a), Some(b)) = (seg.ia, seg.ib) {
                self.add_block(&mut hess, n, b, a, &hba);
            }
        }
        Ok((e * sf, grad, hess))
    }

    fn add_block(&self, h: &mut SymBand, n: usize, row_pt: usize, col_pt: usize, blk: &Mat2) {
        let (r0, c0) = (2 * self.slot(n, row_pt), 2 * self.slot(n, col_pt));
        for r in 0..2 {
            for c in 0..2 {
                if row_pt == col_pt && c > r {
                    continue;
                }
                h.add(r0 + r, c0 + c, blk[(r, c)]);
            }
        }
    }

    /// Damped Newton descent on the energy. Returns the final points, energy,
    /// gradient max-norm and whether the gradient tolerance was met.
    pub fn minimize(&self, mut pts: Vec<Vec2>, grad_tol: f64, max_iter: usize) -> Result<ChainMinimum> {
        let n = pts.len();
        let (mut e, mut grad, mut hess) = self.assemble(&pts)?;
        let mut damping = 0.0;
        let mut converged = false;
        let mut iterations = 0;
        for it in 0..max_iter {
            iterations = it;
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax <= grad_tol * (1.0 + e.abs()) {
                converged = true;
                break;
            }
            let scale = hess.max_abs_diagonal().max(1e-300);
            let rhs_band: Vec<f64> = {
                let mut r = vec![0.0; 2 * n];
                for i in 0..n {
                    let s = self.slot(n, i);
                    r[2 * s] = -grad[2 * i];
                    r[2 * s + 1] = -grad[2 * i + 1];
                }
                r
            };
            let mut accepted = false;
            let mut tries = 0;
            while tries < 40 {
                tries += 1;
                let mut h = hess.clone();
                h.add_diagonal(damping * scale + 1e-14 * scale);
                let Some(ch) = h.cholesky() else {
                    damping = if damping == 0.0 { 1e-8 } else { damping * 10.0 };
                    continue;
                };
                let step_band = ch.solve(&rhs_band);
                let mut step = vec![Vec2::zeros(); n];
                for (i, st) in step.iter_mut().enumerate() {
                    let s = self.slot(n, i);
                    *st = Vec2::new(step_band[2 * s], step_band[2 * s + 1]);
                }
                let slope: f64 = (0..n).map(|i| grad[2 * i] * step[i][0] + grad[2 * i + 1] * step[i][1]).sum();
                let mut alpha = 1.0;
                while alpha > 1e-6 {
                    let cand: Vec<Vec2> = pts.iter().zip(&step).map(|(p, d)| p + d * alpha).collect();
                    if let Ok(ec) = self.energy(&cand) {
                        if ec <= e + 1e-4 * alpha * slope
                            || (ec - e).abs() <= 4.0 * f64::EPSILON * e.abs() && slope.abs() <= 1e-14 * e.abs()
                        {
                            pts = cand;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    damping = if alpha == 1.0 { damping / 10.0 } else { damping };
                    if damping < 1e-12 {
                        damping = 0.0;
                    }
                    break;
                }
                damping = if damping == 0.0 { 1e-8 } else { damping * 10.0 };
            }
            if !accepted {
                break;
            }
            let a = self.assemble(&pts)?;
            e = a.0;
            grad = a.1;
            hess = a.2;
        }
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !converged && grad_norm <= grad_tol * (1.0 + e.abs()) {
            converged = true;
        }
        Ok(ChainMinimum { length: self.length(&pts), points: pts, energy: e, grad_norm, converged, iterations })
    }
}

#[derive(Clone, Debug)]
pub struct ChainMinimum {
    pub points: Vec<Vec2>,
    pub energy: f64,
    pub length: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Gradient max-norm tolerance relative to `1 + E`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Base sample counts; scaled by `ceil(|z|)`.
    pub n_schedule: Vec<usize>,
    /// Relative change of σ under doubling that stops refinement.
    pub tol_refine: f64,
    /// Doublings allowed beyond the schedule.
    pub extra_doublings: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { grad_tol: 1e-10, max_iter: 400, n_schedule: vec![64, 128, 256], tol_refine: 1e-6, extra_doublings: 2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizerResult {
    pub z: LatticeVector,
    /// Length extrapolated from the last two levels (the midpoint rule is
    /// second order in `1/N`).
    pub sigma: f64,
    /// Discrete length at the finest level.
    pub sigma_raw: f64,
    pub energy: f64,
    #[serde(skip)]
    pub final_loop: Option<DiscreteLoop>,
    pub converged: bool,
    pub grad_norm: f64,
    #[serde(rename = "N")]
    pub n: usize,
    /// `(N, σ_N)` for every discretization visited.
    pub history: Vec<(usize, f64)>,
}

impl MinimizerResult {
    pub fn final_loop(&self) -> &DiscreteLoop {
        self.final_loop.as_ref().expect("result carries its loop")
    }
}

fn resample(lp: &DiscreteLoop, n: usize) -> DiscreteLoop {
    let m = lp.points.len();
    let points = (0..n)
        .map(|j| {
            let u = j as f64 * m as f64 / n as f64;
            let i = u.floor() as i64;
            let f = u - i as f64;
            lp.point(i) * (1.0 - f) + lp.point(i + 1) * f
        })
        .collect();
    DiscreteLoop { z: lp.z, points }
}

/// Minimize the discrete energy along an N-refinement schedule.
pub fn minimize_loop(spec: &MetricSpec, lp: &DiscreteLoop, opts: &MinimizeOptions) -> Result<MinimizerResult> {
    check_segments(lp)?;
    let scale = lp.z.norm().ceil().max(1.0) as usize;
    let schedule: Vec<usize> = opts.n_schedule.iter().map(|n| n * scale).collect();
    let first = *schedule.first().ok_or_else(|| Error::Domain("empty N schedule".into()))?;
    let chain = Chain::closed(spec, lp.z.to_vec2());
    let mut current = if lp.points.len() == first { lp.clone() } else { resample(lp, first) };
    let mut history = Vec::new();
    let mut best: Option<(ChainMinimum, usize)> = None;
    let mut pair_ok = false;
    let max_levels = schedule.len() + opts.extra_doublings;
    for level in 0..max_levels {
        let n = current.points.len();
        let m = chain.minimize(current.points.clone(), opts.grad_tol, opts.max_iter)?;
        history.push((n, m.length));
        let prev = best.as_ref().map(|b| b.0.length);
        current = DiscreteLoop { z: lp.z, points: m.points.clone() };
        let all_ok = m.converged && best.as_ref().map_or(true, |b| b.0.converged);
        pair_ok = all_ok && prev.is_some();
        best = Some((m, n));
        if level + 1 >= schedule.len().min(3) {
            if let Some(p) = prev {
                let s = best.as_ref().unwrap().0.length;
                if (s - p).abs() < opts.tol_refine * s && all_ok {
                    break;
                }
            }
        }
        if level + 1 < max_levels {
            current = current.doubled();
        }
    }
    let (m, n) = best.expect("at least one level");
    let sigma = match history.as_slice() {
        [.., (_, a), (_, b)] if pair_ok => b + (b - a) / 3.0,
        _ => m.length,
    };
    Ok(MinimizerResult {
        z: lp.z,
        sigma,
        sigma_raw: m.length,
        energy: m.energy,
        final_loop: Some(DiscreteLoop { z: lp.z, points: m.points }),
        converged: m.converged,
        grad_norm: m.grad_norm,
        n,
        history,
    })
}

fn mix_seed(seed: u64, z: LatticeVector, i: usize) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [z.a() as u64, z.b() as u64, i as u64] {
        h = (h ^ v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Distance from `p` to the closed polygon `q` projected to the torus.
fn torus_distance_to_polygon(p: Vec2, segs: &[(Vec2, Vec2)]) -> f64 {
    let p = Vec2::new(p[0] - p[0].floor(), p[1] - p[1].floor());
    let mut best = f64::INFINITY;
    for (a, b) in segs {
        for dx in -1..=1 {
            for dy in -1..=1 {
                let q = p + Vec2::new(dx as f64, dy as f64);
                let ab = b - a;
                let t = ((q - a).dot(&ab) / ab.norm_squared().max(1e-300)).clamp(0.0, 1.0);
                best = best.min((q - (a + ab * t)).norm());
            }
        }
    }
    best
}

fn reduced_segments(lp: &DiscreteLoop) -> Vec<(Vec2, Vec2)> {
    (0..lp.points.len() as i64)
        .map(|i| {
            let a = lp.point(i);
            let b = lp.point(i + 1);
            let s = Vec2::new(a[0].floor(), a[1].floor());
            (a - s, b - s)
        })
        .collect()
}

/// Hausdorff distance between the images of two loops on the torus.
pub fn torus_hausdorff(a: &DiscreteLoop, b: &DiscreteLoop) -> f64 {
    let sa = reduced_segments(a);
    let sb = reduced_segments(b);
    let stride = |n: usize| (n / 128).max(1);
    let d1 = a.points.iter().step_by(stride(a.len())).map(|p| torus_distance_to_polygon(*p, &sb)).fold(0.0, f64::max);
    let d2 = b.points.iter().step_by(stride(b.len())).map(|p| torus_distance_to_polygon(*p, &sa)).fold(0.0, f64::max);
    d1.max(d2)
}

/// A closed minimizing geodesic, parameterized by arc length through its loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub result: MinimizerResult,
    #[serde(skip)]
    pub orbit_loop: Option<DiscreteLoop>,
}

impl PeriodicOrbit {
    pub fn new(result: MinimizerResult) -> Self {
        let orbit_loop = result.final_loop.clone();
        PeriodicOrbit { result, orbit_loop }
    }

    pub fn sigma(&self) -> f64 {
        self.result.sigma
    }

    pub fn z(&self) -> LatticeVector {
        self.result.z
    }

    pub fn loop_ref(&self) -> &DiscreteLoop {
        self.orbit_loop.as_ref().expect("orbit carries its loop")
    }

    /// Point at arc length `s` from the first vertex (constant-speed
    /// parameterization of the minimizer); `at(s + σ) = at(s) + z`.
    pub fn at(&self, s: f64) -> Vec2 {
        let lp = self.loop_ref();
        let n = lp.len() as f64;
        let u = s / self.sigma() * n;
        let i = u.floor();
        let f = u - i;
        let i = i as i64;
        lp.point(i) * (1.0 - f) + lp.point(i + 1) * f
    }

    /// Signed transverse height `⟨x₀, z^⊥⟩` of the first vertex.
    pub fn height(&self) -> f64 {
        let lp = self.loop_ref();
        let zp = self.z().perp().to_vec2();
        lp.points.iter().map(|p| p.dot(&zp)).sum::<f64>() / lp.len() as f64
    }

    /// The same orbit translated by a lattice vector.
    pub fn translated(&self, w: Vec2) -> PeriodicOrbit {
        let mut o = self.clone();
        if let Some(lp) = o.orbit_loop.as_mut() {
            for p in lp.points.iter_mut() {
                *p += w;
            }
        }
        if let Some(lp) = o.result.final_loop.as_mut() {
            for p in lp.points.iter_mut() {
                *p += w;
            }
        }
        o
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicMinimizers {
    pub z: LatticeVector,
    /// Smallest length found.
    pub sigma: f64,
    /// One representative per distinct orbit, best first.
    pub orbits: Vec<PeriodicOrbit>,
    /// Lengths of all restarts in offset order.
    pub restart_sigmas: Vec<f64>,
    pub restarts: usize,
    pub all_converged: bool,
    /// Every restart ended on a different minimal orbit.
    pub foliated: bool,
}

impl PeriodicMinimizers {
    pub fn count(&self) -> usize {
        self.orbits.len()
    }

    pub fn best(&self) -> &PeriodicOrbit {
        &self.orbits[0]
    }
}

/// Multi-start search for minimal closed geodesics in a primitive class.
pub fn find_periodic_minimizers(
    spec: &MetricSpec,
    z: LatticeVector,
    restarts: usize,
    seed: u64,
    opts: &MinimizeOptions,
) -> Result<PeriodicMinimizers> {
    if !z.is_primitive() {
        return Err(Error::Precondition(format!("{z} is not primitive")));
    }
    if restarts == 0 {
        return Err(Error::Domain("at least one restart is required".into()));
    }
    let zp = z.perp().to_vec2();
    let n0 = opts.n_schedule.first().copied().unwrap_or(64) * z.norm().ceil() as usize;
    let mut u_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, z, usize::MAX));
    let u: f64 = u_rng.gen();
    let results: Vec<Result<MinimizerResult>> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, z, i));
            let offset = zp * ((i as f64 + u) / restarts as f64 / z.norm_sq() as f64);
            let mut lp = init_loop(z, offset, n0)?;
            // small smooth transverse kick to leave non-minimal critical loops
            let amp = 1e-3 / z.norm();
            let (c0, c1, ph): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen());
            let nh = zp / z.norm();
            for (j, p) in lp.points.iter_mut().enumerate() {
                let s = j as f64 / n0 as f64;
                *p += nh * (amp * (c0 + c1 * (std::f64::consts::TAU * (s + ph)).sin()));
            }
            minimize_loop(spec, &lp, opts)
        })
        .collect();
    let results: Vec<MinimizerResult> = results.into_iter().collect::<Result<_>>()?;
    let sigma = results.iter().map(|r| r.sigma).fold(f64::INFINITY, f64::min);
    let restart_sigmas: Vec<f64> = results.iter().map(|r| r.sigma).collect();
    let all_converged = results.iter().all(|r| r.converged);
    let mut minimal: Vec<&MinimizerResult> = results.iter().filter(|r| r.sigma <= sigma * (1.0 + 1e-4)).collect();
    minimal.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    let mut reps: Vec<&MinimizerResult> = Vec::new();
    for r in minimal {
        if reps.iter().all(|q| torus_hausdorff(q.final_loop(), r.final_loop()) >= CLUSTER_THRESHOLD) {
            reps.push(r);
        }
    }
    let foliated = reps.len() == restarts;
    Ok(PeriodicMinimizers {
        z,
        sigma,
        orbits: reps.into_iter().map(|r| PeriodicOrbit::new(r.clone())).collect(),
        restart_sigmas,
        restarts,
        all_converged,
        foliated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::FourierSeries;

    fn lv(a: i64, b: i64) -> LatticeVector {
        LatticeVector::new(a, b).unwrap()
    }

    #[test]
    fn init_examples() {
        let l = init_loop(lv(1, 0), Vec2::zeros(), 4).unwrap();
        let want = [0.0, 0.25, 0.5, 0.75];
        for (p, w) in l.points.iter().zip(want) {
            assert_eq!(*p, Vec2::new(w, 0.0));
        }
        let l = init_loop(lv(0, 1), Vec2::new(0.3, 0.0), 16).unwrap();
        assert!(l.points.iter().all(|p| p[0] == 0.3));
        let l = init_loop(lv(2, 1), Vec2::zeros(), 6).unwrap();
        for (i, p) in l.points.iter().enumerate() {
            let t = i as f64 / 6.0;
            assert!((p - Vec2::new(2.0 * t, t)).norm() < 1e-15);
        }
    }

    #[test]
    fn euclidean_energy_and_length() {
        let e = MetricSpec::euclidean();
        let l = init_loop(lv(3, 4), Vec2::zeros(), 32).unwrap();
        assert!((discrete_length(&e, &l).unwrap() - 5.0).abs() < 1e-13);
        assert!((discrete_energy(&e, &l).unwrap() - 12.5).abs() < 1e-12);
        // same image, uneven parameter
        let mut l2 = l.clone();
        for (i, p) in l2.points.iter_mut().enumerate() {
            let t = i as f64 / 32.0;
            let s = t + 0.05 * (std::f64::consts::TAU * t).sin();
            *p = Vec2::new(3.0, 4.0) * s;
        }
        assert!((discrete_length(&e, &l2).unwrap() - 5.0).abs() < 1e-13);
        assert!(discrete_energy(&e, &l2).unwrap() >= 12.5);
    }

    #[test]
    fn constant_factor_length() {
        let r = MetricSpec::rotational(FourierSeries::constant(1, 4.0));
        let l = init_loop(lv(1, 0), Vec2::new(0.0, 0.3), 16).unwrap();
        assert!((discrete_length(&r, &l).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_segment_rejected() {
        let e = MetricSpec::euclidean();
        let mut l = init_loop(lv(1, 0), Vec2::zeros(), 8).unwrap();
        l.points[2] = l.points[1];
        assert!(discrete_length(&e, &l).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MetricSpec::conformal(FourierSeries::two_dim(2.0, &[([1, 1], 0.3, 0.1), ([0, 1], 0.2, 0.0)]));
        let mut l = init_loop(lv(1, 1), Vec2::new(0.1, 0.0), 9).unwrap();
        for (i, p) in l.points.iter_mut().enumerate() {
            *p += Vec2::new(0.01 * (i as f64).sin(), 0.02 * (i as f64).cos());
        }
        for chain in [Chain::closed(&spec, Vec2::new(1.0, 1.0)), Chain::open(&spec, Vec2::new(-0.1, 0.0), Vec2::new(1.2, 1.1))] {
            let (_, g, h) = chain.assemble(&l.points).unwrap();
            let n = l.points.len();
            let eps = 1e-6;
            for k in 0..2 * n {
                let mut p = l.points.clone();
                p[k / 2][k % 2] += eps;
                let ep = chain.energy(&p).unwrap();
                let (_, gp, _) = chain.assemble(&p).unwrap();
                p[k / 2][k % 2] -= 2.0 * eps;
                let em = chain.energy(&p).unwrap();
                let (_, gm, _) = chain.assemble(&p).unwrap();
                assert!(((ep - em) / (2.0 * eps) - g[k]).abs() < 1e-5, "grad {k}");
                for j in 0..2 * n {
                    let fd = (gp[j] - gm[j]) / (2.0 * eps);
                    let hv = h.get(2 * chain.slot(n, j / 2) + j % 2, 2 * chain.slot(n, k / 2) + k % 2);
                    assert!((fd - hv).abs() < 1e-4, "hess ({j},{k}): {fd} vs {hv}");
                }
            }
        }
    }

    #[test]
    fn euclidean_minimum() {
        let e = MetricSpec::euclidean();
        let l = init_loop(lv(3, 4), Vec2::new(0.1, 0.2), 64).unwrap();
        let r = minimize_loop(&e, &l, &MinimizeOptions::default()).unwrap();
        assert!((r.sigma - 5.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn rotational_horizontal_class_finds_the_minimum_circle() {
        let r = MetricSpec::standard_rotational();
        let l = init_loop(lv(1, 0), Vec2::new(0.0, 0.2), 64).unwrap();
        let res = minimize_loop(&r, &l, &MinimizeOptions::default()).unwrap();
        assert!((res.sigma - 1.0).abs() < 1e-5, "{}", res.sigma);
        let y = res.final_loop().points[0][1];
        assert!((y - 0.5).abs() < 1e-4, "{y}");
    }

    #[test]
    fn clustering_examples() {
        let opts = MinimizeOptions::default();
        let e = MetricSpec::euclidean();
        let m = find_periodic_minimizers(&e, lv(1, 0), 8, 7, &opts).unwrap();
        assert_eq!(m.count(), 8);
        assert!(m.foliated);
        let r = MetricSpec::standard_rotational();
        let m = find_periodic_minimizers(&r, lv(1, 0), 8, 7, &opts).unwrap();
        assert_eq!(m.count(), 1, "{:?}", m.restart_sigmas);
        let m = find_periodic_minimizers(&r, lv(0, 1), 8, 7, &opts).unwrap();
        assert!(m.foliated);
    }

    #[test]
    fn orbit_parameterization_is_equivariant() {
        let e = MetricSpec::euclidean();
        let m = find_periodic_minimizers(&e, lv(2, 1), 8, 1, &MinimizeOptions::default()).unwrap();
        let o = m.best();
        let s = 0.37;
        let d = o.at(s + o.sigma()) - o.at(s) - Vec2::new(2.0, 1.0);
        assert!(d.norm() < 1e-12);
    }
}
