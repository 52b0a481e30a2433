//! Acceptance criteria 1 to 10, one PASS/FAIL line each.

use std::time::Instant;

use snlab::diagnostics::{broken_curve, fit_models, floquet_of_class, geometric_grid, profile_defect_with, DefectMode, Model};
use snlab::geodesic_flow::{flow_map, integrate_geodesic, linearize_along, GeodesicState, DEFAULT_STEP};
use snlab::loop_minimizer::find_periodic_minimizers;
use snlab::rational_approx::{
    convergents, golden_conjugate, pi_minus_three, pick_count, primitive_vectors, sqrt2_minus_one, LatticeVector,
};
use snlab::rotational_oracle::oracle_sigma;
use snlab::stable_norm::{build_table, forward_derivative_at_lattice, sigma_lattice, OracleSource, TableOptions};
use snlab::{FourierSeries, MetricSpec, TangentSample, Vec2};

type Outcome = Result<String, String>;

fn lv(a: i64, b: i64) -> LatticeVector {
    LatticeVector::new(a, b).unwrap()
}

fn rotational_factor() -> FourierSeries {
    FourierSeries::one_dim(2.0, &[(1, 1.0, 0.0)])
}

fn conformal() -> MetricSpec {
    MetricSpec::conformal(FourierSeries::two_dim(2.0, &[([1, 0], 0.3, 0.0), ([0, 1], 0.2, 0.1), ([1, 1], 0.1, 0.0)]))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn flat_identity() -> Outcome {
    let metrics = [
        ("euclidean", MetricSpec::euclidean()),
        ("anisotropic", MetricSpec::flat([[2.5, 0.4], [0.4, 0.8]], [0.0, 0.0])),
        ("drift", MetricSpec::flat([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.0])),
    ];
    let mut worst = 0.0f64;
    let mut count = 0;
    for (name, spec) in &metrics {
        let table = build_table(spec, 7.0, &TableOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        for e in &table.entries {
            if !e.ok() {
                return Err(format!("{name}: entry {} failed", e.z));
            }
            let f = spec.eval_f(&TangentSample::new(Vec2::zeros(), e.z.to_vec2())).unwrap();
            worst = worst.max((e.sigma - f).abs() / f);
            count += 1;
        }
    }
    check(worst <= 2e-5, format!("{count} entries, max relative error {worst:.2e}"))
}

fn oracle_equivalence() -> Outcome {
    let spec = MetricSpec::standard_rotational();
    let table = build_table(&spec, 5.0, &TableOptions::default()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for e in &table.entries {
        if !e.ok() {
            return Err(format!("entry {} failed", e.z));
        }
        let o = oracle_sigma(&rotational_factor(), e.z.to_vec2()).map_err(|e| e.to_string())?;
        worst = worst.max((e.sigma - o).abs() / o);
    }
    check(worst <= 2e-3, format!("{} classes, max relative error {worst:.2e}", table.entries.len()))
}

fn hyperbolic_direction() -> Outcome {
    let spec = MetricSpec::standard_rotational();
    let f = floquet_of_class(&spec, lv(1, 0), &TableOptions::default()).map_err(|e| e.to_string())?;
    let (mu, im) = f.multipliers[0];
    if !(f.is_hyperbolic() && im == 0.0 && mu > 1.0 + 1e-4) {
        return Err(format!("(1,0) multiplier {mu} + {im}i, {:?}", f.classification));
    }
    let src = OracleSource::new(&spec).map_err(|e| e.to_string())?;
    let grid = geometric_grid(0.2, 0.5, 9);
    let profile =
        profile_defect_with(&src, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), &grid, DefectMode::Sigma).map_err(|e| e.to_string())?;
    let scaled: Vec<f64> = profile.uncensored().map(|s| s.value / s.t.powi(4)).collect();
    let decreasing = scaled.len() >= 4 && scaled.windows(2).all(|w| w[1] < w[0]);
    let fit = fit_models(&profile);
    let (rq, re) = match (&fit.quadratic, &fit.exponential) {
        (Some(q), Some(e)) => (q.residual, e.residual),
        _ => return Err(format!("fits unavailable: {}", fit.reason)),
    };
    check(
        decreasing && fit.model == Model::ExponentialFlat && rq >= 10.0 * re,
        format!(
            "mu = {mu:.6}, {} uncensored, defect/t^4 {:.2e} -> {:.2e}, residuals quad {rq:.2e} exp {re:.2e}",
            scaled.len(),
            scaled.first().copied().unwrap_or(f64::NAN),
            scaled.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

fn kam_direction() -> Outcome {
    let spec = MetricSpec::standard_rotational();
    let src = OracleSource::new(&spec).map_err(|e| e.to_string())?;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let grid = geometric_grid(0.1, 10f64.powf(-1.0 / 3.0), 7);
    let mut out = Vec::new();
    for xi in [Vec2::new(0.0, 1.0), Vec2::new(g, 1.0), Vec2::new(-g, 1.0)] {
        let across = Vec2::new(-xi[1], xi[0]);
        let p = profile_defect_with(&src, xi, across, &grid, DefectMode::Beta).map_err(|e| e.to_string())?;
        let c: Vec<f64> = p.uncensored().map(|s| s.value / (s.t * s.t)).collect();
        if c.len() != grid.len() {
            return Err(format!("ξ = ({:.3}, 1): {} of {} samples resolved", xi[0], c.len(), grid.len()));
        }
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(0.0, f64::max);
        if !(lo > 0.0 && hi / lo <= 50.0) {
            return Err(format!("ξ = ({:.3}, 1): band [{lo:.3e}, {hi:.3e}]", xi[0]));
        }
        out.push(format!("{:.2}", hi / lo));
    }
    Ok(format!("band ratios {}", out.join(", ")))
}

fn forward_derivative() -> Outcome {
    let opts = TableOptions::default();
    let ns = [2, 4, 8, 16];
    let e = forward_derivative_at_lattice(&MetricSpec::euclidean(), lv(1, 0), lv(0, 1), &ns, &opts).map_err(|e| e.to_string())?;
    let worst = e.trace.iter().map(|&(n, d)| (d - (((n * n + 1) as f64).sqrt() - n as f64)).abs()).fold(0.0, f64::max);
    if worst > 1e-5 {
        return Err(format!("euclidean d_n off by {worst:.2e}"));
    }
    let metrics = [
        ("euclidean", MetricSpec::euclidean()),
        ("drift", MetricSpec::flat([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.0])),
        ("rotational", MetricSpec::standard_rotational()),
        ("conformal", conformal()),
    ];
    for (name, spec) in &metrics {
        let d = forward_derivative_at_lattice(spec, lv(1, 0), lv(0, 1), &ns, &opts).map_err(|e| format!("{name}: {e}"))?;
        if !d.monotone {
            return Err(format!("{name}: trace {:?} ± {:?} not monotone", d.trace, d.trace_err));
        }
    }
    Ok(format!("euclidean error {worst:.2e}, monotone for {} metrics", metrics.len()))
}

fn pick_identity() -> Outcome {
    let zs = primitive_vectors(10.0);
    for z in &zs {
        let k = pick_count(*z).map_err(|e| e.to_string())?;
        if k != z.norm_sq() as u64 {
            return Err(format!("k{z} = {k}"));
        }
    }
    Ok(format!("{} primitive classes", zs.len()))
}

fn continued_fractions() -> Outcome {
    let mut total = 0;
    for (name, omega) in [("golden", golden_conjugate()), ("sqrt2", sqrt2_minus_one()), ("pi", pi_minus_three())] {
        let cs = convergents(&omega, 1000).map_err(|e| e.to_string())?;
        if let Some(c) = cs.iter().find(|c| !c.within_bound) {
            return Err(format!("{name}: {}/{} violates the bound", c.p, c.q));
        }
        if !cs.windows(2).all(|w| w[0].side == -w[1].side && w[0].side != 0) {
            return Err(format!("{name}: sides do not alternate"));
        }
        total += cs.len();
    }
    Ok(format!("{total} convergents"))
}

fn broken_curve_certificate() -> Outcome {
    let spec = MetricSpec::standard_rotational();
    let opts = TableOptions::default();
    let set = find_periodic_minimizers(&spec, lv(1, 0), opts.restarts, opts.seed, &opts.minimize).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for side in [1, -1] {
        let (direct, _) = sigma_lattice(&spec, lv(8, side), &opts).map_err(|e| e.to_string())?;
        let bc = broken_curve(&spec, &set, side, 8, &[0, 8]).map_err(|e| e.to_string())?;
        let tol = direct.err.max(1e-9);
        let gap = bc.length - direct.value;
        if !(bc.class_ok && gap.abs() <= 1e-2 && gap >= -2.0 * tol) {
            return Err(format!("side {side}: length {} vs σ {} ± {tol:.1e}", bc.length, direct.value));
        }
        out.push(format!("{gap:.2e}"));
    }
    Ok(format!("length − σ(8,±1) = {}", out.join(", ")))
}

fn strict_subadditivity() -> Outcome {
    let spec = MetricSpec::standard_rotational();
    let opts = TableOptions::default();
    let s = |z| sigma_lattice(&spec, z, &opts).map(|(e, _)| e.value).map_err(|e| e.to_string());
    let gap = s(lv(1, 0))? + s(lv(0, 1))? - s(lv(1, 1))?;
    check(gap > 1e-3, format!("σ(1,0) + σ(0,1) − σ(1,1) = {gap:.6}"))
}

fn numerical_hygiene() -> Outcome {
    let rot = MetricSpec::standard_rotational();
    let conf = conformal();
    let x0 = Vec2::new(0.1, 0.3);
    let v0 = Vec2::new(0.8, 0.6);
    let mut drift = 0.0f64;
    for spec in [&rot, &conf] {
        let tr = integrate_geodesic(spec, GeodesicState::new(x0, v0), 20.0, DEFAULT_STEP).map_err(|e| e.to_string())?;
        drift = drift.max(tr.energy_drift(spec));
    }
    let opts = TableOptions::default();
    let mut det = 0.0f64;
    for z in [lv(1, 0), lv(0, 1)] {
        let f = floquet_of_class(&rot, z, &opts).map_err(|e| e.to_string())?;
        det = det.max(f.det_residual);
    }
    let tr = integrate_geodesic(&conf, GeodesicState::new(x0, v0), 3.0, DEFAULT_STEP).map_err(|e| e.to_string())?;
    let lin = linearize_along(&conf, &tr).map_err(|e| e.to_string())?;
    det = det.max(lin.det_deviation());

    let reference = flow_map(&conf, x0, v0, 2.0, 0.01 / 16.0).map_err(|e| e.to_string())?;
    let err = |h: f64| -> Result<f64, String> {
        let (x, v) = flow_map(&conf, x0, v0, 2.0, h).map_err(|e| e.to_string())?;
        Ok((x - reference.0).norm() + (v - reference.1).norm())
    };
    let ratio = err(0.08)? / err(0.04)?;

    let mut fd_err = 0.0f64;
    let h = 1e-5;
    for (x, v) in [([0.13, 0.4], [0.7, -0.2]), ([0.61, 0.05], [-1.0, 2.0]), ([0.9, 0.77], [0.3, 0.3])] {
        for spec in [&rot, &conf] {
            let s = TangentSample::new(Vec2::from(x), Vec2::from(v));
            let (fx, fv) = spec.eval_df(&s).map_err(|e| e.to_string())?;
            for i in 0..2 {
                let mut d = Vec2::zeros();
                d[i] = h;
                let f = |x: Vec2, v: Vec2| spec.eval_f(&TangentSample::new(x, v)).unwrap();
                let dx = (f(s.x + d, s.v) - f(s.x - d, s.v)) / (2.0 * h);
                let dv = (f(s.x, s.v + d) - f(s.x, s.v - d)) / (2.0 * h);
                fd_err = fd_err.max((dx - fx[i]).abs() / fx[i].abs().max(1.0));
                fd_err = fd_err.max((dv - fv[i]).abs() / fv[i].abs().max(1.0));
            }
        }
    }
    check(
        drift <= 1e-7 && det <= 1e-6 && (8.0..=32.0).contains(&ratio) && fd_err <= 1e-6,
        format!("energy drift {drift:.1e}, |det − 1| {det:.1e}, order ratio {ratio:.2}, derivative error {fd_err:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("flat identity", flat_identity),
        ("rotational oracle equivalence", oracle_equivalence),
        ("hyperbolic rational direction", hyperbolic_direction),
        ("KAM-like transverse direction", kam_direction),
        ("forward-derivative limit", forward_derivative),
        ("Pick identity", pick_identity),
        ("continued fractions", continued_fractions),
        ("broken-curve certificate", broken_curve_certificate),
        ("strict subadditivity", strict_subadditivity),
        ("numerical hygiene", numerical_hygiene),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
