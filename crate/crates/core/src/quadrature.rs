//! Adaptive Gauss–Kronrod (7/15) and fixed Gauss–Legendre rules.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Quad {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Quad { value: k * h, error: ((k - g) * h).abs() }
}

/// Adaptive 15-point Gauss–Kronrod integration of `f` over `[a, b]`, bisecting
/// the interval with the largest error estimate until the total estimate drops
/// below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quad> {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0 });
    }
    let first = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, first)];
    let mut total = first;
    loop {
        if !total.value.is_finite() {
            return Err(Error::Integration("non-finite integrand".into()));
        }
        if total.error <= abs_tol.max(rel_tol * total.value.abs()) {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Integration(format!("quadrature did not reach tolerance: error {} for value {}", total.error, total.value)));
        }
        let (worst, _) = parts.iter().enumerate().max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error)).expect("non-empty");
        let (l, r, q) = parts.swap_remove(worst);
        let m = 0.5 * (l + r);
        if m <= l || m >= r {
            // interval exhausted at double resolution; accept what we have
            return Ok(total);
        }
        let ql = gk15(&mut f, l, m);
        let qr = gk15(&mut f, m, r);
        total.value += ql.value + qr.value - q.value;
        parts.push((l, m, ql));
        parts.push((m, r, qr));
        // recompute the error sum to avoid drift from repeated subtraction
        total.error = parts.iter().map(|p| p.2.error).sum();
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_integrals() {
        let q = integrate(|x| x.exp(), 0.0, 1.0, 0.0, 1e-14).unwrap();
        assert!((q.value - (1f64.exp() - 1.0)).abs() < 1e-14);
        let q = integrate(|x| 1.0 / (1.0 + 1e4 * x * x), -1.0, 1.0, 1e-14, 1e-13).unwrap();
        let exact = 2.0 * (100f64).atan() / 100.0;
        assert!((q.value - exact).abs() < 1e-12);
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in [1, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            let deg = 2 * n - 1;
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - exact).abs() < 1e-13, "n={n}: {s} vs {exact}");
        }
    }
}
