//! Lattice vectors, continued-fraction convergents and lattice point counts.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metrics::Vec2;

/// Nonzero integer vector, i.e. a homotopy class of closed curves on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i64; 2]", into = "[i64; 2]")]
pub struct LatticeVector {
    a: i64,
    b: i64,
}

impl TryFrom<[i64; 2]> for LatticeVector {
    type Error = Error;
    fn try_from(v: [i64; 2]) -> Result<Self> {
        LatticeVector::new(v[0], v[1])
    }
}

impl From<LatticeVector> for [i64; 2] {
    fn from(z: LatticeVector) -> Self {
        [z.a, z.b]
    }
}

impl fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

impl LatticeVector {
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if a == 0 && b == 0 {
            return domain("the zero class has no closed geodesics");
        }
        Ok(LatticeVector { a, b })
    }

    pub fn a(&self) -> i64 {
        self.a
    }

    pub fn b(&self) -> i64 {
        self.b
    }

    pub fn gcd(&self) -> i64 {
        self.a.gcd(&self.b)
    }

    pub fn is_primitive(&self) -> bool {
        self.gcd() == 1
    }

    /// Primitive vector on the same ray together with the multiplicity.
    pub fn primitive_part(&self) -> (LatticeVector, i64) {
        let g = self.gcd();
        (LatticeVector { a: self.a / g, b: self.b / g }, g)
    }

    pub fn perp(&self) -> LatticeVector {
        LatticeVector { a: -self.b, b: self.a }
    }

    pub fn norm_sq(&self) -> i64 {
        self.a * self.a + self.b * self.b
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn to_vec2(&self) -> Vec2 {
        Vec2::new(self.a as f64, self.b as f64)
    }

    pub fn dot(&self, o: &LatticeVector) -> i64 {
        self.a * o.a + self.b * o.b
    }

    pub fn scaled(&self, k: i64) -> Result<LatticeVector> {
        LatticeVector::new(self.a * k, self.b * k)
    }

    pub fn plus(&self, o: &LatticeVector) -> Result<LatticeVector> {
        LatticeVector::new(self.a + o.a, self.b + o.b)
    }

    pub fn neg(&self) -> LatticeVector {
        LatticeVector { a: -self.a, b: -self.b }
    }

    /// Integer vector `w` with `⟨w, z^⊥⟩ = 1`, so `(z, w)` is a positively
    /// oriented lattice basis. Requires a primitive class.
    pub fn complement(&self) -> Result<LatticeVector> {
        if !self.is_primitive() {
            return Err(Error::Precondition(format!("{self} is not primitive")));
        }
        // ⟨w, z^⊥⟩ = -w₁ b + w₂ a = 1
        let e = i64::extended_gcd(&self.a, &self.b);
        // e.x * a + e.y * b = ±1
        let s = e.gcd.signum();
        let w = LatticeVector { a: -e.y * s, b: e.x * s };
        debug_assert_eq!(w.dot(&self.perp()), 1);
        Ok(w)
    }

    /// Angle in `[0, 2π)`.
    pub fn angle(&self) -> f64 {
        let t = (self.b as f64).atan2(self.a as f64);
        if t < 0.0 {
            t + std::f64::consts::TAU
        } else {
            t
        }
    }
}

/// `z^⊥ = (−z₂, z₁)`.
pub fn perp(z: LatticeVector) -> LatticeVector {
    z.perp()
}

/// All primitive vectors with `0 < |z| ≤ q`, both orientations, sorted by angle.
pub fn primitive_vectors(q: f64) -> Vec<LatticeVector> {
    let r = q.floor() as i64;
    let mut out = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            if (a, b) == (0, 0) || ((a * a + b * b) as f64) > q * q {
                continue;
            }
            if a.gcd(&b) == 1 {
                out.push(LatticeVector { a, b });
            }
        }
    }
    out.sort_by(|x, y| x.angle().total_cmp(&y.angle()).then(x.norm_sq().cmp(&y.norm_sq())));
    out
}

/// `1 + #(ℤ² ∩ interior of the square spanned by z and z^⊥)`.
pub fn pick_count(z: LatticeVector) -> Result<u64> {
    if !z.is_primitive() {
        return Err(Error::Precondition(format!("{z} is not primitive")));
    }
    let zp = z.perp();
    let n2 = z.norm_sq();
    let xs = [0, z.a, zp.a, z.a + zp.a];
    let ys = [0, z.b, zp.b, z.b + zp.b];
    let (x0, x1) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
    let (y0, y1) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
    let mut count = 0u64;
    for x in x0..=x1 {
        for y in y0..=y1 {
            let s = x * z.a + y * z.b;
            let t = x * zp.a + y * zp.b;
            if s > 0 && s < n2 && t > 0 && t < n2 {
                count += 1;
            }
        }
    }
    Ok(1 + count)
}

/// Convergent `p/q` of a target slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergent {
    pub p: i64,
    pub q: i64,
    /// `|ω − p/q|` rounded to double precision.
    pub error: f64,
    /// Sign of `ω − p/q` (`0` for an exact representation).
    pub side: i8,
    /// Exact check of `|ω − p/q| ≤ 1/(q(q+1))`.
    pub within_bound: bool,
}

fn parse_decimal(s: &str) -> BigRational {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("decimal literal");
    BigRational::new(digits, BigInt::from(10u32).pow(frac.len() as u32))
}

/// `(√5 − 1)/2` to 50 decimal digits (about 166 bits).
pub fn golden_conjugate() -> BigRational {
    parse_decimal("0.61803398874989484820458683436563811772030917980576")
}

/// `√2 − 1` to 50 decimal digits.
pub fn sqrt2_minus_one() -> BigRational {
    parse_decimal("0.41421356237309504880168872420969807856967187537694")
}

/// `π − 3` to 50 decimal digits.
pub fn pi_minus_three() -> BigRational {
    parse_decimal("0.14159265358979323846264338327950288419716939937510")
}

/// Exact rational stand-in for a double.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Domain(format!("{x} is not finite")))
}

/// Continued-fraction convergents of `ω` with denominator at most `q_max`.
///
/// The zeroth convergent is dropped when the first partial quotient is 1: it
/// then shares its denominator with the next convergent, which is strictly
/// closer, and does not satisfy the `1/(q(q+1))` bound.
pub fn convergents(omega: &BigRational, q_max: i64) -> Result<Vec<Convergent>> {
    if q_max < 1 {
        return domain("q_max must be at least 1");
    }
    let mut out = Vec::new();
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let mut a0 = omega.floor();
    let mut x = omega.clone();
    let mut p = a0.to_integer();
    let mut q = BigInt::one();
    let qmax = BigInt::from(q_max);
    let mut pending: Option<(BigInt, BigInt)> = Some((p.clone(), q.clone()));
    loop {
        let frac = &x - &a0;
        let next = if frac.is_zero() {
            None
        } else {
            x = frac.recip();
            a0 = x.floor();
            let a = a0.to_integer();
            let pn = &a * &p + &p_prev;
            let qn = &a * &q + &q_prev;
            Some((pn, qn))
        };
        if let Some((pp, qq)) = pending.take() {
            let same_q = matches!(&next, Some((_, qn)) if *qn == qq);
            if !same_q {
                out.push(make_convergent(omega, &pp, &qq)?);
            }
        }
        match next {
            Some((pn, qn)) if qn <= qmax => {
                p_prev = std::mem::replace(&mut p, pn);
                q_prev = std::mem::replace(&mut q, qn);
                pending = Some((p.clone(), q.clone()));
            }
            _ => break,
        }
    }
    Ok(out)
}

fn make_convergent(omega: &BigRational, p: &BigInt, q: &BigInt) -> Result<Convergent> {
    let r = BigRational::new(p.clone(), q.clone());
    let diff = omega - &r;
    let bound = BigRational::new(BigInt::one(), q * (q + BigInt::one()));
    let to_i64 = |v: &BigInt| v.to_i64().ok_or_else(|| Error::Domain("convergent exceeds i64".into()));
    Ok(Convergent {
        p: to_i64(p)?,
        q: to_i64(q)?,
        error: diff.abs().to_f64().unwrap_or(f64::NAN),
        side: if diff.is_zero() {
            0
        } else if diff.is_positive() {
            1
        } else {
            -1
        },
        within_bound: diff.abs() <= bound,
    })
}

/// Primitive class on the ray of `ξ` with `|z| ≤ q_max`, if the slope of `ξ`
/// agrees with it to within `tol` (angle in radians).
pub fn rational_direction(xi: Vec2, q_max: i64, tol: f64) -> Option<LatticeVector> {
    let n = xi.norm();
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    let swap = xi[1].abs() > xi[0].abs();
    let (big, small) = if swap { (xi[1], xi[0]) } else { (xi[0], xi[1]) };
    let r = rational_from_f64(small / big).ok()?;
    let conv = convergents(&r, q_max).ok()?;
    for c in conv.iter().rev() {
        let (mut a, mut b) = (big.signum() as i64 * c.q, big.signum() as i64 * c.p);
        if swap {
            std::mem::swap(&mut a, &mut b);
        }
        let z = LatticeVector::new(a, b).ok()?;
        let zv = z.to_vec2();
        let ang = (zv[0] * xi[1] - zv[1] * xi[0]).atan2(zv.dot(&xi)).abs();
        if ang <= tol && z.norm() <= q_max as f64 * std::f64::consts::SQRT_2 {
            return Some(z);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_primitive_sets() {
        let v1: Vec<_> = primitive_vectors(1.0).into_iter().map(<[i64; 2]>::from).collect();
        assert_eq!(v1, vec![[1, 0], [0, 1], [-1, 0], [0, -1]]);
        let v2 = primitive_vectors(2.0);
        assert_eq!(v2.len(), 8);
        assert!(v2.contains(&LatticeVector::new(1, -1).unwrap()));
    }

    #[test]
    fn primitive_count_matches_brute_force() {
        let mut brute = 0;
        for a in -10i64..=10 {
            for b in -10i64..=10 {
                if a * a + b * b <= 100 && a.gcd(&b) == 1 {
                    brute += 1;
                }
            }
        }
        assert_eq!(primitive_vectors(10.0).len(), brute);
    }

    #[test]
    fn pick_examples() {
        assert_eq!(pick_count(LatticeVector::new(1, 0).unwrap()).unwrap(), 1);
        assert_eq!(pick_count(LatticeVector::new(1, 1).unwrap()).unwrap(), 2);
        assert_eq!(pick_count(LatticeVector::new(2, 1).unwrap()).unwrap(), 5);
        assert!(pick_count(LatticeVector::new(2, 2).unwrap()).is_err());
    }

    #[test]
    fn perp_examples() {
        let z = LatticeVector::new(2, 1).unwrap();
        assert_eq!(<[i64; 2]>::from(z.perp()), [-1, 2]);
        assert_eq!(<[i64; 2]>::from(perp(LatticeVector::new(1, 0).unwrap())), [0, 1]);
        assert_eq!(z.dot(&z.perp()), 0);
    }

    #[test]
    fn zero_class_rejected() {
        assert!(LatticeVector::new(0, 0).is_err());
        assert!(serde_json::from_str::<LatticeVector>("[0,0]").is_err());
    }

    #[test]
    fn complement_is_unimodular() {
        for z in primitive_vectors(9.0) {
            let w = z.complement().unwrap();
            assert_eq!(w.dot(&z.perp()), 1, "{z}");
        }
    }

    #[test]
    fn golden_convergents() {
        let c = convergents(&golden_conjugate(), 10).unwrap();
        let pq: Vec<_> = c.iter().map(|c| (c.p, c.q)).collect();
        for want in [(1, 2), (2, 3), (3, 5), (5, 8)] {
            assert!(pq.contains(&want), "{pq:?}");
        }
        let c35 = c.iter().find(|c| c.q == 5).unwrap();
        assert!((c35.error - 0.018_033_988_749_894_85).abs() < 1e-15);
        assert!(c35.error <= 1.0 / 30.0);
    }

    #[test]
    fn rational_target_terminates() {
        let third = BigRational::new(BigInt::from(1), BigInt::from(3));
        let c = convergents(&third, 100).unwrap();
        assert_eq!(c.last().map(|c| (c.p, c.q, c.side)), Some((1, 3, 0)));
        assert_eq!(c.iter().filter(|c| c.side == 0).count(), 1);
    }

    #[test]
    fn direction_recognition() {
        let z = rational_direction(Vec2::new(2.0, 1.0), 64, 1e-12).unwrap();
        assert_eq!(<[i64; 2]>::from(z), [2, 1]);
        let z = rational_direction(Vec2::new(0.0, -3.0), 64, 1e-12).unwrap();
        assert_eq!(<[i64; 2]>::from(z), [0, -1]);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        assert!(rational_direction(Vec2::new(1.0, g), 64, 1e-12).is_none());
    }
}
