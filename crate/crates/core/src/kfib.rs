//! k-generalized Fibonacci numbers: exact terms, the dominant root of the
//! characteristic polynomial, and the approximation `F_n ~ f_k(alpha) alpha^(n-1)`.

use std::collections::VecDeque;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::realball::{BallError, Dyadic, Mag, RealBall, Truth};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KFibError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Ball(#[from] BallError),
}

/// Sequential generator of `F_n^(k)` starting at `n = 2 - k`.
///
/// Uses `F_n = 2 F_(n-1) - F_(n-k-1)` once the window is primed, so each step
/// costs one shift and one subtraction regardless of `k`.
#[derive(Debug, Clone)]
pub struct FibSeq {
    k: u32,
    n: i64,
    window: VecDeque<BigInt>,
}

impl FibSeq {
    pub fn new(k: u32) -> Self {
        assert!(k >= 2, "k must be at least 2");
        FibSeq { k, n: 2 - k as i64, window: VecDeque::with_capacity(k as usize + 2) }
    }

    /// Index of the term returned by the next call to `next`.
    pub fn position(&self) -> i64 {
        self.n
    }
}

impl Iterator for FibSeq {
    type Item = (i64, BigInt);

    fn next(&mut self) -> Option<(i64, BigInt)> {
        let n = self.n;
        let v = if n <= 0 {
            BigInt::zero()
        } else if n <= 2 {
            BigInt::one()
        } else {
            let prev = self.window.back().expect("window primed");
            let old = if self.window.len() > self.k as usize {
                self.window.front().expect("window primed").clone()
            } else {
                BigInt::zero()
            };
            (prev << 1usize) - old
        };
        self.window.push_back(v.clone());
        if self.window.len() > self.k as usize + 1 {
            self.window.pop_front();
        }
        self.n += 1;
        Some((n, v))
    }
}

fn check_index(k: u32, n: i64) -> Result<(), KFibError> {
    if k < 2 {
        return Err(KFibError::Domain(format!("k = {k} < 2")));
    }
    if n < 2 - k as i64 {
        return Err(KFibError::Domain(format!("n = {n} < 2 - k")));
    }
    Ok(())
}

/// Exact `F_n^(k)` for `n >= 2 - k`.
pub fn fib_at(k: u32, n: i64) -> Result<BigInt, KFibError> {
    check_index(k, n)?;
    if n <= 0 {
        return Ok(BigInt::zero());
    }
    if n <= k as i64 + 1 {
        return Ok(BigInt::one() << (n - 2).max(0) as usize);
    }
    let (_, v) = FibSeq::new(k)
        .find(|(i, _)| *i == n)
        .expect("sequence is unbounded");
    Ok(v)
}

/// `[F_lo, ..., F_hi]`.
pub fn fib_block(k: u32, n_lo: i64, n_hi: i64) -> Result<Vec<BigInt>, KFibError> {
    check_index(k, n_lo)?;
    if n_lo > n_hi {
        return Err(KFibError::Domain(format!("empty block [{n_lo}, {n_hi}]")));
    }
    Ok(FibSeq::new(k)
        .skip_while(|(i, _)| *i < n_lo)
        .take_while(|(i, _)| *i <= n_hi)
        .map(|(_, v)| v)
        .collect())
}

/// `x^(k+1) - 2 x^k + 1`, which is `(x - 1)` times the characteristic polynomial.
fn psi_times(x: &RealBall, k: u32) -> Result<RealBall, BallError> {
    let xk = x.pow_int(k as i64)?;
    Ok(xk.mul(x).sub(&xk.mul_pow2(1)).add(&RealBall::one(x.precision())))
}

/// Dominant root data for a fixed `k`.
#[derive(Debug, Clone)]
pub struct KFibContext {
    pub k: u32,
    pub alpha: RealBall,
    pub fk_alpha: RealBall,
    pub log_alpha: RealBall,
}

/// `f_k(z) = (z - 1) / (2 + (k + 1)(z - 2))`.
pub fn f_k(k: u32, z: &RealBall) -> Result<RealBall, BallError> {
    let p = z.precision();
    let num = z.sub(&RealBall::one(p));
    let den = RealBall::from_int(2, p).add(&z.sub(&RealBall::from_int(2, p)).mul_int(k as i64 + 1));
    num.div(&den)
}

fn alpha_lower_bound(k: u32, prec: u32) -> RealBall {
    // 2 (1 - 2^-k)
    RealBall::from_int(2, prec).sub(&RealBall::one(prec).mul_pow2(1 - k as i64))
}

/// Certified enclosure of the dominant root with radius about `2^-(prec+k)`;
/// the extra `k` bits keep the ball well inside `(2 - 2^(1-k), 2)`.
pub fn dominant_root(k: u32, prec: u32) -> Result<RealBall, KFibError> {
    if k < 2 {
        return Err(KFibError::Domain(format!("k = {k} < 2")));
    }
    let target = prec as i64 + k as i64;
    let wp = prec + 2 * k + 64;
    let lo0 = alpha_lower_bound(k, wp);
    let two = RealBall::from_int(2, wp);

    // Bisection on exact dyadic points until the bracket is 2^-(k+48) wide.
    let mut lo = lo0.midpoint();
    let mut hi = two.midpoint();
    let bisect_bits = k as i64 + 48;
    let coarse = (k + 128).min(wp);
    loop {
        let width = hi.sub(&lo);
        if width.m.bits() as i64 + width.e <= -bisect_bits {
            break;
        }
        let mid = Dyadic::new(lo.add(&hi).m, lo.add(&hi).e - 1);
        let v = psi_times(&RealBall::from_dyadic(&mid, coarse), k)?;
        if v.is_negative() {
            lo = mid;
        } else if v.is_positive() {
            hi = mid;
        } else {
            break;
        }
    }

    // Newton polishing on midpoints, then certify a sign change.
    let mut x = RealBall::from_dyadic(&Dyadic::new(lo.add(&hi).m, lo.add(&hi).e - 1), wp);
    let kk = k as i64;
    for _ in 0..64 {
        let xk1 = x.pow_int(kk - 1)?;
        let xk = xk1.mul(&x);
        let p = xk.mul(&x).sub(&xk.mul_pow2(1)).add(&RealBall::one(wp));
        let dp = xk.mul_int(kk + 1).sub(&xk1.mul_int(2 * kk));
        let step = p.div(&dp)?;
        let next = x.sub(&step);
        x = RealBall::from_dyadic(&next.midpoint(), wp);
        let small = step
            .mag_upper()
            .log2_ceil()
            .is_none_or(|e| e < -target - 8);
        if small {
            break;
        }
    }
    let h = Mag::pow2(-target - 2).to_dyadic();
    let mid = x.midpoint();
    let a = mid.sub(&h);
    let b = mid.add(&h);
    let pa = psi_times(&RealBall::from_dyadic(&a, wp), k)?;
    let pb = psi_times(&RealBall::from_dyadic(&b, wp), k)?;
    let inside = lo0.lt(&RealBall::from_dyadic(&a, wp)).is_true() && b <= two.midpoint();
    if !(pa.is_negative() && pb.is_positive() && inside) {
        return Err(BallError::PrecisionExhausted { bits: prec }.into());
    }
    Ok(RealBall::from_endpoints(&a, &b, prec + k + 8))
}

impl KFibContext {
    pub fn new(k: u32, prec: u32) -> Result<Self, KFibError> {
        let alpha = dominant_root(k, prec)?;
        let fk_alpha = f_k(k, &alpha)?;
        let log_alpha = alpha.log()?;
        Ok(KFibContext { k, alpha, fk_alpha, log_alpha })
    }

    pub fn precision(&self) -> u32 {
        self.alpha.precision()
    }

    /// Certifies `2(1 - 2^-k) < alpha < 2`, a sign change of the
    /// characteristic polynomial across the ball, and `1/2 < f_k(alpha) < 3/4`.
    pub fn check_invariants(&self) -> Truth {
        let p = self.precision() + self.k + 64;
        let lo = alpha_lower_bound(self.k, p);
        let two = RealBall::from_int(2, p);
        let a = self.alpha.with_precision(p);
        let enclosed = lo.lt(&a).and(a.lt(&two));
        let sign = match (
            psi_times(&RealBall::from_dyadic(&a.lower(), p), self.k),
            psi_times(&RealBall::from_dyadic(&a.upper(), p), self.k),
        ) {
            (Ok(l), Ok(u)) => Truth::from_bool(l.is_negative() && u.is_positive()),
            _ => Truth::Unknown,
        };
        let half = RealBall::from_ratio(1, 2, p).expect("nonzero");
        let three_q = RealBall::from_ratio(3, 4, p).expect("nonzero");
        let f_range = half.lt(&self.fk_alpha).and(self.fk_alpha.lt(&three_q));
        enclosed.and(sign).and(f_range)
    }

    /// `f_k(alpha) alpha^(n-1)`.
    pub fn binet_approx(&self, n: i64) -> Result<RealBall, KFibError> {
        let p = self.precision() + 32;
        let a = self.alpha.with_precision(p);
        Ok(self.fk_alpha.with_precision(p).mul(&a.pow_int(n - 1)?))
    }

    /// `|F_n - f_k(alpha) alpha^(n-1)|`.
    pub fn binet_error(&self, n: i64) -> Result<RealBall, KFibError> {
        let f = fib_at(self.k, n)?;
        let approx = self.binet_approx(n)?;
        Ok(RealBall::from_int(f, approx.precision()).sub(&approx).abs())
    }

    /// Certifies `alpha^(n-2) <= F_n <= alpha^(n-1)`.
    pub fn power_bounds_check(&self, n: i64) -> Result<Truth, KFibError> {
        if n < 1 {
            return Err(KFibError::Domain(format!("n = {n} < 1")));
        }
        let p = self.precision() + 32;
        let a = self.alpha.with_precision(p);
        let f = RealBall::from_int(fib_at(self.k, n)?, p);
        let lower = a.pow_int(n - 2)?;
        let upper = a.pow_int(n - 1)?;
        Ok(lower.le(&f).and(f.le(&upper)))
    }
}

/// Exact check that `g(n) = 2^(n-2) - F_n` vanishes on `[2, k+1]`, equals 1 at
/// `k+2` and is strictly increasing on `[k+2, n_hi]`.
pub fn power2_gap_monotone(k: u32, n_hi: i64) -> Result<bool, KFibError> {
    if n_hi < k as i64 + 2 {
        return Err(KFibError::Domain(format!("n_hi = {n_hi} < k + 2")));
    }
    let mut prev: Option<BigInt> = None;
    for (n, f) in FibSeq::new(k).skip_while(|(i, _)| *i < 2) {
        if n > n_hi {
            break;
        }
        let g = (BigInt::one() << (n - 2) as usize) - f;
        if n <= k as i64 + 1 {
            if !g.is_zero() {
                return Ok(false);
            }
            continue;
        }
        if n == k as i64 + 2 && !g.is_one() {
            return Ok(false);
        }
        if let Some(p) = &prev {
            if &g <= p {
                return Ok(false);
            }
        }
        prev = Some(g);
    }
    Ok(true)
}

/// `zeta = F_n / 2^(n-2) - 1`, exact (a dyadic rational).
pub fn zeta_of(k: u32, n: i64, prec: u32) -> Result<RealBall, KFibError> {
    if k < 10 {
        return Err(KFibError::Domain(format!("k = {k} < 10")));
    }
    if n < 1 || (n as f64) >= 2f64.powf(k as f64 / 2.0) {
        return Err(KFibError::Domain(format!("n = {n} outside [1, 2^(k/2))")));
    }
    let f = fib_at(k, n)?;
    // F_n * 2^-(n-2) - 1, exactly.
    let q = Dyadic::new(f, 2 - n).sub(&Dyadic::new(BigInt::one(), 0));
    Ok(RealBall::from_dyadic(&q, prec.max(q.m.bits() as u32 + 1)))
}

/// Certifies `|zeta| < 5 / 2^(k/2)` by comparing squares exactly.
pub fn zeta_bound_holds(k: u32, n: i64) -> Result<Truth, KFibError> {
    let z = zeta_of(k, n, 64)?;
    let d = z.midpoint();
    // zeta^2 * 2^k < 25
    let sq = Dyadic::new(&d.m * &d.m, 2 * d.e + k as i64);
    Ok(Truth::from_bool(sq < Dyadic::new(BigInt::from(25), 0)))
}

/// A verified solution `F_n - 3^m = F_n1 - 3^m1 = c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub k: u32,
    pub n: u32,
    pub m: u32,
    pub n1: u32,
    pub m1: u32,
    #[serde(with = "crate::bigint_serde")]
    pub c: BigInt,
    #[serde(with = "crate::bigint_serde")]
    pub lhs: BigInt,
    #[serde(with = "crate::bigint_serde")]
    pub rhs: BigInt,
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain k-term sum, independent of the three-term shortcut.
    fn oracle(k: u32, n_hi: i64) -> Vec<BigInt> {
        let mut v: Vec<BigInt> = vec![BigInt::zero(); k as usize - 1];
        v.push(BigInt::one());
        while (v.len() as i64) < n_hi + k as i64 - 1 {
            let s: BigInt = v[v.len() - k as usize..].iter().sum();
            v.push(s);
        }
        v
    }

    #[test]
    fn first_terms_match_k_term_sum() {
        for k in 2..12 {
            let got = fib_block(k, 2 - k as i64, 60).unwrap();
            assert_eq!(got, oracle(k, 60), "k = {k}");
        }
    }

    #[test]
    fn literal_terms() {
        assert_eq!(fib_at(7, 1).unwrap(), BigInt::one());
        assert_eq!(fib_at(9, 10).unwrap(), BigInt::from(256));
        assert_eq!(fib_at(4, 8).unwrap(), BigInt::from(56));
        assert_eq!(
            fib_block(4, 1, 8).unwrap(),
            [1, 1, 2, 4, 8, 15, 29, 56].map(BigInt::from).to_vec()
        );
        assert_eq!(fib_block(6, 2, 2).unwrap(), vec![BigInt::one()]);
        assert_eq!(fib_block(5, 1, 10).unwrap().last(), Some(&BigInt::from(236)));
    }

    #[test]
    fn rejects_indices_below_domain() {
        assert!(fib_at(4, -3).is_err());
        assert!(fib_at(4, -2).is_ok());
        assert!(fib_block(4, 5, 3).is_err());
    }

    #[test]
    fn golden_ratio_context() {
        let ctx = KFibContext::new(2, 128).unwrap();
        let phi = RealBall::from_int(5, 200).sqrt().unwrap().add(&RealBall::one(200)).mul_pow2(-1);
        assert!(ctx.alpha.overlaps(&phi));
        assert!((ctx.alpha.to_f64() - 1.618_033_988_749_895).abs() < 1e-15);
        assert!((ctx.fk_alpha.to_f64() - 0.723_606_797_749_979).abs() < 1e-15);
        assert_eq!(ctx.check_invariants(), Truth::True);
    }

    #[test]
    fn root_enclosure_is_tight() {
        for k in [3u32, 4, 10, 57, 300] {
            let ctx = KFibContext::new(k, 256).unwrap();
            assert_eq!(ctx.check_invariants(), Truth::True, "k = {k}");
            assert!(ctx.alpha.radius().log2_ceil().unwrap() < -250);
        }
        let a4 = KFibContext::new(4, 128).unwrap().alpha.to_f64();
        assert!((a4 - 1.927_561_975_482_925).abs() < 1e-14);
    }

    #[test]
    fn binet_errors() {
        let c2 = KFibContext::new(2, 128).unwrap();
        let e = c2.binet_error(10).unwrap();
        assert!((e.to_f64() - 0.003_636_123).abs() < 1e-8);
        let c4 = KFibContext::new(4, 128).unwrap();
        let half = RealBall::from_f64(0.5, 128);
        assert!(c4.binet_error(2).unwrap().lt(&half).is_true());
        let c10 = KFibContext::new(10, 256).unwrap();
        assert!(c10.binet_error(200).unwrap().lt(&half).is_true());
    }

    #[test]
    fn power_bounds() {
        let c2 = KFibContext::new(2, 128).unwrap();
        assert_eq!(c2.power_bounds_check(1).unwrap(), Truth::True);
        let c4 = KFibContext::new(4, 128).unwrap();
        assert_eq!(c4.power_bounds_check(8).unwrap(), Truth::True);
        let c5 = KFibContext::new(5, 128).unwrap();
        assert_eq!(c5.power_bounds_check(10).unwrap(), Truth::True);
    }

    #[test]
    fn gap_to_powers_of_two() {
        assert!(power2_gap_monotone(4, 8).unwrap());
        assert!(power2_gap_monotone(4, 300).unwrap());
        assert!(power2_gap_monotone(17, 400).unwrap());
        let g = |n: i64| (BigInt::one() << (n - 2) as usize) - fib_at(4, n).unwrap();
        assert_eq!(g(5), BigInt::zero());
        assert_eq!(g(6), BigInt::one());
        assert_eq!(g(7), BigInt::from(3));
        assert_eq!(g(8), BigInt::from(8));
    }

    #[test]
    fn zeta_values() {
        for n in 2..=11 {
            assert!(zeta_of(10, n, 64).unwrap().contains(&Dyadic::zero()));
        }
        let z = zeta_of(10, 12, 64).unwrap();
        assert!(z.is_exact());
        assert!(z.contains(&Dyadic::new(BigInt::from(-1), -10)));
        assert_eq!(zeta_bound_holds(10, 12).unwrap(), Truth::True);
        assert_eq!(zeta_bound_holds(12, 30).unwrap(), Truth::True);
        assert!(zeta_of(9, 3, 64).is_err());
        assert!(zeta_of(10, 40, 64).is_err());
    }
}
