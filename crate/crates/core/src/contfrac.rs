//! Certified continued-fraction expansion of a real ball.
//!
//! Both endpoints of the ball are exact rationals, so Euclid's algorithm is
//! run on each of them in lockstep. A partial quotient is emitted only while
//! the two expansions agree; since the set of reals sharing a CF prefix is an
//! interval, every point of the ball then shares that prefix.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::realball::{Dyadic, RealBall, Truth};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContFracError {
    #[error("ball too wide: only {certified} quotients certified")]
    PrecisionExhausted { certified: usize },
    #[error("expansion of an exact rational terminates after {len} quotients")]
    RationalTerminated { len: usize },
    #[error("index {index} beyond the {certified} certified quotients")]
    IndexBeyondCertified { index: usize, certified: usize },
}

#[derive(Debug, Clone)]
pub struct CFExpansion {
    pub value: RealBall,
    pub quotients: Vec<BigInt>,
    /// `(p_l, q_l)` for every certified index.
    pub convergents: Vec<(BigInt, BigInt)>,
    /// True when the ball is an exact rational whose expansion is complete.
    pub terminated: bool,
}

/// Result of testing a fraction against the Legendre criterion.
#[derive(Debug, Clone)]
pub enum Location {
    /// `x/y = p_index / q_index`. `lower_bound` is `1/((a_{index+1} + 2) y^2)`,
    /// a lower bound for `|tau - x/y|`, when `a_{index+1}` is certified.
    Convergent { index: usize, lower_bound: Option<RealBall> },
    NotConvergent,
    Unknown,
}

fn to_ratio(d: &Dyadic) -> (BigInt, BigInt) {
    if d.e >= 0 {
        (&d.m << d.e as usize, BigInt::one())
    } else {
        (d.m.clone(), BigInt::one() << (-d.e) as usize)
    }
}

/// Expands `x` as far as its ball allows.
pub fn cf_expand_all(x: &RealBall) -> CFExpansion {
    let (mut an, mut ad) = to_ratio(&x.lower());
    let (mut bn, mut bd) = to_ratio(&x.upper());
    let exact = x.is_exact();
    let mut quotients = Vec::new();
    let mut terminated = false;
    loop {
        let (fa, ra) = an.div_mod_floor(&ad);
        if exact {
            quotients.push(fa);
            if ra.is_zero() {
                terminated = true;
                break;
            }
            an = std::mem::replace(&mut ad, ra);
            continue;
        }
        let (fb, rb) = bn.div_mod_floor(&bd);
        if fa != fb || ra.is_zero() || rb.is_zero() {
            break;
        }
        quotients.push(fa);
        an = std::mem::replace(&mut ad, ra);
        bn = std::mem::replace(&mut bd, rb);
    }
    let convergents = convergents_of(&quotients);
    CFExpansion { value: x.clone(), quotients, convergents, terminated }
}

/// Complete expansion of the exact rational `num/den` (`den > 0`).
pub fn cf_of_rational(num: &BigInt, den: &BigInt, prec: u32) -> CFExpansion {
    assert!(den.is_positive(), "denominator must be positive");
    let (mut a, mut b) = (num.clone(), den.clone());
    let mut quotients = Vec::new();
    while !b.is_zero() {
        let (f, r) = a.div_mod_floor(&b);
        quotients.push(f);
        a = std::mem::replace(&mut b, r);
    }
    let value = RealBall::from_ratio(num.clone(), den.clone(), prec).expect("positive denominator");
    let convergents = convergents_of(&quotients);
    CFExpansion { value, quotients, convergents, terminated: true }
}

/// `(p_l, q_l)` from the recurrences `p_l = a_l p_{l-1} + p_{l-2}`.
pub fn convergents_of(quotients: &[BigInt]) -> Vec<(BigInt, BigInt)> {
    let mut out = Vec::with_capacity(quotients.len());
    let (mut p2, mut q2) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    for a in quotients {
        let p = a * &p1 + &p2;
        let q = a * &q1 + &q2;
        out.push((p.clone(), q.clone()));
        p2 = std::mem::replace(&mut p1, p);
        q2 = std::mem::replace(&mut q1, q);
    }
    out
}

/// Expands `x` until the first convergent with `q_l > min_q`.
pub fn cf_expand(x: &RealBall, min_q: &BigInt) -> Result<CFExpansion, ContFracError> {
    let cf = cf_expand_all(x);
    if cf.first_q_above(min_q).is_some() {
        return Ok(cf);
    }
    Err(cf.shortfall())
}

/// Expands `x` so that index `l` is certified.
pub fn cf_expand_to_index(x: &RealBall, l: usize) -> Result<CFExpansion, ContFracError> {
    let cf = cf_expand_all(x);
    if cf.certified_len() > l {
        Ok(cf)
    } else {
        Err(cf.shortfall())
    }
}

impl CFExpansion {
    pub fn certified_len(&self) -> usize {
        self.quotients.len()
    }

    fn shortfall(&self) -> ContFracError {
        if self.terminated {
            ContFracError::RationalTerminated { len: self.quotients.len() }
        } else {
            ContFracError::PrecisionExhausted { certified: self.quotients.len() }
        }
    }

    fn check(&self, index: usize) -> Result<(), ContFracError> {
        if index < self.certified_len() {
            Ok(())
        } else {
            Err(ContFracError::IndexBeyondCertified { index, certified: self.certified_len() })
        }
    }

    pub fn quotient(&self, l: usize) -> Result<&BigInt, ContFracError> {
        self.check(l)?;
        Ok(&self.quotients[l])
    }

    pub fn p(&self, l: usize) -> Result<&BigInt, ContFracError> {
        self.check(l)?;
        Ok(&self.convergents[l].0)
    }

    pub fn q(&self, l: usize) -> Result<&BigInt, ContFracError> {
        self.check(l)?;
        Ok(&self.convergents[l].1)
    }

    /// Smallest index with `q_l > bound`.
    pub fn first_q_above(&self, bound: &BigInt) -> Option<usize> {
        self.convergents.iter().position(|(_, q)| q > bound)
    }

    /// Largest index with `q_l <= bound`.
    pub fn last_q_at_most(&self, bound: &BigInt) -> Option<usize> {
        let i = self.convergents.iter().position(|(_, q)| q > bound);
        match i {
            Some(0) => None,
            Some(i) => Some(i - 1),
            None if self.terminated => self.convergents.len().checked_sub(1),
            None => None,
        }
    }

    /// `max a_{l+1}` for `l` in `[0, l_hi]`, with the quotient index `l + 1`
    /// where it is attained (first occurrence).
    pub fn max_partial_quotient(&self, l_hi: usize) -> Result<(BigInt, usize), ContFracError> {
        self.check(l_hi + 1)?;
        let mut best = (self.quotients[1].clone(), 1);
        for i in 2..=l_hi + 1 {
            if self.quotients[i] > best.0 {
                best = (self.quotients[i].clone(), i);
            }
        }
        Ok(best)
    }

    /// Locates `x/y` among the convergents, falling back on the Legendre
    /// criterion `|tau - x/y| < 1/(2 y^2)` when it lies past the certified range.
    pub fn legendre_locate(&self, x: &BigInt, y: &BigInt) -> Location {
        assert!(y.is_positive(), "denominator must be positive");
        let g = x.gcd(y);
        let (x, y) = (x / &g, y / &g);
        let prec = self.value.precision() + 16;
        let bound_for = |index: usize| {
            self.quotients.get(index + 1).map(|a| {
                let den = (a + 2u32) * &y * &y;
                RealBall::from_int(1, prec).div(&RealBall::from_int(den, prec)).expect("positive")
            })
        };
        if let Some(index) = self.convergents.iter().position(|(p, q)| *p == x && *q == y) {
            return Location::Convergent { index, lower_bound: bound_for(index) };
        }
        let within = self.convergents.last().is_some_and(|(_, q)| &y < q) || self.terminated;
        let frac = RealBall::from_int(x.clone(), prec)
            .div(&RealBall::from_int(y.clone(), prec))
            .expect("positive");
        let dist = self.value.sub(&frac).abs();
        let half = RealBall::from_int(1, prec)
            .div(&RealBall::from_int(&y * &y * 2u32, prec))
            .expect("positive");
        match dist.lt(&half) {
            // Certified inside the Legendre disc but absent from the list:
            // the convergent lies beyond the certified range.
            Truth::True if !within => Location::Unknown,
            Truth::True => unreachable!("Legendre criterion violated by certified expansion"),
            Truth::False => Location::NotConvergent,
            Truth::Unknown if within => Location::NotConvergent,
            Truth::Unknown => Location::Unknown,
        }
    }

    /// Exact value of `[a_0; a_1, ..., a_l]`.
    pub fn evaluate(&self, l: usize) -> Result<(BigInt, BigInt), ContFracError> {
        self.check(l)?;
        Ok(self.convergents[l].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::realball::{const_log2, const_log3};

    fn log3_log2(bits: u32) -> RealBall {
        const_log3(bits).div(&const_log2(bits)).unwrap()
    }

    #[test]
    fn rational_seven_thirds() {
        let cf = cf_of_rational(&BigInt::from(7), &BigInt::from(3), 64);
        assert_eq!(cf.quotients, [BigInt::from(2), BigInt::from(3)]);
        assert_eq!(cf.max_partial_quotient(0).unwrap(), (BigInt::from(3), 1));
        // As a ball, 7/3 certifies only a_0: the last quotient straddles 3.
        let x = RealBall::from_ratio(7, 3, 64).unwrap();
        assert_eq!(cf_expand_all(&x).certified_len(), 1);
        let exact = RealBall::from_ratio(15, 4, 64).unwrap();
        let cf = cf_expand_all(&exact);
        assert!(cf.terminated);
        assert_eq!(cf.quotients, vec![BigInt::from(3), BigInt::from(1), BigInt::from(3)]);
        assert_eq!(cf.max_partial_quotient(0).unwrap(), (BigInt::from(1), 1));
        assert!(matches!(
            cf_expand(&exact, &BigInt::from(100)),
            Err(ContFracError::RationalTerminated { len: 3 })
        ));
    }

    #[test]
    fn golden_ratio_is_all_ones() {
        let phi = RealBall::from_int(5, 256).sqrt().unwrap().add(&RealBall::one(256)).mul_pow2(-1);
        let cf = cf_expand_all(&phi);
        assert!(cf.certified_len() > 120);
        assert_eq!(cf.max_partial_quotient(50).unwrap().0, BigInt::one());
    }

    #[test]
    fn wide_ball_reports_exhaustion() {
        let x = log3_log2(64);
        let r = cf_expand(&x, &(BigInt::one() << 200usize));
        assert!(matches!(r, Err(ContFracError::PrecisionExhausted { .. })));
        let cf = cf_expand_all(&x);
        assert!(matches!(cf.q(500), Err(ContFracError::IndexBeyondCertified { .. })));
    }

    #[test]
    fn log_ratio_leading_quotients() {
        let cf = cf_expand_to_index(&log3_log2(256), 10).unwrap();
        let head: Vec<i64> = cf.quotients[..10].iter().map(|a| a.try_into().unwrap()).collect();
        assert_eq!(head, vec![1, 1, 1, 2, 2, 3, 1, 5, 2, 23]);
        assert_eq!(cf.q(5).unwrap(), &BigInt::from(41));
        assert_eq!(cf.p(5).unwrap(), &BigInt::from(65));
    }

    #[test]
    fn legendre_cases() {
        let cf = cf_expand_all(&log3_log2(256));
        assert!(matches!(
            cf.legendre_locate(&BigInt::from(317), &BigInt::from(200)),
            Location::NotConvergent
        ));
        let (p5, q5) = cf.convergents[5].clone();
        match cf.legendre_locate(&p5, &q5) {
            Location::Convergent { index: 5, lower_bound: Some(b) } => assert!(b.is_positive()),
            other => panic!("{other:?}"),
        }
        match cf.legendre_locate(&cf.quotients[0].clone(), &BigInt::one()) {
            Location::Convergent { index: 0, .. } => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn determinant_identity() {
        let cf = cf_expand_all(&log3_log2(2048));
        for l in 1..cf.certified_len() {
            let (p, q) = &cf.convergents[l];
            let (p1, q1) = &cf.convergents[l - 1];
            let d = p * q1 - p1 * q;
            let want = if l % 2 == 1 { BigInt::one() } else { BigInt::from(-1) };
            assert_eq!(d, want, "l = {l}");
        }
    }
}
