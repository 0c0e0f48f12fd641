//! Midpoint-radius ("ball") real arithmetic over dyadic numbers.
//!
//! A [`RealBall`] stores an exact dyadic midpoint `mid * 2^exp` together with
//! a radius upper bound [`Mag`]. Every operation returns a ball that contains
//! the exact result for all inputs drawn from the argument balls. Comparisons
//! never guess: when two balls overlap the answer is [`Truth::Unknown`] and the
//! caller is expected to raise the working precision (see [`escalate`]).

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Default starting precision in bits.
pub const DEFAULT_PRECISION: u32 = 256;
/// Hard cap on escalated precision unless overridden by `PILLAI_PRECISION_CAP`.
pub const DEFAULT_PRECISION_CAP: u32 = 1 << 20;

const MAG_BITS: u32 = 32;
const MAG_LO: u64 = 1 << (MAG_BITS - 1);
const MAG_HI: u64 = 1 << MAG_BITS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BallError {
    #[error("divisor interval contains zero")]
    DivisorStraddlesZero,
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("precision exhausted at {bits} bits")]
    PrecisionExhausted { bits: u32 },
}

/// Three-valued answer of a certified predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Truth {
    True,
    False,
    Unknown,
}

#[allow(clippy::should_implement_trait)]
impl Truth {
    pub fn is_true(self) -> bool {
        self == Truth::True
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    /// Conjunction in Kleene's three-valued logic.
    pub fn and(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::True, Truth::True) => Truth::True,
            _ => Truth::Unknown,
        }
    }

    pub fn not(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }
}

/// The precision cap, read from `PILLAI_PRECISION_CAP` when set.
pub fn precision_cap() -> u32 {
    std::env::var("PILLAI_PRECISION_CAP")
        .ok()
        .and_then(|s| s.trim().parse::<u32>().ok())
        .filter(|&b| b >= 64)
        .unwrap_or(DEFAULT_PRECISION_CAP)
}

/// Runs `f` at `start` bits and doubles the precision each time it reports
/// [`BallError::PrecisionExhausted`], up to [`precision_cap`].
pub fn escalate<T>(
    start: u32,
    mut f: impl FnMut(u32) -> Result<T, BallError>,
) -> Result<T, BallError> {
    let cap = precision_cap();
    let mut prec = start.max(32);
    loop {
        match f(prec) {
            Err(BallError::PrecisionExhausted { .. }) if prec < cap => {
                prec = prec.saturating_mul(2).min(cap);
            }
            Err(BallError::PrecisionExhausted { .. }) => {
                return Err(BallError::PrecisionExhausted { bits: prec })
            }
            other => return other,
        }
    }
}

/// Nonnegative magnitude `man * 2^exp` used as an upper (or, where stated,
/// lower) bound. Mantissas are kept in `[2^31, 2^32)` or zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mag {
    man: u64,
    exp: i64,
}

#[allow(clippy::should_implement_trait)]
impl Mag {
    pub const ZERO: Mag = Mag { man: 0, exp: 0 };

    pub fn is_zero(&self) -> bool {
        self.man == 0
    }

    fn norm(man: u128, exp: i64, up: bool) -> Mag {
        if man == 0 {
            return Mag::ZERO;
        }
        let bits = 128 - man.leading_zeros();
        if bits > MAG_BITS {
            let s = bits - MAG_BITS;
            let mut m = man >> s;
            if up && (m << s) != man {
                m += 1;
            }
            let mut e = exp + s as i64;
            if m as u64 >= MAG_HI {
                m = (m + 1) >> 1;
                e += 1;
            }
            Mag { man: m as u64, exp: e }
        } else {
            let s = MAG_BITS - bits;
            Mag {
                man: (man << s) as u64,
                exp: exp - s as i64,
            }
        }
    }

    pub fn from_u64(v: u64, exp: i64) -> Mag {
        Mag::norm(v as u128, exp, true)
    }

    /// `2^exp`.
    pub fn pow2(exp: i64) -> Mag {
        Mag { man: MAG_LO, exp: exp - (MAG_BITS as i64 - 1) }
    }

    /// Upper bound of `|n| * 2^exp`.
    pub fn from_bigint_up(n: &BigInt, exp: i64) -> Mag {
        Mag::from_biguint(n.magnitude(), exp, true)
    }

    /// Lower bound of `|n| * 2^exp`.
    pub fn from_bigint_down(n: &BigInt, exp: i64) -> Mag {
        Mag::from_biguint(n.magnitude(), exp, false)
    }

    fn from_biguint(n: &BigUint, exp: i64, up: bool) -> Mag {
        let bits = n.bits();
        if bits <= 64 {
            return Mag::norm(n.to_u64().unwrap_or(0) as u128, exp, up);
        }
        let s = bits - 64;
        let top: BigUint = n >> s;
        let mut m = top.to_u64().unwrap_or(u64::MAX) as u128;
        if up {
            m += 1;
        }
        Mag::norm(m, exp + s as i64, up)
    }

    pub fn add(self, o: Mag) -> Mag {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= o.exp { (self, o) } else { (o, self) };
        let d = (hi.exp - lo.exp) as u64;
        let lo_m = if d >= 64 {
            1
        } else {
            let m = lo.man >> d;
            if (m << d) != lo.man {
                m + 1
            } else {
                m
            }
        };
        Mag::norm(hi.man as u128 + lo_m as u128, hi.exp, true)
    }

    pub fn mul(self, o: Mag) -> Mag {
        if self.is_zero() || o.is_zero() {
            return Mag::ZERO;
        }
        Mag::norm(self.man as u128 * o.man as u128, self.exp + o.exp, true)
    }

    /// Product rounded down; only meaningful for lower bounds.
    pub fn mul_down(self, o: Mag) -> Mag {
        if self.is_zero() || o.is_zero() {
            return Mag::ZERO;
        }
        Mag::norm(self.man as u128 * o.man as u128, self.exp + o.exp, false)
    }

    /// Upper bound of `self / den` where `den` is a lower bound of the divisor.
    pub fn div_up(self, den: Mag) -> Option<Mag> {
        if den.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Mag::ZERO);
        }
        let num = (self.man as u128) << 64;
        let q = num / den.man as u128;
        let q = if q * den.man as u128 != num { q + 1 } else { q };
        Some(Mag::norm(q, self.exp - den.exp - 64, true))
    }

    pub fn mul_pow2(self, k: i64) -> Mag {
        if self.is_zero() {
            self
        } else {
            Mag { man: self.man, exp: self.exp + k }
        }
    }

    /// Exact dyadic value.
    pub fn to_dyadic(self) -> Dyadic {
        Dyadic::new(BigInt::from(self.man), self.exp)
    }

    pub fn max(self, o: Mag) -> Mag {
        if self.to_dyadic() >= o.to_dyadic() {
            self
        } else {
            o
        }
    }

    /// Upper bound of `log2(self)`; `None` for zero.
    pub fn log2_ceil(self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.exp + 64 - self.man.leading_zeros() as i64)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.man as f64 * 2f64.powi(self.exp.clamp(-1100, 1100) as i32)
    }
}

/// Exact dyadic rational `m * 2^e`.
#[derive(Debug, Clone)]
pub struct Dyadic {
    pub m: BigInt,
    pub e: i64,
}

impl Dyadic {
    pub fn new(m: BigInt, e: i64) -> Self {
        Dyadic { m, e }
    }

    pub fn zero() -> Self {
        Dyadic::new(BigInt::zero(), 0)
    }

    fn aligned(&self, o: &Dyadic) -> (BigInt, BigInt, i64) {
        let e = self.e.min(o.e);
        (
            &self.m << (self.e - e) as usize,
            &o.m << (o.e - e) as usize,
            e,
        )
    }

    pub fn add(&self, o: &Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(o);
        Dyadic::new(a + b, e)
    }

    pub fn sub(&self, o: &Dyadic) -> Dyadic {
        let (a, b, e) = self.aligned(o);
        Dyadic::new(a - b, e)
    }

    pub fn neg(&self) -> Dyadic {
        Dyadic::new(-&self.m, self.e)
    }

    pub fn is_positive(&self) -> bool {
        self.m.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.m.is_negative()
    }

    pub fn floor(&self) -> BigInt {
        if self.e >= 0 {
            &self.m << self.e as usize
        } else {
            self.m.div_floor(&(BigInt::one() << (-self.e) as usize))
        }
    }

    pub fn ceil(&self) -> BigInt {
        -(self.neg().floor())
    }

    /// Exact distance to the nearest integer.
    pub fn dist_to_int(&self) -> Dyadic {
        if self.e >= 0 {
            return Dyadic::zero();
        }
        let one = BigInt::one() << (-self.e) as usize;
        let r = self.m.mod_floor(&one);
        let s = &one - &r;
        Dyadic::new(if r <= s { r } else { s }, self.e)
    }

    pub fn to_f64(&self) -> f64 {
        let bits = self.m.bits() as i64;
        let shift = (bits - 60).max(0);
        let top = (&self.m >> shift as usize).to_f64().unwrap_or(0.0);
        top * 2f64.powf((self.e + shift) as f64)
    }
}

impl PartialEq for Dyadic {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Dyadic {}
impl PartialOrd for Dyadic {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Dyadic {
    fn cmp(&self, o: &Self) -> Ordering {
        let (a, b, _) = self.aligned(o);
        a.cmp(&b)
    }
}

/// A real number known to lie in `[mid*2^exp - rad, mid*2^exp + rad]`.
#[derive(Clone)]
pub struct RealBall {
    mid: BigInt,
    exp: i64,
    rad: Mag,
    prec: u32,
}

impl fmt::Debug for RealBall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "RealBall({} +/- {:.3e}, {} bits)",
            self.to_sci(20),
            self.rad.to_f64(),
            self.prec
        )
    }
}

impl fmt::Display for RealBall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} +/- {:.2e}", self.to_sci(16), self.rad.to_f64())
    }
}

fn bits_of(n: &BigInt) -> u64 {
    n.bits()
}

/// Truncates `mid` to at most `prec` significant bits, returning the error.
fn round_mid(mid: BigInt, exp: i64, prec: u32) -> (BigInt, i64, Mag) {
    let bits = bits_of(&mid);
    if bits <= prec as u64 {
        return (mid, exp, Mag::ZERO);
    }
    let s = bits - prec as u64;
    let (sign, mag) = mid.into_parts();
    let kept = &mag >> s as usize;
    let exact = (&kept << s as usize) == mag;
    let out = BigInt::from_biguint(sign, kept);
    let err = if exact { Mag::ZERO } else { Mag::pow2(exp + s as i64) };
    (out, exp + s as i64, err)
}

impl RealBall {
    fn build(mid: BigInt, exp: i64, rad: Mag, prec: u32) -> RealBall {
        let (mid, exp, err) = round_mid(mid, exp, prec);
        let (mid, exp) = if mid.is_zero() { (mid, 0) } else { (mid, exp) };
        RealBall { mid, exp, rad: rad.add(err), prec }
    }

    pub fn zero(prec: u32) -> RealBall {
        RealBall { mid: BigInt::zero(), exp: 0, rad: Mag::ZERO, prec }
    }

    pub fn one(prec: u32) -> RealBall {
        RealBall::from_int(1, prec)
    }

    pub fn from_int(n: impl Into<BigInt>, prec: u32) -> RealBall {
        RealBall::build(n.into(), 0, Mag::ZERO, prec)
    }

    pub fn from_dyadic(d: &Dyadic, prec: u32) -> RealBall {
        RealBall::build(d.m.clone(), d.e, Mag::ZERO, prec)
    }

    /// Exact conversion of a finite `f64`.
    pub fn from_f64(x: f64, prec: u32) -> RealBall {
        assert!(x.is_finite(), "non-finite f64");
        if x == 0.0 {
            return RealBall::zero(prec);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        RealBall::build(BigInt::from(m) * sign, e, Mag::ZERO, prec)
    }

    pub fn from_ratio(
        num: impl Into<BigInt>,
        den: impl Into<BigInt>,
        prec: u32,
    ) -> Result<RealBall, BallError> {
        let wp = prec + 8;
        RealBall::from_int(num, wp)
            .div(&RealBall::from_int(den, wp))
            .map(|b| b.with_precision(prec))
    }

    /// Parses a decimal literal such as `1.4`, `-25`, `6.2e34` or `5.708E510`.
    pub fn from_decimal(s: &str, prec: u32) -> Result<RealBall, BallError> {
        let (num, den) = parse_decimal(s).ok_or(BallError::Domain("malformed decimal literal"))?;
        RealBall::from_ratio(num, den, prec)
    }

    /// The ball with the given exact endpoints (`lo <= hi`).
    pub fn from_endpoints(lo: &Dyadic, hi: &Dyadic, prec: u32) -> RealBall {
        let sum = lo.add(hi);
        let diff = hi.sub(lo);
        let rad = Mag::from_bigint_up(&diff.m, diff.e - 1);
        RealBall::build(sum.m, sum.e - 1, rad, prec)
    }

    /// Ball with an explicit additional radius.
    pub fn with_radius(mut self, extra: Mag) -> RealBall {
        self.rad = self.rad.add(extra);
        self
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    /// Same ball re-rounded to `prec` bits (never loses containment).
    pub fn with_precision(&self, prec: u32) -> RealBall {
        RealBall::build(self.mid.clone(), self.exp, self.rad, prec)
    }

    pub fn radius(&self) -> Mag {
        self.rad
    }

    pub fn midpoint(&self) -> Dyadic {
        Dyadic::new(self.mid.clone(), self.exp)
    }

    pub fn is_exact(&self) -> bool {
        self.rad.is_zero()
    }

    pub fn lower(&self) -> Dyadic {
        self.midpoint().sub(&self.rad.to_dyadic())
    }

    pub fn upper(&self) -> Dyadic {
        self.midpoint().add(&self.rad.to_dyadic())
    }

    /// Upper bound on `|x|` for every `x` in the ball.
    pub fn mag_upper(&self) -> Mag {
        Mag::from_bigint_up(&self.mid, self.exp).add(self.rad)
    }

    /// Lower bound on `|x|`; zero when the ball contains zero.
    pub fn mag_lower(&self) -> Mag {
        let lo = self.lower();
        let hi = self.upper();
        if lo.is_positive() {
            Mag::from_bigint_down(&lo.m, lo.e)
        } else if hi.is_negative() {
            Mag::from_bigint_down(&hi.m, hi.e)
        } else {
            Mag::ZERO
        }
    }

    pub fn contains_zero(&self) -> bool {
        !self.lower().is_positive() && !self.upper().is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.lower().is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.upper().is_negative()
    }

    /// Whether the dyadic `d` lies inside the ball.
    pub fn contains(&self, d: &Dyadic) -> bool {
        &self.lower() <= d && d <= &self.upper()
    }

    /// Whether `other` is a subset of `self`.
    pub fn contains_ball(&self, other: &RealBall) -> bool {
        self.lower() <= other.lower() && other.upper() <= self.upper()
    }

    pub fn overlaps(&self, other: &RealBall) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }

    pub fn neg(&self) -> RealBall {
        RealBall { mid: -&self.mid, exp: self.exp, rad: self.rad, prec: self.prec }
    }

    pub fn abs(&self) -> RealBall {
        if self.is_positive() {
            return self.clone();
        }
        if self.is_negative() {
            return self.neg();
        }
        let lo = self.lower().neg();
        let hi = self.upper();
        let top = if lo >= hi { lo } else { hi };
        RealBall::from_endpoints(&Dyadic::zero(), &top, self.prec)
    }

    pub fn add(&self, o: &RealBall) -> RealBall {
        let prec = self.prec.max(o.prec);
        if self.mid.is_zero() {
            return RealBall::build(o.mid.clone(), o.exp, o.rad.add(self.rad), prec);
        }
        if o.mid.is_zero() {
            return RealBall::build(self.mid.clone(), self.exp, self.rad.add(o.rad), prec);
        }
        // Fold a negligible operand into the radius instead of aligning
        // exponents that are far apart.
        let top_a = bits_of(&self.mid) as i64 + self.exp;
        let top_b = bits_of(&o.mid) as i64 + o.exp;
        let slack = prec as i64 + 16;
        if top_b < top_a - slack && top_b < self.exp {
            let r = self.rad.add(o.rad).add(Mag::from_bigint_up(&o.mid, o.exp));
            return RealBall::build(self.mid.clone(), self.exp, r, prec);
        }
        if top_a < top_b - slack && top_a < o.exp {
            let r = self.rad.add(o.rad).add(Mag::from_bigint_up(&self.mid, self.exp));
            return RealBall::build(o.mid.clone(), o.exp, r, prec);
        }
        let e = self.exp.min(o.exp);
        let a = &self.mid << (self.exp - e) as usize;
        let b = &o.mid << (o.exp - e) as usize;
        RealBall::build(a + b, e, self.rad.add(o.rad), prec)
    }

    pub fn sub(&self, o: &RealBall) -> RealBall {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &RealBall) -> RealBall {
        let prec = self.prec.max(o.prec);
        let ma = Mag::from_bigint_up(&self.mid, self.exp);
        let mb = Mag::from_bigint_up(&o.mid, o.exp);
        let rad = ma.mul(o.rad).add(mb.mul(self.rad)).add(self.rad.mul(o.rad));
        RealBall::build(&self.mid * &o.mid, self.exp + o.exp, rad, prec)
    }

    /// Multiplication by `2^k`, exact.
    pub fn mul_pow2(&self, k: i64) -> RealBall {
        RealBall {
            mid: self.mid.clone(),
            exp: if self.mid.is_zero() { 0 } else { self.exp + k },
            rad: self.rad.mul_pow2(k),
            prec: self.prec,
        }
    }

    pub fn mul_int(&self, n: i64) -> RealBall {
        self.mul(&RealBall::from_int(n, self.prec))
    }

    pub fn div(&self, o: &RealBall) -> Result<RealBall, BallError> {
        let prec = self.prec.max(o.prec);
        // |b| >= |b_mid| - r_b must be certified positive.
        let bm = Mag::from_bigint_down(&o.mid, o.exp);
        let lower_b = o.mag_lower();
        if lower_b.is_zero() || o.mid.is_zero() {
            return Err(BallError::DivisorStraddlesZero);
        }
        let shift = (prec as i64 + bits_of(&o.mid) as i64 - bits_of(&self.mid) as i64 + 4).max(0);
        let num = &self.mid << shift as usize;
        let q = &num / &o.mid;
        let qexp = self.exp - shift - o.exp;
        let exact_q = (&q * &o.mid) == num;
        let mut rad = if exact_q { Mag::ZERO } else { Mag::pow2(qexp) };
        if !self.rad.is_zero() || !o.rad.is_zero() {
            let am = Mag::from_bigint_up(&self.mid, self.exp);
            let bm_up = Mag::from_bigint_up(&o.mid, o.exp);
            let numer = am.mul(o.rad).add(bm_up.mul(self.rad));
            let den = bm.mul_down(lower_b);
            rad = rad.add(numer.div_up(den).ok_or(BallError::DivisorStraddlesZero)?);
        }
        Ok(RealBall::build(q, qexp, rad, prec))
    }

    pub fn recip(&self) -> Result<RealBall, BallError> {
        RealBall::one(self.prec).div(self)
    }

    pub fn div_int(&self, n: i64) -> Result<RealBall, BallError> {
        self.div(&RealBall::from_int(n, self.prec))
    }

    pub fn sqr(&self) -> RealBall {
        self.mul(self)
    }

    /// Integer power; negative exponents require a ball excluding zero.
    pub fn pow_int(&self, n: i64) -> Result<RealBall, BallError> {
        if n == 0 {
            return Ok(RealBall::one(self.prec));
        }
        let wp = self.prec + 2 * (64 - (n.unsigned_abs()).leading_zeros());
        let mut base = self.with_precision(wp);
        let mut acc = RealBall::one(wp);
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.sqr();
            }
        }
        let out = if n < 0 { acc.recip()? } else { acc };
        Ok(out.with_precision(self.prec))
    }

    /// Real `k`-th root of a nonnegative ball.
    pub fn nth_root(&self, k: u32) -> Result<RealBall, BallError> {
        if k == 0 {
            return Err(BallError::Domain("zeroth root"));
        }
        if self.upper().is_negative() || (self.lower().is_negative() && k > 0 && !self.contains_zero()) {
            return Err(BallError::Domain("root of negative interval"));
        }
        if self.lower().is_negative() {
            return Err(BallError::Domain("root of interval straddling zero"));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let wp = self.prec + 8;
        let lo = root_bound(&self.lower(), k, wp, false);
        let hi = root_bound(&self.upper(), k, wp, true);
        Ok(RealBall::from_endpoints(&lo, &hi, self.prec))
    }

    pub fn sqrt(&self) -> Result<RealBall, BallError> {
        self.nth_root(2)
    }

    /// Natural logarithm of a ball whose interval is strictly positive.
    pub fn log(&self) -> Result<RealBall, BallError> {
        if !self.is_positive() {
            return Err(BallError::Domain("log of nonpositive interval"));
        }
        let centre = log_point(&self.midpoint(), self.prec);
        if self.rad.is_zero() {
            return Ok(centre);
        }
        // |log x - log m| <= r / (m - r) for x in [m - r, m + r].
        let lo = self.lower();
        let den = Mag::from_bigint_down(&lo.m, lo.e);
        let extra = self.rad.div_up(den).ok_or(BallError::Domain("log of nonpositive interval"))?;
        Ok(centre.with_radius(extra))
    }

    pub fn exp(&self) -> Result<RealBall, BallError> {
        let lo = exp_point(&self.lower(), self.prec)?;
        if self.rad.is_zero() {
            return Ok(lo);
        }
        let hi = exp_point(&self.upper(), self.prec)?;
        Ok(RealBall::from_endpoints(&lo.lower(), &hi.upper(), self.prec))
    }

    pub fn max(&self, o: &RealBall) -> RealBall {
        let lo = std::cmp::max(self.lower(), o.lower());
        let hi = std::cmp::max(self.upper(), o.upper());
        RealBall::from_endpoints(&lo, &hi, self.prec.max(o.prec))
    }

    pub fn min(&self, o: &RealBall) -> RealBall {
        let lo = std::cmp::min(self.lower(), o.lower());
        let hi = std::cmp::min(self.upper(), o.upper());
        RealBall::from_endpoints(&lo, &hi, self.prec.max(o.prec))
    }

    /// Smallest ball containing both arguments.
    pub fn union(&self, o: &RealBall) -> RealBall {
        let lo = std::cmp::min(self.lower(), o.lower());
        let hi = std::cmp::max(self.upper(), o.upper());
        RealBall::from_endpoints(&lo, &hi, self.prec.max(o.prec))
    }

    pub fn lt(&self, o: &RealBall) -> Truth {
        if self.upper() < o.lower() {
            Truth::True
        } else if self.lower() >= o.upper() {
            Truth::False
        } else {
            Truth::Unknown
        }
    }

    pub fn le(&self, o: &RealBall) -> Truth {
        if self.upper() <= o.lower() {
            Truth::True
        } else if self.lower() > o.upper() {
            Truth::False
        } else {
            Truth::Unknown
        }
    }

    pub fn gt(&self, o: &RealBall) -> Truth {
        o.lt(self)
    }

    pub fn ge(&self, o: &RealBall) -> Truth {
        o.le(self)
    }

    /// `floor(x)` when it is the same integer across the whole ball.
    pub fn floor(&self) -> Option<BigInt> {
        let lo = self.lower().floor();
        let hi = self.upper().floor();
        (lo == hi).then_some(lo)
    }

    /// Floor of the upper endpoint: always `>= floor(x)` for x in the ball.
    pub fn floor_upper(&self) -> BigInt {
        self.upper().floor()
    }

    pub fn ceil_lower(&self) -> BigInt {
        self.lower().ceil()
    }

    /// Ball enclosing `||x|| = min_n |x - n|` over the ball.
    pub fn dist_to_nearest_int(&self) -> RealBall {
        // ||.|| is 1-Lipschitz, so ||mid|| +/- rad encloses it whenever that
        // interval stays inside [0, 1/2].
        if self.exp < 0 {
            let s = (-self.exp) as usize;
            let one = BigInt::one() << s;
            let frac = &self.mid & (&one - 1u32);
            let alt = &one - &frac;
            let d = if frac <= alt { frac } else { alt };
            let inside = self.rad.to_dyadic() <= Mag::from_bigint_down(&d, self.exp).to_dyadic()
                && Mag::from_bigint_up(&d, self.exp).add(self.rad).to_dyadic() <= Dyadic::new(BigInt::one(), -1);
            if inside {
                return RealBall::build(d, self.exp, self.rad, self.prec);
            }
        }
        let lo = self.lower();
        let hi = self.upper();
        let half = Dyadic::new(BigInt::one(), -1);
        // Width >= 1/2 means every value in [0, 1/2] may be attained.
        if hi.sub(&lo) >= half {
            return RealBall::from_endpoints(&Dyadic::zero(), &half, self.prec);
        }
        let dlo = lo.dist_to_int();
        let dhi = hi.dist_to_int();
        let fl = lo.floor();
        let fh = hi.floor();
        let has_int = fl != fh || lo.dist_to_int().m.is_zero();
        // Half-integers in range: floor(x - 1/2) changes.
        let lo_h = lo.sub(&half).floor();
        let hi_h = hi.sub(&half).floor();
        let has_half = lo_h != hi_h || lo.sub(&half).dist_to_int().m.is_zero();
        let (a, b) = if dlo <= dhi { (dlo, dhi) } else { (dhi, dlo) };
        let low = if has_int { Dyadic::zero() } else { a };
        let high = if has_half { half } else { b };
        RealBall::from_endpoints(&low, &high, self.prec)
    }

    pub fn to_f64(&self) -> f64 {
        self.midpoint().to_f64()
    }

    /// Base-10 logarithm of the midpoint magnitude, for display.
    pub fn log10_approx(&self) -> f64 {
        if self.mid.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = bits_of(&self.mid) as i64;
        let shift = (bits - 60).max(0);
        let top = (&self.mid >> shift as usize).to_f64().unwrap_or(1.0).abs();
        top.log10() + (self.exp + shift) as f64 * std::f64::consts::LOG10_2
    }

    /// Midpoint in scientific notation with `digits` significant digits.
    pub fn to_sci(&self, digits: usize) -> String {
        dyadic_to_sci(&self.midpoint(), digits)
    }
}

fn parse_decimal(s: &str) -> Option<(BigInt, BigInt)> {
    let s = s.trim();
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut num: BigInt = digits.parse().ok()?;
    let scale = exp - frac_part.len() as i64;
    let mut den = BigInt::one();
    if scale >= 0 {
        num *= num_traits::pow(BigInt::from(10), scale as usize);
    } else {
        den = num_traits::pow(BigInt::from(10), (-scale) as usize);
    }
    if neg {
        num = -num;
    }
    Some((num, den))
}

fn dyadic_to_sci(d: &Dyadic, digits: usize) -> String {
    if d.m.is_zero() {
        return "0".to_string();
    }
    let neg = d.m.is_negative();
    let m = d.m.abs();
    // value = m * 2^e; scale to an integer with enough decimal digits.
    let approx_log10 = (m.bits() as f64 + d.e as f64) * std::f64::consts::LOG10_2;
    let want = digits as i64 + 2;
    let p10 = want - approx_log10.floor() as i64;
    let mut num = m;
    let mut den = BigInt::one();
    if d.e >= 0 {
        num <<= d.e as usize;
    } else {
        den <<= (-d.e) as usize;
    }
    if p10 >= 0 {
        num *= num_traits::pow(BigInt::from(10), p10 as usize);
    } else {
        den *= num_traits::pow(BigInt::from(10), (-p10) as usize);
    }
    let int = num / den;
    let s = int.to_string();
    let exp10 = s.len() as i64 - 1 - p10;
    let (head, tail) = s.split_at(1);
    let tail: String = tail.chars().take(digits.saturating_sub(1)).collect();
    let sign = if neg { "-" } else { "" };
    if tail.is_empty() {
        format!("{sign}{head}e{exp10}")
    } else {
        format!("{sign}{head}.{tail}e{exp10}")
    }
}

/// Lower (`up = false`) or upper bound of `d^(1/k)` for `d >= 0`.
fn root_bound(d: &Dyadic, k: u32, prec: u32, up: bool) -> Dyadic {
    if !d.m.is_positive() {
        return Dyadic::zero();
    }
    // d = m * 2^e; the radicand m * 2^(e + k t) needs k (prec + 2) bits and
    // a nonnegative shift.
    let m = d.m.magnitude().clone();
    let need = (k as i64) * (prec as i64 + 2) - m.bits() as i64 - d.e;
    let mut t = (need.max(0) + k as i64 - 1) / k as i64;
    while d.e + (k as i64) * t < 0 {
        t += 1;
    }
    let rad: BigUint = m << (d.e + k as i64 * t) as usize;
    let r = rad.nth_root(k);
    let r = if up && num_traits::pow(r.clone(), k as usize) != rad { r + 1u32 } else { r };
    Dyadic::new(BigInt::from(r), -t)
}

fn log2_cache() -> &'static Mutex<HashMap<u32, RealBall>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, RealBall>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `log 2` to `prec` bits, cached.
pub fn const_log2(prec: u32) -> RealBall {
    let key = prec.div_ceil(64) * 64;
    if let Some(v) = log2_cache().lock().ok().and_then(|c| c.get(&key).cloned()) {
        return v.with_precision(prec);
    }
    let wp = key + 32;
    // log 2 = 2 atanh(1/3)
    let third = RealBall::from_ratio(1, 3, wp).expect("nonzero divisor");
    let v = atanh_series(&third, wp).mul_pow2(1).with_precision(key);
    if let Ok(mut c) = log2_cache().lock() {
        c.insert(key, v.clone());
    }
    v.with_precision(prec)
}

/// `log 3` to `prec` bits.
pub fn const_log3(prec: u32) -> RealBall {
    RealBall::from_int(3, prec + 8)
        .log()
        .expect("log 3")
        .with_precision(prec)
}

/// `atanh(t)` for a ball with `|t| <= 1/2`, with rigorous tail bound.
fn atanh_series(t: &RealBall, wp: u32) -> RealBall {
    let t2 = t.sqr();
    let tmag = t.mag_upper();
    // |t|^2 upper bound as a Mag for the tail estimate.
    let t2mag = tmag.mul(tmag);
    let mut power = t.clone();
    let mut sum = t.clone();
    let mut pmag = tmag;
    let mut i: i64 = 1;
    let target = -(wp as i64) - 4;
    loop {
        power = power.mul(&t2);
        pmag = pmag.mul(t2mag);
        let term = power.div_int(2 * i + 1).expect("odd divisor");
        sum = sum.add(&term);
        i += 1;
        match pmag.log2_ceil() {
            Some(l) if l > target => {}
            _ => break,
        }
        if i > 4 * wp as i64 + 16 {
            break;
        }
    }
    // Remaining terms: sum_{j>=i} |t|^{2j+1}/(2j+1) <= |t|^{2i+1} / (1 - t^2) <= 2 |t|^{2i+1}.
    let tail = pmag.mul(t2mag).mul(tmag).mul(Mag::from_u64(2, 0));
    sum.with_radius(tail)
}

/// `log(d)` for an exact positive dyadic.
fn log_point(d: &Dyadic, prec: u32) -> RealBall {
    let wp = prec + 48;
    let bits = d.m.bits() as i64;
    // d = y * 2^E with y in [0.75, 1.5).
    let three_quarter = BigInt::from(3) << (bits - 2).max(0) as usize;
    let mut big_e = bits + d.e;
    let mut y_exp = -bits;
    if bits >= 2 && d.m < three_quarter {
        big_e -= 1;
        y_exp += 1;
    } else if bits < 2 {
        // m == 1: y = 1/2 -> 1
        big_e -= 1;
        y_exp += 1;
    }
    let y = RealBall::build(d.m.clone(), y_exp, Mag::ZERO, wp);
    let one = RealBall::one(wp);
    let num = y.sub(&one);
    let mut out = if num.mid.is_zero() && num.rad.is_zero() {
        RealBall::zero(wp)
    } else {
        let t = num.div(&y.add(&one)).expect("y + 1 > 0");
        atanh_series(&t, wp).mul_pow2(1)
    };
    if big_e != 0 {
        out = out.add(&const_log2(wp).mul_int(big_e));
    }
    out.with_precision(prec)
}

/// `exp(d)` for an exact dyadic.
fn exp_point(d: &Dyadic, prec: u32) -> Result<RealBall, BallError> {
    if d.m.is_zero() {
        return Ok(RealBall::one(prec));
    }
    let approx = d.to_f64();
    if approx.abs() > 1.0e15 {
        return Err(BallError::Domain("exp argument out of range"));
    }
    let extra = 16 + (approx.abs().max(1.0).log2().ceil() as u32);
    let wp = prec + 64 + extra;
    let x = RealBall::from_dyadic(d, wp);
    // x = n log 2 + r, |r| <= log(2)/2 + slack
    let ln2 = const_log2(wp);
    let n = (approx / std::f64::consts::LN_2).round() as i64;
    let r = x.sub(&ln2.mul_int(n));
    // Halve s times so that |r / 2^s| < 2^-s.
    let s: i64 = ((wp as f64).sqrt() as i64).max(4);
    let rs = r.mul_pow2(-s);
    let rmag = rs.mag_upper();
    let mut term = RealBall::one(wp);
    let mut sum = RealBall::one(wp);
    let mut tmag = Mag::from_u64(1, 0);
    let mut i: i64 = 1;
    let target = -(wp as i64) - 8;
    loop {
        term = term.mul(&rs).div_int(i)?;
        tmag = tmag.mul(rmag).div_up(Mag::from_u64(i as u64, 0)).unwrap_or(tmag);
        sum = sum.add(&term);
        i += 1;
        match tmag.log2_ceil() {
            Some(l) if l > target => {}
            _ => break,
        }
    }
    // Tail of the exponential series with |rs| < 1: bounded by 2 * last term.
    let mut e = sum.with_radius(tmag.mul(Mag::from_u64(2, 0)));
    for _ in 0..s {
        e = e.sqr();
    }
    Ok(e.mul_pow2(n).with_precision(prec))
}

/// Exact integer `x` as a ball.
pub fn ball(n: i64, prec: u32) -> RealBall {
    RealBall::from_int(n, prec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dy(x: f64) -> Dyadic {
        RealBall::from_f64(x, 64).midpoint()
    }

    #[test]
    fn add_exact_integers() {
        let s = ball(1, 64).add(&ball(2, 64));
        assert!(s.is_exact());
        assert_eq!(s.floor(), Some(BigInt::from(3)));
        assert!(s.contains(&dy(3.0)));
    }

    #[test]
    fn mul_by_exact_zero_is_exact_zero() {
        let x = ball(7, 64).with_radius(Mag::from_u64(1, -3));
        let z = x.mul(&RealBall::zero(64));
        assert!(z.is_exact());
        assert!(z.contains(&Dyadic::zero()));
    }

    #[test]
    fn one_third_radius_is_tiny() {
        let p = 128;
        let third = ball(1, p).div(&ball(3, p)).unwrap();
        let reference = ball(1, 4 * p).div(&ball(3, 4 * p)).unwrap();
        assert!(third.contains_ball(&reference));
        let r = third.radius().log2_ceil().unwrap();
        assert!(r <= 1 - p as i64, "radius 2^{r}");
    }

    #[test]
    fn division_by_straddling_ball_fails() {
        let z = ball(0, 64).with_radius(Mag::from_u64(1, -4));
        assert_eq!(ball(1, 64).div(&z).unwrap_err(), BallError::DivisorStraddlesZero);
    }

    #[test]
    fn log_one_is_zero() {
        let l = ball(1, 128).log().unwrap();
        assert!(l.contains(&Dyadic::zero()));
        assert!(l.radius().log2_ceil().is_none_or(|e| e < -120));
    }

    #[test]
    fn log_of_nonpositive_is_domain_error() {
        assert!(matches!(ball(0, 64).log(), Err(BallError::Domain(_))));
        assert!(matches!(ball(-2, 64).log(), Err(BallError::Domain(_))));
        assert!(matches!(ball(-2, 64).nth_root(2), Err(BallError::Domain(_))));
    }

    #[test]
    fn pow_int_exact_power_of_two() {
        let p = ball(2, 64).pow_int(10).unwrap();
        assert!(p.contains(&dy(1024.0)));
        let inv = ball(2, 64).pow_int(-3).unwrap();
        assert!(inv.contains(&dy(0.125)));
    }

    #[test]
    fn log3_over_log2_matches_double_precision_recomputation() {
        for p in [64u32, 200, 1000] {
            let a = const_log3(p).div(&const_log2(p)).unwrap();
            let b = const_log3(2 * p).div(&const_log2(2 * p)).unwrap();
            assert!(a.contains_ball(&b) || a.overlaps(&b));
            assert!(a.contains(&b.midpoint()));
            assert!((a.to_f64() - 1.584_962_500_721_156).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_log_roundtrip() {
        let x = RealBall::from_decimal("2.5", 200).unwrap();
        let y = x.log().unwrap().exp().unwrap();
        assert!(y.contains(&x.midpoint()));
        let e = ball(1, 200).exp().unwrap();
        assert!((e.to_f64() - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn sqrt_two_squared_contains_two() {
        let r = ball(2, 256).sqrt().unwrap();
        assert!(r.sqr().contains(&dy(2.0)));
        let c = ball(27, 128).nth_root(3).unwrap();
        assert!(c.contains(&dy(3.0)));
    }

    #[test]
    fn root_width_independent_of_mantissa_scaling() {
        // Same value, 2-bit mantissa versus a full-width one.
        let a = ball(2, 200).sqrt().unwrap();
        let b = RealBall::from_decimal("2", 200).unwrap().sqrt().unwrap();
        assert!(a.overlaps(&b));
        assert!(a.radius().to_f64() < 1e-58);
        assert!(b.radius().to_f64() < 1e-58);
    }

    #[test]
    fn certified_comparisons() {
        let a = RealBall::from_decimal("1", 64).unwrap().with_radius(Mag::from_u64(1, -4));
        let b = RealBall::from_decimal("2", 64).unwrap().with_radius(Mag::from_u64(1, -4));
        assert_eq!(a.lt(&b), Truth::True);
        assert_eq!(b.lt(&a), Truth::False);
        let c = ball(1, 64).with_radius(Mag::from_u64(6, -4));
        let d = RealBall::from_decimal("1.5", 64).unwrap().with_radius(Mag::from_u64(6, -4));
        assert_eq!(c.lt(&d), Truth::Unknown);
    }

    #[test]
    fn dist_to_nearest_int_exact_quarter() {
        let d = RealBall::from_f64(2.75, 64).dist_to_nearest_int();
        assert!(d.is_exact());
        assert!(d.contains(&dy(0.25)));
        let n = RealBall::from_f64(-3.1, 64).dist_to_nearest_int();
        assert!((n.to_f64() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dist_to_nearest_int_straddling_integer() {
        let x = ball(5, 64).with_radius(Mag::from_u64(1, -6));
        let d = x.dist_to_nearest_int();
        assert!(d.contains(&Dyadic::zero()));
        assert!(d.upper() <= dy(1.0 / 64.0));
    }

    #[test]
    fn floor_only_when_unique() {
        assert_eq!(RealBall::from_f64(2.5, 64).floor(), Some(BigInt::from(2)));
        let x = ball(3, 64).with_radius(Mag::from_u64(1, -10));
        assert_eq!(x.floor(), None);
        assert_eq!(x.floor_upper(), BigInt::from(3));
    }

    #[test]
    fn decimal_parsing() {
        let x = RealBall::from_decimal("6.2e34", 200).unwrap();
        assert!((x.log10_approx() - 34.792_391_689_498_25).abs() < 1e-9);
        assert!(RealBall::from_decimal("1.2.3", 64).is_err());
        assert_eq!(RealBall::from_decimal("-25", 64).unwrap().floor(), Some(BigInt::from(-25)));
    }

    #[test]
    fn sci_formatting() {
        assert_eq!(ball(1024, 64).to_sci(4), "1.024e3");
        assert_eq!(RealBall::from_f64(0.015625, 64).to_sci(3), "1.56e-2");
    }

    #[test]
    fn escalation_doubles_until_success() {
        let mut seen = vec![];
        let r = escalate(64, |p| {
            seen.push(p);
            if p < 500 {
                Err(BallError::PrecisionExhausted { bits: p })
            } else {
                Ok(p)
            }
        });
        assert_eq!(r, Ok(512));
        assert_eq!(seen, vec![64, 128, 256, 512]);
    }
}
