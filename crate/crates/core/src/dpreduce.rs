//! One-dimensional Baker-Davenport reduction.
//!
//! Given `0 < |u tau - v + mu| < A B^-w` with `1 <= u <= M`, pick a convergent
//! `p/q` of `tau` with `q > 6M` and put `eps = ||mu q|| - M ||tau q||`. When
//! `eps > 0` there is no solution with `w >= log(A q / eps) / log B`.
//!
//! When `mu` sits (almost) on the lattice `Z tau + Z`, `eps` cannot be made
//! positive. Then `mu = s tau + r + delta` and the form equals
//! `u' tau - v' + delta` with `u' = u + s`; by best approximation
//! `||u' tau|| >= ||q_L tau||` for `0 < u' < q_(L+1)`, which gives
//! `|u tau - v + mu| >= ||q_L tau|| - |delta|` directly. A negative `s`
//! also admits `u' = 0`, where the form is at least `||delta||`.

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contfrac::CFExpansion;
use crate::realball::{BallError, RealBall, Truth};

/// Extra convergents tried after the first one above `6M`.
pub const MAX_RETRIES: usize = 8;
/// Working precision of the final logarithm; `eps` is rounded down first.
const LOG_PREC: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
pub enum DpError {
    #[error("no certified convergent with q > 6M")]
    NoConvergent,
    #[error("eps not positive at {attempts} convergents")]
    EpsilonNonPositive { attempts: usize },
    #[error("mu is within the ball radius of the lattice Z tau + Z")]
    MuNearZero,
    #[error("precision exhausted while certifying eps")]
    PrecisionExhausted,
    #[error("invalid reduction case: {0}")]
    Invalid(&'static str),
}

impl From<BallError> for DpError {
    fn from(e: BallError) -> Self {
        match e {
            BallError::PrecisionExhausted { .. } => DpError::PrecisionExhausted,
            _ => DpError::Invalid("ball arithmetic domain error"),
        }
    }
}

/// A single reduction instance `(tau, mu, A, B, M)`: bounds `w` in
/// `|u tau - v + mu| < A B^-w` over integers `v` and `1 <= u <= M`.
#[derive(Debug, Clone)]
pub struct ReductionCase {
    pub tau: RealBall,
    pub mu: RealBall,
    pub a: RealBall,
    pub b: RealBall,
    pub m: BigInt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// `eps > 0` at convergent `first + retry`.
    Inhomogeneous { retry: usize },
    /// Best-approximation bound with `mu ~ shift * tau (mod 1)`.
    Homogeneous { shift: i64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionOutcome {
    #[serde(with = "crate::bigint_serde")]
    pub q: BigInt,
    pub convergent_index: usize,
    /// Lower bound of `eps` (inhomogeneous) or of `||q_L tau|| - |delta|`.
    pub epsilon: f64,
    #[serde(skip)]
    pub epsilon_ball: RealBall,
    #[serde(with = "crate::bigint_serde")]
    pub w_bound: BigInt,
    pub attempts: usize,
    pub method: Method,
}

/// A family member: either a real offset `mu` (with candidate shifts `s`,
/// `mu ~ s tau (mod 1)`, to try if `eps` fails, and a lower bound
/// `u_min >= 1` on `u`) or an offset known exactly to lie on the lattice,
/// `mu = +-shift * tau + integer`.
#[derive(Debug, Clone)]
pub enum Member {
    Offset { mu: RealBall, shifts: Vec<i64>, u_min: u64 },
    Lattice { shift: u64 },
}

#[derive(Debug, Clone)]
struct Entry {
    index: usize,
    q: BigInt,
    q_ball: RealBall,
    log_q: RealBall,
    m_dist: RealBall,
}

/// Precomputed data shared by every member of a family with the same
/// `tau`, `M`, `A` and `B`.
#[derive(Debug, Clone)]
pub struct Reducer<'a> {
    pub tau: RealBall,
    pub cf: &'a CFExpansion,
    pub m: BigInt,
    log_a: RealBall,
    log_b: RealBall,
    entries: Vec<Entry>,
}

/// Distance from an integer below which the double-precision floor is not
/// trusted. The double evaluation is accurate to about 1e-12 here.
const FLOOR_MARGIN: f64 = 1e-6;

fn low(x: &RealBall) -> RealBall {
    x.with_precision(LOG_PREC)
}

/// `||x||` rounded to a lower bound with a short mantissa.
fn lower_dyadic(x: &RealBall) -> RealBall {
    RealBall::from_dyadic(&x.lower(), LOG_PREC).with_precision(LOG_PREC)
}

impl<'a> Reducer<'a> {
    pub fn new(
        tau: &RealBall,
        cf: &'a CFExpansion,
        m: &BigInt,
        a: &RealBall,
        b: &RealBall,
    ) -> Result<Self, DpError> {
        if *m < BigInt::from(1) {
            return Err(DpError::Invalid("M < 1"));
        }
        if !a.is_positive() {
            return Err(DpError::Invalid("A <= 0"));
        }
        if !b.gt(&RealBall::one(b.precision())).is_true() {
            return Err(DpError::Invalid("B <= 1"));
        }
        let six_m = m * 6u32;
        let first = cf.first_q_above(&six_m).ok_or(DpError::NoConvergent)?;
        let last = (first + MAX_RETRIES).min(cf.certified_len() - 1);
        let prec = tau.precision();
        let entries = (first..=last)
            .map(|index| {
                let q = cf.convergents[index].1.clone();
                let qb = RealBall::from_int(q.clone(), prec);
                let m_dist = tau.mul(&qb).dist_to_nearest_int().mul(&RealBall::from_int(m.clone(), prec));
                let log_q = RealBall::from_int(q.clone(), LOG_PREC).log().expect("q > 0");
                Entry { index, q_ball: qb, q, log_q, m_dist }
            })
            .collect();
        Ok(Reducer {
            tau: tau.clone(),
            cf,
            m: m.clone(),
            log_a: low(a).log()?,
            log_b: low(b).log()?,
            entries,
        })
    }

    pub fn first_index(&self) -> usize {
        self.entries[0].index
    }

    pub fn first_q(&self) -> &BigInt {
        &self.entries[0].q
    }

    /// `M ||tau q||` at the first convergent above `6M`.
    pub fn m_tau_dist(&self) -> &RealBall {
        &self.entries[0].m_dist
    }

    fn w_from(&self, log_q: Option<&RealBall>, eps: &RealBall) -> Result<BigInt, DpError> {
        let e = lower_dyadic(eps);
        // Filter: settle the floor in doubles unless it lands near an integer.
        let ef = e.lower().to_f64();
        if ef.is_normal() && ef > 1e-280 {
            let x = (self.log_a.to_f64() + log_q.map_or(0.0, RealBall::to_f64) - ef.ln()) / self.log_b.to_f64();
            let frac = x - x.floor();
            if x.is_finite() && x.abs() < 1e12 && frac > FLOOR_MARGIN && frac < 1.0 - FLOOR_MARGIN {
                return Ok(BigInt::from(x.floor() as i64));
            }
        }
        let mut num = self.log_a.sub(&e.log()?);
        if let Some(lq) = log_q {
            num = num.add(lq);
        }
        Ok(num.div(&self.log_b)?.floor_upper())
    }

    /// Bound for `|u' tau - v' + delta|` over `u' = u + shift`, `u_min <= u <= M`.
    /// `delta` is a lower bound for the distance of the shifted offset to
    /// the nearest integer. Nonzero `u'` use the best approximation
    /// `||u' tau|| >= ||q_L tau||`; a negative shift also reaches `u' = 0`,
    /// where the form is at least `delta` itself.
    pub fn homogeneous(&self, delta: &RealBall, shift: i64, u_min: u64) -> Result<Option<ReductionOutcome>, DpError> {
        let bound = &self.m + shift.unsigned_abs();
        let Some(l) = self.cf.last_q_at_most(&bound) else {
            return Ok(None);
        };
        if l + 1 >= self.cf.certified_len() {
            return Ok(None);
        }
        let q = &self.cf.convergents[l].1;
        let prec = self.tau.precision();
        let h = self.tau.mul(&RealBall::from_int(q.clone(), prec)).dist_to_nearest_int().sub(delta);
        if !h.is_positive() {
            return Ok(None);
        }
        let mut w_bound = self.w_from(None, &h)?;
        if shift < 0 && shift.unsigned_abs() >= u_min && self.m >= BigInt::from(shift.unsigned_abs()) {
            if !delta.is_positive() {
                return Ok(None);
            }
            w_bound = w_bound.max(self.w_from(None, delta)?);
        }
        Ok(Some(ReductionOutcome {
            q: q.clone(),
            convergent_index: l,
            epsilon: h.lower().to_f64(),
            epsilon_ball: low(&h),
            w_bound,
            attempts: 1,
            method: Method::Homogeneous { shift },
        }))
    }

    /// Reduces a single offset over `u_min <= u <= M`.
    pub fn reduce(&self, mu: &RealBall, shifts: &[i64], u_min: u64) -> Result<ReductionOutcome, DpError> {
        let prec = self.tau.precision();
        let mut unknown = false;
        let mut attempts = 0;
        let mut try_entry = |i: usize| -> Result<Option<ReductionOutcome>, DpError> {
            let e = &self.entries[i];
            attempts += 1;
            let mu_q = mu.mul(&e.q_ball).dist_to_nearest_int();
            let eps = mu_q.sub(&e.m_dist);
            match eps.gt(&RealBall::zero(prec)) {
                Truth::True => {
                    let w_bound = self.w_from(Some(&e.log_q), &eps)?;
                    Ok(Some(ReductionOutcome {
                        q: e.q.clone(),
                        convergent_index: e.index,
                        epsilon: eps.lower().to_f64(),
                        epsilon_ball: low(&eps),
                        w_bound,
                        attempts,
                        method: Method::Inhomogeneous { retry: i },
                    }))
                }
                Truth::Unknown => {
                    unknown = true;
                    Ok(None)
                }
                Truth::False => Ok(None),
            }
        };
        if let Some(out) = try_entry(0)? {
            return Ok(out);
        }
        // mu close to the lattice: a later convergent rarely helps.
        let mut near_lattice = false;
        for &s in std::iter::once(&0).chain(shifts) {
            let shifted = if s == 0 {
                mu.clone()
            } else {
                mu.sub(&self.tau.mul(&RealBall::from_int(s, prec)))
            };
            let delta = shifted.dist_to_nearest_int();
            if delta.contains_zero() {
                near_lattice = true;
            }
            if let Some(mut out) = self.homogeneous(&delta, s, u_min)? {
                out.attempts += attempts;
                return Ok(out);
            }
        }
        for i in 1..self.entries.len() {
            if let Some(out) = try_entry(i)? {
                return Ok(out);
            }
        }
        if near_lattice {
            Err(DpError::MuNearZero)
        } else if unknown {
            Err(DpError::PrecisionExhausted)
        } else {
            Err(DpError::EpsilonNonPositive { attempts })
        }
    }

    pub fn reduce_member(&self, member: &Member) -> Result<ReductionOutcome, DpError> {
        match member {
            Member::Offset { mu, shifts, u_min } => self.reduce(mu, shifts, *u_min),
            Member::Lattice { shift } => self
                .homogeneous(&RealBall::zero(self.tau.precision()), *shift as i64, 1)?
                .ok_or(DpError::MuNearZero),
        }
    }
}

/// `dp_reduce` on a standalone case, expanding nothing: `cf` must be the
/// expansion of `case.tau`.
pub fn dp_reduce(case: &ReductionCase, cf: &CFExpansion) -> Result<ReductionOutcome, DpError> {
    Reducer::new(&case.tau, cf, &case.m, &case.a, &case.b)?.reduce(&case.mu, &[], 1)
}

/// Counts of how members were settled.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct MethodCounts {
    pub first_convergent: usize,
    pub later_convergent: usize,
    pub homogeneous: usize,
    pub lattice: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyFailure {
    pub member: String,
    pub error: DpError,
}

/// Aggregate of a family sweep.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub members: usize,
    #[serde(with = "crate::bigint_serde::option")]
    pub max_w_bound: Option<BigInt>,
    pub argmax: Option<String>,
    /// Smallest certified lower bound of `eps` over inhomogeneous successes.
    pub min_epsilon: Option<f64>,
    pub argmin_epsilon: Option<String>,
    pub convergent_index: usize,
    pub failures: Vec<FamilyFailure>,
    pub methods: MethodCounts,
}

struct Acc {
    max_w: Option<(BigInt, usize)>,
    min_eps: Option<(f64, usize)>,
    failures: Vec<(usize, DpError)>,
    methods: MethodCounts,
}

impl Acc {
    fn empty() -> Self {
        Acc { max_w: None, min_eps: None, failures: Vec::new(), methods: MethodCounts::default() }
    }

    fn push(mut self, i: usize, lattice: bool, r: Result<ReductionOutcome, DpError>) -> Self {
        match r {
            Ok(o) => {
                match o.method {
                    Method::Inhomogeneous { retry: 0 } => self.methods.first_convergent += 1,
                    Method::Inhomogeneous { .. } => self.methods.later_convergent += 1,
                    Method::Homogeneous { .. } if lattice => self.methods.lattice += 1,
                    Method::Homogeneous { .. } => self.methods.homogeneous += 1,
                }
                if matches!(o.method, Method::Inhomogeneous { .. })
                    && self.min_eps.as_ref().is_none_or(|(e, j)| o.epsilon < *e || (o.epsilon == *e && i < *j))
                {
                    self.min_eps = Some((o.epsilon, i));
                }
                if self.max_w.as_ref().is_none_or(|(w, j)| o.w_bound > *w || (o.w_bound == *w && i < *j)) {
                    self.max_w = Some((o.w_bound, i));
                }
            }
            Err(e) => self.failures.push((i, e)),
        }
        self
    }

    fn merge(mut self, o: Acc) -> Self {
        if let Some((w, i)) = o.max_w {
            if self.max_w.as_ref().is_none_or(|(v, j)| w > *v || (w == *v && i < *j)) {
                self.max_w = Some((w, i));
            }
        }
        if let Some((e, i)) = o.min_eps {
            if self.min_eps.as_ref().is_none_or(|(v, j)| e < *v || (e == *v && i < *j)) {
                self.min_eps = Some((e, i));
            }
        }
        self.failures.extend(o.failures);
        self.methods.first_convergent += o.methods.first_convergent;
        self.methods.later_convergent += o.methods.later_convergent;
        self.methods.homogeneous += o.methods.homogeneous;
        self.methods.lattice += o.methods.lattice;
        self
    }
}

/// Sweeps `count` members produced on demand by `member(i)`, in parallel.
/// The result is independent of scheduling.
pub fn dp_reduce_family<F, L>(reducer: &Reducer, count: usize, member: F, label: L) -> FamilyReport
where
    F: Fn(usize) -> Result<Member, DpError> + Sync,
    L: Fn(usize) -> String,
{
    let acc = (0..count)
        .into_par_iter()
        .fold(Acc::empty, |acc, i| {
            match member(i) {
                Ok(m) => {
                    let lattice = matches!(m, Member::Lattice { .. });
                    acc.push(i, lattice, reducer.reduce_member(&m))
                }
                Err(e) => acc.push(i, false, Err(e)),
            }
        })
        .reduce(Acc::empty, Acc::merge);
    let mut failures = acc.failures;
    failures.sort_by_key(|(i, _)| *i);
    FamilyReport {
        members: count,
        max_w_bound: acc.max_w.as_ref().map(|(w, _)| w.clone()),
        argmax: acc.max_w.map(|(_, i)| label(i)),
        min_epsilon: acc.min_eps.map(|(e, _)| e),
        argmin_epsilon: acc.min_eps.map(|(_, i)| label(i)),
        convergent_index: reducer.first_index(),
        failures: failures
            .into_iter()
            .map(|(i, error)| FamilyFailure { member: label(i), error })
            .collect(),
        methods: acc.methods,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contfrac::cf_expand_all;
    use crate::realball::{const_log2, const_log3, Dyadic};

    fn ratio(bits: u32) -> RealBall {
        const_log3(bits).div(&const_log2(bits)).unwrap()
    }

    #[test]
    fn half_offset_small_case() {
        let p = 256;
        // sqrt(2)/10 = [0; 7, 14, ...], so q_1 = 7 is the first q above 6.
        let tau = RealBall::from_int(2, p).sqrt().unwrap().div_int(10).unwrap();
        let cf = cf_expand_all(&tau);
        let case = ReductionCase {
            tau: tau.clone(),
            mu: RealBall::from_ratio(1, 2, p).unwrap(),
            a: RealBall::from_int(2, p),
            b: RealBall::from_int(2, p),
            m: BigInt::from(1),
        };
        let out = dp_reduce(&case, &cf).unwrap();
        assert_eq!(out.q, BigInt::from(7));
        assert_eq!(out.method, Method::Inhomogeneous { retry: 0 });
        // ||7/2|| - ||7 sqrt(2)/10|| = 0.5 - (1 - 0.7 sqrt 2)
        let want = 0.5 - (1.0 - 0.7 * 2f64.sqrt());
        assert!((out.epsilon - want).abs() < 1e-12);
        // log2(2 * 7 / eps) = 4.83..., so w <= 4.
        assert_eq!(out.w_bound, BigInt::from(4));
        let w: u32 = out.w_bound.try_into().unwrap();
        for extra in 1..50 {
            let d = tau.add(&case.mu).dist_to_nearest_int();
            let env = RealBall::from_int(2, p).mul_pow2(-(w as i64 + extra));
            assert!(!d.lt(&env).is_true());
        }
    }

    #[test]
    fn even_denominator_forces_retry() {
        let p = 256;
        let tau = ratio(p);
        let cf = cf_expand_all(&tau);
        let two = RealBall::from_int(2, p);
        let r = Reducer::new(&tau, &cf, &BigInt::from(1), &two, &two).unwrap();
        // q = 12 gives ||12/2|| = 0, the next denominator 41 works.
        let out = r.reduce(&RealBall::from_ratio(1, 2, p).unwrap(), &[], 1).unwrap();
        assert_eq!(out.q, BigInt::from(41));
        assert_eq!(out.method, Method::Inhomogeneous { retry: 1 });
    }

    #[test]
    fn tau_distance_in_range() {
        let p = 512;
        let tau = ratio(p);
        let cf = cf_expand_all(&tau);
        let half = RealBall::from_ratio(1, 2, p).unwrap();
        for (_, q) in cf.convergents.iter().take(60) {
            let d = tau.mul(&RealBall::from_int(q.clone(), p)).dist_to_nearest_int();
            assert!(!d.is_negative() && d.le(&half).is_true());
        }
    }

    #[test]
    fn lattice_offset_uses_best_approximation() {
        let p = 512;
        let tau = ratio(p);
        let cf = cf_expand_all(&tau);
        let m = BigInt::from(1000);
        let two = RealBall::from_int(2, p);
        let r = Reducer::new(&tau, &cf, &m, &two, &two).unwrap();
        // mu = 3 tau - 4 exactly: eps is about -M ||tau q|| at every q.
        let mu = tau.mul_int(3).sub(&RealBall::from_int(4, p));
        let out = r.reduce(&mu, &[3], 1).unwrap();
        assert!(matches!(out.method, Method::Homogeneous { .. }));
        let lattice = r.reduce_member(&Member::Lattice { shift: 3 }).unwrap();
        assert!(lattice.w_bound >= BigInt::from(1));
        assert!(lattice.w_bound < BigInt::from(40));
    }

    #[test]
    fn negative_shift_covers_the_zero_coefficient() {
        let p = 512;
        let tau = ratio(p);
        let cf = cf_expand_all(&tau);
        let m = BigInt::from(1000);
        let two = RealBall::from_int(2, p);
        let r = Reducer::new(&tau, &cf, &m, &two, &two).unwrap();
        // mu = -tau + 2^-100: at u = 1 the form is 2^-100, so w must reach 100.
        let d = RealBall::from_dyadic(&Dyadic::new(BigInt::from(1), -100), p);
        let mu = d.sub(&tau);
        assert!(r.reduce(&mu, &[], 1).is_err());
        let out = r.reduce(&mu, &[-1], 1).unwrap();
        assert_eq!(out.method, Method::Homogeneous { shift: -1 });
        assert!(out.w_bound >= BigInt::from(100) && out.w_bound <= BigInt::from(101));
        // with u >= 2 the zero coefficient is out of range
        let out = r.reduce(&mu, &[-1], 2).unwrap();
        assert!(out.w_bound < BigInt::from(40));
    }

    #[test]
    fn family_statistics_are_order_free() {
        let p = 512;
        let tau = ratio(p);
        let cf = cf_expand_all(&tau);
        let m = BigInt::from(10_000);
        let a = RealBall::from_int(5, p);
        let b = RealBall::from_int(2, p);
        let r = Reducer::new(&tau, &cf, &m, &a, &b).unwrap();
        let member = |i: usize| {
            Ok(Member::Offset {
                mu: RealBall::from_ratio(i as i64 + 1, 97, p).unwrap(),
                shifts: Vec::new(),
                u_min: 1,
            })
        };
        let rep1 = dp_reduce_family(&r, 90, member, |i| format!("i={i}"));
        let rep2 = dp_reduce_family(&r, 90, member, |i| format!("i={i}"));
        assert_eq!(rep1.max_w_bound, rep2.max_w_bound);
        assert_eq!(rep1.argmax, rep2.argmax);
        assert_eq!(rep1.min_epsilon, rep2.min_epsilon);
        assert!(rep1.failures.is_empty());
        assert_eq!(
            rep1.methods.first_convergent + rep1.methods.later_convergent + rep1.methods.homogeneous,
            90
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = 256;
        let tau = ratio(p);
        let cf = cf_expand_all(&tau);
        let one = RealBall::one(p);
        assert!(Reducer::new(&tau, &cf, &BigInt::from(5), &one, &one).is_err());
        assert!(Reducer::new(&tau, &cf, &BigInt::from(0), &one, &RealBall::from_int(2, p)).is_err());
        let huge = BigInt::from(1) << 400usize;
        assert_eq!(
            Reducer::new(&tau, &cf, &huge, &one, &RealBall::from_int(2, p)).unwrap_err(),
            DpError::NoConvergent
        );
    }
}
