//! End-to-end replay: exhaustive search on small ranges, reduction sweeps for
//! `k <= 600`, the bound chain, and the iterated reductions for `k > 600`.
//!
//! Every phase produces a serializable section of a [`CertificationReport`].
//! Nothing in a report depends on timing or scheduling, so two runs with the
//! same configuration emit identical bytes.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::baker::{self, AbsoluteBounds, BakerError, ChainStep, CoefficientCheck};
use crate::contfrac::{cf_expand_all, CFExpansion};
use crate::dpreduce::{dp_reduce_family, DpError, FamilyReport, Member, MethodCounts, Reducer, MAX_RETRIES};
use crate::kfib::{KFibContext, KFibError, SolutionRecord};
use crate::realball::{const_log2, const_log3, precision_cap, BallError, RealBall, Truth};
use crate::search::{self, SearchConfig, SearchError};

pub const SCHEMA_VERSION: u32 = 1;
/// The small-k argument assumes `n > N_ASSUMED`.
pub const N_ASSUMED: u64 = 600;
/// The large-k argument assumes `k > K_CUTOFF`.
pub const K_CUTOFF: u64 = 600;
pub const MAX_TABLE_ROWS: usize = 12;
/// Ranges beyond this mean a reduction failed to bite; the phase fails.
const RANGE_CAP: u64 = 1 << 13;
/// Below this the case split routes a member to another linear form.
const GUARD: u64 = 19;
/// Failures kept verbatim per sweep; the rest are only counted.
const LISTED_FAILURES: usize = 20;

/// Sweep ranges used for the small-k forms when the derived ones are smaller.
pub const GAMMA1_RANGE: u64 = 600;
pub const GAMMA2_RANGE: u64 = 375;
pub const GAMMA3_RANGE: (u64, u64) = (603, 377);
/// Ranges of the three large-k families in the first row.
pub const FAMILY1_RANGE: u64 = 1690;
pub const FAMILY2_RANGE: u64 = 1066;
pub const FAMILY3_RANGE: (u64, u64) = (1708, 1074);
/// Exponent of the first large-k `M = 10^e`.
pub const FIRST_M_EXPONENT: u32 = 507;

/// Published iteration table: `(exponent of M, n - n1, m - m1, k)`.
pub const REFERENCE_TABLE: [(u32, u64, u64, u64); 5] = [
    (507, 1708, 1074, 3428),
    (88, 319, 197, 662),
    (80, 287, 180, 590),
    (79, 282, 180, 584),
    (79, 282, 180, 584),
];
/// Published lower bounds on `eps` for the three first-row families.
pub const REFERENCE_EPSILON: [f64; 3] = [0.0186, 0.0372, 0.00058];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    KFib(#[from] KFibError),
    #[error(transparent)]
    Baker(#[from] BakerError),
    #[error(transparent)]
    Ball(#[from] BallError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("precision cap reached in {0}")]
    PrecisionExhausted(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    fn of(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Compact, checkpointable summary of a family sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub a: String,
    pub b: String,
    pub members: usize,
    pub convergent_index: usize,
    #[serde(with = "crate::bigint_serde::option")]
    pub max_w_bound: Option<BigInt>,
    pub argmax: Option<String>,
    pub min_epsilon: Option<f64>,
    pub argmin_epsilon: Option<String>,
    pub failure_count: usize,
    /// The first few failures, in member order.
    pub failures: Vec<String>,
    #[serde(skip)]
    starved: bool,
    pub methods: MethodCounts,
}

impl Sweep {
    fn new(name: &str, a: &str, b: &str, r: FamilyReport) -> Sweep {
        Sweep {
            name: name.to_string(),
            a: a.to_string(),
            b: b.to_string(),
            members: r.members,
            convergent_index: r.convergent_index,
            max_w_bound: r.max_w_bound,
            argmax: r.argmax,
            min_epsilon: r.min_epsilon,
            argmin_epsilon: r.argmin_epsilon,
            failure_count: r.failures.len(),
            failures: r.failures.iter().take(LISTED_FAILURES).map(|f| format!("{}: {}", f.member, f.error)).collect(),
            starved: r.failures.iter().any(|f| f.error == DpError::PrecisionExhausted),
            methods: r.methods,
        }
    }

    pub fn ok(&self) -> bool {
        self.failure_count == 0
    }

    /// Largest bound, `0` for an empty sweep; saturates on absurd values.
    pub fn max_w(&self) -> u64 {
        self.max_w_bound.as_ref().map_or(0, |w| w.to_u64().unwrap_or(u64::MAX))
    }

    fn precision_starved(&self) -> bool {
        self.starved
    }
}

fn int(n: impl Into<BigInt>, p: u32) -> RealBall {
    RealBall::from_int(n, p)
}

/// Decimal scientific notation rounded to `digits` significant figures.
pub fn sci(n: &BigInt, digits: usize) -> String {
    let s = n.magnitude().to_string();
    let sign = if n.sign() == num_bigint::Sign::Minus { "-" } else { "" };
    if s.len() <= digits {
        return format!("{sign}{s}");
    }
    let head: BigInt = s[..digits].parse().expect("digits");
    let rounded = if s.as_bytes()[digits] >= b'5' { head + 1 } else { head };
    let mut r = rounded.to_string();
    let mut exp = s.len() - 1;
    if r.len() > digits {
        r.pop();
        exp += 1;
    }
    let (a, b) = r.split_at(1);
    if b.is_empty() {
        format!("{sign}{a}e{exp}")
    } else {
        format!("{sign}{a}.{b}e{exp}")
    }
}

/// `n = 2^v r` with `r` odd, or `n = 3^v r` with `3 ∤ r`.
fn strip(mut n: BigInt, p: u32) -> (BigInt, u64) {
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&BigInt::from(p));
        if !r.is_zero() {
            return (n, v);
        }
        n = q;
        v += 1;
    }
}

fn three_pow(j: u64) -> BigInt {
    BigInt::from(3).pow(j as u32)
}

// ---------------------------------------------------------------------------
// search phase

#[derive(Debug, Clone, Serialize)]
pub struct SearchPhase {
    pub k_lo: u32,
    pub k_hi: u32,
    pub n_max: u32,
    pub m_max: u32,
    #[serde(serialize_with = "ser_u128")]
    pub modulus: u128,
    pub candidates: usize,
    pub rejected: usize,
    pub classical: usize,
    pub sporadic: usize,
    pub unclassified: Vec<SolutionRecord>,
    /// Solutions expected from the known families but not found, and vice versa.
    pub missing: Vec<(u32, u32, u32, u32, u32)>,
    pub unexpected: Vec<(u32, u32, u32, u32, u32)>,
    pub status: Verdict,
}

fn ser_u128<S: serde::Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

pub fn run_search_phase(cfg: &SearchConfig) -> Result<(SearchPhase, Vec<SolutionRecord>), PipelineError> {
    let res = search::search(cfg)?;
    let mut solutions = res.solutions;
    solutions.sort();
    let (mut classical, mut sporadic, mut unclassified) = (0, 0, Vec::new());
    for r in &solutions {
        match search::classify(r) {
            Ok(search::Family::Classical) => classical += 1,
            Ok(search::Family::Sporadic) => sporadic += 1,
            Err(_) => unclassified.push(r.clone()),
        }
    }
    let found: HashSet<_> = solutions.iter().map(|r| (r.k, r.n, r.m, r.n1, r.m1)).collect();
    let expected = search::expected_solutions(cfg);
    let expected_set: HashSet<_> = expected.iter().copied().collect();
    let missing: Vec<_> = expected.iter().filter(|t| !found.contains(t)).copied().collect();
    let mut unexpected: Vec<_> = found.iter().filter(|t| !expected_set.contains(t)).copied().collect();
    unexpected.sort();
    let status = Verdict::of(unclassified.is_empty() && missing.is_empty() && unexpected.is_empty());
    let phase = SearchPhase {
        k_lo: cfg.k_lo,
        k_hi: cfg.k_hi,
        n_max: cfg.n_hi,
        m_max: cfg.m_hi,
        modulus: cfg.modulus,
        candidates: res.candidates,
        rejected: res.rejected,
        classical,
        sporadic,
        unclassified,
        missing,
        unexpected,
        status,
    };
    Ok((phase, solutions))
}

// ---------------------------------------------------------------------------
// small k

/// Reductions for one `k <= 600`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallKRow {
    pub k: u32,
    #[serde(with = "crate::bigint_serde")]
    pub m_k: BigInt,
    pub precision: u32,
    pub invariants: Truth,
    pub gamma_a: Sweep,
    pub gamma_b: Sweep,
    pub gamma1: Sweep,
    pub gamma2: Sweep,
    pub gamma3: Sweep,
    pub n_minus_n1: u64,
    pub m_minus_m1: u64,
    /// `n <= n_bound`, from `0.8 n <= w` in the last form.
    pub n_bound: u64,
}

impl SmallKRow {
    pub fn sweeps(&self) -> [&Sweep; 5] {
        [&self.gamma_a, &self.gamma_b, &self.gamma1, &self.gamma2, &self.gamma3]
    }

    pub fn ok(&self) -> bool {
        self.invariants.is_true() && self.sweeps().iter().all(|s| s.ok()) && self.n_bound <= N_ASSUMED
    }
}

/// `n < (5/4)(w + 1)`.
fn n_from_w(w: u64) -> u64 {
    (5 * (w + 1) - 1) / 4
}

/// Precision for a slope whose reductions use convergents just above `6M`.
fn start_precision(m: &BigInt, min_prec: u32) -> u32 {
    let bits = (m * 6u32).bits() as u32;
    (2 * bits + 192).max(min_prec)
}

pub fn small_k_row(k: u32, min_prec: u32) -> Result<SmallKRow, PipelineError> {
    let m = baker::lemma_bd_bound(&BigInt::from(k))?;
    let mut prec = start_precision(&m, min_prec);
    loop {
        if prec > precision_cap() {
            return Err(PipelineError::PrecisionExhausted(format!("small k = {k}")));
        }
        if let Some(row) = small_k_attempt(k, &m, prec)? {
            return Ok(row);
        }
        prec *= 2;
    }
}

// As k grows, alpha -> 2 and f(alpha) -> 1/2, so the small-k offsets drift
// onto the lattice. With 2^l - 1 = 3^a r and 3^j - 1 = 2^b r' (r, r' prime
// to 6): mu0 ~ -tau, P[l] ~ (l - 1) tau for large l, P[l] ~ a - tau when
// r = 1, Q[j] ~ j for large j, Q[j] ~ b tau when r' = 1, and
// P[l] - Q[j] ~ a - (b + 1) tau when r = r'. These are the shifts tried
// when eps fails.
const MU0_SHIFT: i64 = -1;

// The coefficient u is n - 1 or n1 - 1 = n - l - 1, and n > N_ASSUMED.
const U_MIN_N: u64 = N_ASSUMED;

fn u_min_n1(l: usize) -> u64 {
    N_ASSUMED.saturating_sub(l as u64).max(1)
}

#[derive(Default)]
struct Shapes {
    /// `r` of `2^l - 1`, index `l`.
    p: Vec<BigInt>,
    /// `(r', b)` of `3^j - 1`, index `j`.
    q: Vec<(BigInt, u64)>,
}

impl Shapes {
    fn grow(&mut self, l_hi: u64, j_hi: u64) {
        while (self.p.len() as u64) <= l_hi {
            let l = self.p.len() as u32;
            self.p.push(if l == 0 { BigInt::zero() } else { strip((BigInt::one() << l) - 1, 3).0 });
        }
        while (self.q.len() as u64) <= j_hi {
            let j = self.q.len() as u64;
            self.q.push(if j == 0 { (BigInt::zero(), 0) } else { strip(three_pow(j) - 1, 2) });
        }
    }

    fn p_shift(&self, l: usize) -> i64 {
        if self.p[l].is_one() {
            -1
        } else {
            l as i64 - 1
        }
    }

    fn q_shift(&self, j: usize) -> i64 {
        match &self.q[j] {
            (r, b) if r.is_one() => *b as i64,
            _ => 0,
        }
    }

    fn gamma3(&self, l: usize, j: usize) -> Vec<i64> {
        let mut v = vec![l as i64, self.p_shift(l) - self.q_shift(j)];
        let (r, b) = &self.q[j];
        if *r == self.p[l] {
            v.push(-(*b as i64) - 1);
        }
        v
    }
}

fn small_k_attempt(k: u32, m: &BigInt, prec: u32) -> Result<Option<SmallKRow>, PipelineError> {
    let ctx = KFibContext::new(k, prec)?;
    let p = ctx.precision();
    let log3 = const_log3(p);
    let tau = ctx.log_alpha.div(&log3)?;
    let cf = cf_expand_all(&tau);
    match cf.first_q_above(&(m * 6u32)) {
        Some(first) if first + MAX_RETRIES < cf.certified_len() => {}
        _ => return Ok(None),
    }
    let alpha = &ctx.alpha;
    let log_f = ctx.fk_alpha.log()?;
    let mu0 = log_f.div(&log3)?;
    let two_alpha6 = alpha.pow_int(6)?.mul_int(2);
    let six_log3 = int(6, p).div(&log3)?;
    let three = int(3, p);

    let single = |red: &Reducer, mu: &RealBall| {
        dp_reduce_family(red, 1, |_| Ok(Member::Offset { mu: mu.clone(), shifts: vec![MU0_SHIFT], u_min: U_MIN_N }), |_| format!("k={k}"))
    };
    let red_a = Reducer::new(&tau, &cf, m, &two_alpha6, alpha)?;
    let red_b = Reducer::new(&tau, &cf, m, &six_log3, &three)?;
    let gamma_a = Sweep::new("gamma", "2 alpha^6", "alpha", single(&red_a, &mu0));
    let gamma_b = Sweep::new("gamma", "6/log 3", "3", single(&red_b, &mu0));
    let l1 = GAMMA1_RANGE.max(gamma_a.max_w()).min(RANGE_CAP);
    let j2 = GAMMA2_RANGE.max(gamma_b.max_w()).min(RANGE_CAP);

    // P[l] = log(f (alpha^l - 1)) / log 3, Q[j] = log(3^j - 1) / log 3.
    let one = RealBall::one(p);
    let mut p_tab: Vec<RealBall> = vec![RealBall::zero(p)];
    let mut pw = alpha.clone();
    let mut q_tab: Vec<RealBall> = vec![RealBall::zero(p)];
    let mut grow = |p_tab: &mut Vec<RealBall>, q_tab: &mut Vec<RealBall>, l_hi: u64, j_hi: u64| -> Result<(), BallError> {
        while (p_tab.len() as u64) <= l_hi {
            p_tab.push(log_f.add(&pw.sub(&one).log()?).div(&log3)?);
            pw = pw.mul(alpha);
        }
        while (q_tab.len() as u64) <= j_hi {
            let j = q_tab.len() as u64;
            q_tab.push(int(three_pow(j) - 1, p).log()?.div(&log3)?);
        }
        Ok(())
    };
    grow(&mut p_tab, &mut q_tab, l1, j2)?;
    let mut shapes = Shapes::default();
    shapes.grow(l1, j2);

    let red_1 = Reducer::new(&tau, &cf, m, &six_log3, &three)?;
    let gamma1 = Sweep::new(
        "gamma1",
        "6/log 3",
        "3",
        dp_reduce_family(
            &red_1,
            l1 as usize,
            |i| Ok(Member::Offset { mu: p_tab[i + 1].clone(), shifts: vec![i as i64 + 1, shapes.p_shift(i + 1)], u_min: u_min_n1(i + 1) }),
            |i| format!("k={k},l={}", i + 1),
        ),
    );
    let red_2 = Reducer::new(&tau, &cf, m, &two_alpha6.div(&log3)?, alpha)?;
    let gamma2 = Sweep::new(
        "gamma2",
        "2 alpha^6/log 3",
        "alpha",
        dp_reduce_family(
            &red_2,
            j2 as usize,
            |i| Ok(Member::Offset { mu: mu0.sub(&q_tab[i + 1]), shifts: vec![MU0_SHIFT - shapes.q_shift(i + 1)], u_min: U_MIN_N }),
            |i| format!("k={k},j={}", i + 1),
        ),
    );
    let n_minus_n1 = gamma_a.max_w().max(gamma2.max_w()).max(GUARD);
    let m_minus_m1 = gamma1.max_w().max(gamma_b.max_w()).max(GUARD);
    let l3 = GAMMA3_RANGE.0.max(n_minus_n1).min(RANGE_CAP);
    let j3 = GAMMA3_RANGE.1.max(m_minus_m1).min(RANGE_CAP);
    grow(&mut p_tab, &mut q_tab, l3, j3)?;
    shapes.grow(l3, j3);

    let red_3 = Reducer::new(&tau, &cf, m, &int(1328, p), &three)?;
    let jn = j3 as usize;
    let gamma3 = Sweep::new(
        "gamma3",
        "1328",
        "3",
        dp_reduce_family(
            &red_3,
            (l3 * j3) as usize,
            |i| {
                let (l, j) = (i / jn + 1, i % jn + 1);
                Ok(Member::Offset { mu: p_tab[l].sub(&q_tab[j]), shifts: shapes.gamma3(l, j), u_min: u_min_n1(l) })
            },
            |i| format!("k={k},l={},j={}", i / jn + 1, i % jn + 1),
        ),
    );
    let sweeps = [&gamma_a, &gamma_b, &gamma1, &gamma2, &gamma3];
    if sweeps.iter().any(|s| s.precision_starved()) {
        return Ok(None);
    }
    let n_bound = n_from_w(gamma3.max_w());
    Ok(Some(SmallKRow {
        k,
        m_k: m.clone(),
        precision: p,
        invariants: ctx.check_invariants(),
        gamma_a,
        gamma_b,
        gamma1,
        gamma2,
        gamma3,
        n_minus_n1,
        m_minus_m1,
        n_bound,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallKPhase {
    pub k_lo: u32,
    pub k_hi: u32,
    pub rows: Vec<SmallKRow>,
    /// Maxima over all rows of the five sweeps, in row order.
    pub max_w: [u64; 5],
    pub max_n_bound: u64,
    pub resumed: Vec<u32>,
    pub status: Verdict,
}

fn checkpoint_path(dir: &Path, k: u32) -> PathBuf {
    dir.join(format!("small_k_{k:04}.json"))
}

fn read_checkpoint(path: &Path, k: u32) -> Result<Option<SmallKRow>, PipelineError> {
    let bad = |message: String| PipelineError::Checkpoint { path: path.to_path_buf(), message };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(bad(e.to_string())),
    };
    let row: SmallKRow = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if row.k != k {
        return Err(bad(format!("holds k = {}, expected {k}", row.k)));
    }
    Ok(Some(row))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let bad = |message: String| PipelineError::Checkpoint { path: path.to_path_buf(), message };
    let text = serde_json::to_string_pretty(value).map_err(|e| bad(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| bad(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| bad(e.to_string()))
}

pub fn run_small_k_phase(
    k_lo: u32,
    k_hi: u32,
    min_prec: u32,
    resume: Option<&Path>,
) -> Result<SmallKPhase, PipelineError> {
    if let Some(dir) = resume {
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Checkpoint { path: dir.to_path_buf(), message: e.to_string() })?;
    }
    let mut rows = Vec::new();
    let mut resumed = Vec::new();
    for k in k_lo..=k_hi {
        let cached = match resume {
            Some(dir) => read_checkpoint(&checkpoint_path(dir, k), k)?,
            None => None,
        };
        let row = match cached {
            Some(row) => {
                resumed.push(k);
                row
            }
            None => {
                let row = small_k_row(k, min_prec)?;
                if let Some(dir) = resume {
                    write_json(&checkpoint_path(dir, k), &row)?;
                }
                row
            }
        };
        rows.push(row);
    }
    let mut max_w = [0u64; 5];
    for r in &rows {
        for (slot, s) in max_w.iter_mut().zip(r.sweeps()) {
            *slot = (*slot).max(s.max_w());
        }
    }
    let max_n_bound = rows.iter().map(|r| r.n_bound).max().unwrap_or(0);
    let status = Verdict::of(!rows.is_empty() && rows.iter().all(SmallKRow::ok));
    Ok(SmallKPhase { k_lo, k_hi, rows, max_w, max_n_bound, resumed, status })
}

// ---------------------------------------------------------------------------
// bounds

#[derive(Debug, Clone, Serialize)]
pub struct BoundsPhase {
    pub cutoff_k: u32,
    pub absolute: AbsoluteBounds,
    pub coefficients: Vec<CoefficientCheck>,
    pub chain: Vec<(u32, Vec<ChainStep>)>,
    pub status: Verdict,
}

/// `k` values at which the intermediate chain is evaluated.
pub const CHAIN_SAMPLES: [u32; 4] = [4, 10, 100, 600];

pub fn run_case_split_bounds() -> Result<BoundsPhase, PipelineError> {
    let cutoff_k = baker::cutoff_k()?;
    let absolute = baker::absolute_bounds()?;
    let coefficients = baker::coefficient_checks();
    let chain: Vec<_> = CHAIN_SAMPLES.iter().map(|&k| (k, baker::bound_chain(k))).collect();
    let ok = cutoff_k <= K_CUTOFF as u32 + 1
        && absolute.k_max <= BigInt::from(10).pow(41)
        && absolute.n_max < BigInt::from(10).pow(FIRST_M_EXPONENT)
        && coefficients.iter().all(|c| c.within_tolerance)
        && chain.iter().all(|(_, steps)| steps.iter().all(|s| s.holds.is_true()));
    Ok(BoundsPhase { cutoff_k, absolute, coefficients, chain, status: Verdict::of(ok) })
}

// ---------------------------------------------------------------------------
// large k

/// `log(3)/log(2)` with a certified expansion long enough for `M`.
pub fn large_k_slope(m: &BigInt, min_len: usize, min_prec: u32) -> Result<(RealBall, CFExpansion), PipelineError> {
    let mut prec = (2 * start_precision(m, 0)).max(min_prec);
    loop {
        if prec > precision_cap() {
            return Err(PipelineError::PrecisionExhausted("log 3 / log 2".into()));
        }
        let tau = const_log3(prec).div(&const_log2(prec))?;
        let cf = cf_expand_all(&tau);
        let len = cf.certified_len();
        if let Some(first) = cf.first_q_above(&(m * 6u32)) {
            if first + MAX_RETRIES < len && min_len <= len {
                return Ok((tau, cf));
            }
        }
        prec *= 2;
    }
}

/// Case split before the reductions: either `n/m` is a convergent of the
/// slope, which bounds `min(2^(n-n1), 3^(m-m1), 2^(k/2))` by
/// `26 (a_(l+1) + 2) q_l`, or the Legendre inequality fails and the same
/// minimum is below `52 M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreStep {
    pub m_exponent: u32,
    pub last_index: usize,
    pub q_last: String,
    #[serde(with = "crate::bigint_serde")]
    pub max_partial_quotient: BigInt,
    pub max_at: usize,
    pub n_minus_n1: u64,
    pub m_minus_m1: u64,
    pub k: u64,
}

pub fn legendre_step(cf: &CFExpansion, m_exponent: u32) -> Result<LegendreStep, PipelineError> {
    let m = BigInt::from(10).pow(m_exponent);
    let last = cf
        .last_q_at_most(&m)
        .ok_or_else(|| PipelineError::PrecisionExhausted("Legendre step".into()))?;
    let (amax, at) = cf
        .max_partial_quotient(last)
        .map_err(|_| PipelineError::PrecisionExhausted("Legendre step".into()))?;
    let q = &cf.convergents[last].1;
    let p = 128 + 2 * q.bits().max(m.bits()) as u32;
    let y = int((&amax + 2u32) * q * 26u32, p).max(&int(&m * 52u32, p));
    let ly = y.log()?;
    let l2 = const_log2(p);
    let l3 = const_log3(p);
    Ok(LegendreStep {
        m_exponent,
        last_index: last,
        q_last: sci(q, 6),
        max_partial_quotient: amax,
        max_at: at,
        n_minus_n1: ly.div(&l2)?.floor_upper().to_u64().unwrap_or(u64::MAX),
        m_minus_m1: ly.div(&l3)?.floor_upper().to_u64().unwrap_or(u64::MAX),
        k: ly.mul_int(2).div(&l2)?.floor_upper().to_u64().unwrap_or(u64::MAX),
    })
}

/// `log(2^l - 1)/log 2` and `log(3^j - 1)/log 2`, grown on demand, plus the
/// exact data deciding when a member lies on the lattice.
struct LogTables {
    p: u32,
    log2: RealBall,
    two: Vec<RealBall>,
    three: Vec<RealBall>,
    /// `2^l - 1 = 3^w s`: `(s, w)`.
    two_strip: Vec<(BigInt, u64)>,
    /// `3^j - 1 = 2^v r`: `r`.
    three_strip: Vec<BigInt>,
}

impl LogTables {
    fn new(p: u32) -> Self {
        LogTables {
            p,
            log2: const_log2(p),
            two: vec![RealBall::zero(p)],
            three: vec![RealBall::zero(p)],
            two_strip: vec![(BigInt::zero(), 0)],
            three_strip: vec![BigInt::zero()],
        }
    }

    fn grow(&mut self, l_hi: u64, j_hi: u64) -> Result<(), BallError> {
        while (self.two.len() as u64) <= l_hi {
            let l = self.two.len();
            let v: BigInt = (BigInt::one() << l) - 1;
            self.two.push(int(v.clone(), self.p).log()?.div(&self.log2)?);
            self.two_strip.push(strip(v, 3));
        }
        while (self.three.len() as u64) <= j_hi {
            let v: BigInt = three_pow(self.three.len() as u64) - 1;
            self.three.push(int(v.clone(), self.p).log()?.div(&self.log2)?);
            self.three_strip.push(strip(v, 2).0);
        }
        Ok(())
    }

    fn family1(&self, l: usize) -> Member {
        match &self.two_strip[l] {
            (s, w) if s.is_one() => Member::Lattice { shift: *w },
            _ => Member::Offset { mu: self.two[l].neg(), shifts: Vec::new(), u_min: 1 },
        }
    }

    fn family2(&self, j: usize) -> Member {
        if self.three_strip[j].is_one() {
            Member::Lattice { shift: 0 }
        } else {
            Member::Offset { mu: self.three[j].clone(), shifts: vec![j as i64], u_min: 1 }
        }
    }

    fn family3(&self, l: usize, j: usize) -> Member {
        let (s, w) = &self.two_strip[l];
        if *s == self.three_strip[j] {
            Member::Lattice { shift: *w }
        } else {
            Member::Offset { mu: self.three[j].sub(&self.two[l]), shifts: vec![j as i64], u_min: 1 }
        }
    }
}

/// One pass of the large-k argument with `n < M = 10^m_exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeKRow {
    pub row: usize,
    pub m_exponent: u32,
    pub convergent_index: usize,
    pub q: String,
    pub legendre: LegendreStep,
    pub family1_m: Sweep,
    pub family1_k: Sweep,
    pub family2_n: Sweep,
    pub family2_k: Sweep,
    pub family3_k: Sweep,
    pub n_minus_n1: u64,
    pub m_minus_m1: u64,
    pub k: u64,
}

impl LargeKRow {
    pub fn sweeps(&self) -> [&Sweep; 5] {
        [&self.family1_m, &self.family1_k, &self.family2_n, &self.family2_k, &self.family3_k]
    }

    pub fn ok(&self) -> bool {
        self.sweeps().iter().all(|s| s.ok())
    }

    pub fn bounds(&self) -> (u32, u64, u64, u64) {
        (self.m_exponent, self.n_minus_n1, self.m_minus_m1, self.k)
    }
}

fn large_k_row(
    row: usize,
    tau: &RealBall,
    cf: &CFExpansion,
    m_exponent: u32,
    tables: &mut LogTables,
) -> Result<LargeKRow, PipelineError> {
    let m = BigInt::from(10).pow(m_exponent);
    let p = tau.precision();
    let legendre = legendre_step(cf, m_exponent)?;
    let (floor1, floor2, floor3) = if row == 1 {
        (FAMILY1_RANGE, FAMILY2_RANGE, FAMILY3_RANGE)
    } else {
        (0, 0, (0, 0))
    };
    let l1 = legendre.n_minus_n1.max(floor1).min(RANGE_CAP);
    let j2 = legendre.m_minus_m1.max(floor2).min(RANGE_CAP);
    tables.grow(l1, j2)?;

    // Bounds on k come from 2^(-k/2) = (sqrt 2)^(-k).
    let sqrt2 = int(2, p).sqrt()?;
    let red_1m = Reducer::new(tau, cf, &m, &int(78, p), &int(3, p))?;
    let red_k = Reducer::new(tau, cf, &m, &int(94, p), &sqrt2)?;
    let red_2n = Reducer::new(tau, cf, &m, &int(94, p), &int(2, p))?;
    let t: &LogTables = tables;
    let f1 = |i: usize| Ok(t.family1(i + 1));
    let f2 = |i: usize| Ok(t.family2(i + 1));
    let lab1 = |i: usize| format!("l={}", i + 1);
    let lab2 = |i: usize| format!("j={}", i + 1);
    let family1_m = Sweep::new("family1", "78", "3", dp_reduce_family(&red_1m, l1 as usize, f1, lab1));
    let family1_k = Sweep::new("family1", "94", "sqrt 2", dp_reduce_family(&red_k, l1 as usize, f1, lab1));
    let family2_n = Sweep::new("family2", "94", "2", dp_reduce_family(&red_2n, j2 as usize, f2, lab2));
    let family2_k = Sweep::new("family2", "94", "sqrt 2", dp_reduce_family(&red_k, j2 as usize, f2, lab2));

    let n_minus_n1 = l1.max(family2_n.max_w());
    let m_minus_m1 = j2.max(family1_m.max_w());
    let l3 = n_minus_n1.max(floor3.0).min(RANGE_CAP);
    let j3 = m_minus_m1.max(floor3.1).min(RANGE_CAP);
    tables.grow(l3, j3)?;
    let t: &LogTables = tables;
    let jn = j3 as usize;
    let family3_k = Sweep::new(
        "family3",
        "94",
        "sqrt 2",
        dp_reduce_family(
            &red_k,
            (l3 * j3) as usize,
            |i| Ok(t.family3(i / jn + 1, i % jn + 1)),
            |i| format!("l={},j={}", i / jn + 1, i % jn + 1),
        ),
    );
    let k = legendre.k.max(family1_k.max_w()).max(family2_k.max_w()).max(family3_k.max_w());
    Ok(LargeKRow {
        row,
        m_exponent,
        convergent_index: red_k.first_index(),
        q: sci(red_k.first_q(), 6),
        legendre,
        family1_m,
        family1_k,
        family2_n,
        family2_k,
        family3_k,
        n_minus_n1,
        m_minus_m1,
        k,
    })
}

/// Convergent facts of the slope `log 3 / log 2` used by the case split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFacts {
    pub precision: u32,
    pub certified_len: usize,
    /// `max a_(l+1)` over `l <= 972` and the quotient index attaining it.
    #[serde(with = "crate::bigint_serde")]
    pub max_partial_quotient_972: BigInt,
    pub max_at: usize,
    /// `(index, q_index)` for indices 971 to 977, 0-based with `q_0 = 1`.
    pub q: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeKPhase {
    pub slope: SlopeFacts,
    pub rows: Vec<LargeKRow>,
    pub stabilized: bool,
    /// Every row's bounds are at most the previous row's.
    pub monotone: bool,
    pub final_k: u64,
    pub status: Verdict,
}

/// `10^e` with `e` the number of decimal digits needed to exceed
/// `4e42 k^11 (log k)^7`.
pub fn next_m_exponent(k: u64) -> Result<u32, PipelineError> {
    let n = baker::lemma_bd_bound(&BigInt::from(k))? + 1u32;
    let digits = n.to_string().len() as u32;
    let e = if BigInt::from(10).pow(digits - 1) >= n { digits - 1 } else { digits };
    Ok(e)
}

pub fn run_large_k_phase(min_prec: u32, resume: Option<&Path>) -> Result<LargeKPhase, PipelineError> {
    let path = resume.map(|d| d.join("large_k.json"));
    if let Some(path) = &path {
        if let Ok(text) = std::fs::read_to_string(path) {
            return serde_json::from_str(&text)
                .map_err(|e| PipelineError::Checkpoint { path: path.clone(), message: e.to_string() });
        }
    }
    let m0 = BigInt::from(10).pow(FIRST_M_EXPONENT);
    let (tau, cf) = large_k_slope(&m0, 980, min_prec)?;
    let (amax, at) = cf
        .max_partial_quotient(972)
        .map_err(|_| PipelineError::PrecisionExhausted("slope expansion".into()))?;
    let slope = SlopeFacts {
        precision: tau.precision(),
        certified_len: cf.certified_len(),
        max_partial_quotient_972: amax,
        max_at: at,
        q: (971..=977).map(|i| (i, sci(&cf.convergents[i].1, 6))).collect(),
    };
    // The offsets are multiplied by q just above 6M; they need that many bits.
    let last = cf.first_q_above(&(&m0 * 6u32)).expect("checked") + MAX_RETRIES;
    let mut tables = LogTables::new(cf.convergents[last].1.bits() as u32 + 160);
    let mut rows: Vec<LargeKRow> = Vec::new();
    let mut m_exponent = FIRST_M_EXPONENT;
    let mut stabilized = false;
    while rows.len() < MAX_TABLE_ROWS {
        let row = large_k_row(rows.len() + 1, &tau, &cf, m_exponent, &mut tables)?;
        let ok = row.ok();
        let k = row.k;
        let same = rows.last().is_some_and(|prev| prev.bounds() == row.bounds());
        rows.push(row);
        if !ok || same {
            stabilized = same;
            break;
        }
        m_exponent = next_m_exponent(k)?;
        if m_exponent > FIRST_M_EXPONENT {
            break;
        }
    }
    let final_k = rows.last().map_or(u64::MAX, |r| r.k);
    let monotone = rows.windows(2).all(|w| {
        let (a, b) = (w[0].bounds(), w[1].bounds());
        b.0 <= a.0 && b.1 <= a.1 && b.2 <= a.2 && b.3 <= a.3
    });
    // Each row is a complete argument on its own, so a row that is looser
    // than its predecessor is reported but does not invalidate the result.
    let ok = stabilized && final_k <= K_CUTOFF && rows.iter().all(LargeKRow::ok);
    let phase = LargeKPhase { slope, rows, stabilized, monotone, final_k, status: Verdict::of(ok) };
    if let Some(path) = &path {
        write_json(path, &phase)?;
    }
    Ok(phase)
}

// ---------------------------------------------------------------------------
// report

/// A difference between a recomputed quantity and its published value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub id: String,
    pub note: String,
}

fn flag(id: &str, note: impl Into<String>) -> Flag {
    Flag { id: id.to_string(), note: note.into() }
}

#[derive(Debug, Clone, Serialize)]
pub struct Status {
    pub search: Verdict,
    pub small_k: Verdict,
    pub bounds: Verdict,
    pub large_k: Verdict,
    pub overall: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyConfig {
    pub k_lo: u32,
    pub k_hi: u32,
    pub n_max: u32,
    pub m_max: u32,
    #[serde(serialize_with = "ser_u128")]
    pub modulus: u128,
    /// Minimum starting precision in bits; phases raise it as needed.
    pub precision: u32,
    pub large_k: bool,
    #[serde(skip)]
    pub resume: Option<PathBuf>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            k_lo: 4,
            k_hi: 60,
            n_max: 600,
            m_max: 600,
            modulus: search::DEFAULT_MODULUS,
            precision: 0,
            large_k: true,
            resume: None,
        }
    }
}

impl CertifyConfig {
    pub fn full() -> Self {
        CertifyConfig { k_hi: 600, ..CertifyConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub schema_version: u32,
    pub config: Option<CertifyConfig>,
    pub solutions: Vec<SolutionRecord>,
    pub search: Option<SearchPhase>,
    pub small_k: Option<SmallKPhase>,
    pub bounds: Option<BoundsPhase>,
    pub large_k: Option<LargeKPhase>,
    pub flags: Vec<Flag>,
    pub status: Status,
}

impl CertificationReport {
    pub fn empty() -> Self {
        CertificationReport {
            schema_version: SCHEMA_VERSION,
            config: None,
            solutions: Vec::new(),
            search: None,
            small_k: None,
            bounds: None,
            large_k: None,
            flags: Vec::new(),
            status: Status {
                search: Verdict::Skipped,
                small_k: Verdict::Skipped,
                bounds: Verdict::Skipped,
                large_k: Verdict::Skipped,
                overall: Verdict::Fail,
            },
        }
    }

    pub fn passed(&self) -> bool {
        self.status.overall == Verdict::Pass
    }

    fn finish(&mut self) {
        let s = &mut self.status;
        s.search = self.search.as_ref().map_or(Verdict::Skipped, |p| p.status);
        s.small_k = self.small_k.as_ref().map_or(Verdict::Skipped, |p| p.status);
        s.bounds = self.bounds.as_ref().map_or(Verdict::Skipped, |p| p.status);
        s.large_k = self.large_k.as_ref().map_or(Verdict::Skipped, |p| p.status);
        let all = [s.search, s.small_k, s.bounds, s.large_k];
        let ran = all.iter().any(|v| *v != Verdict::Skipped);
        s.overall = Verdict::of(ran && all.iter().all(|v| *v != Verdict::Fail));
        self.flags = discrepancy_flags(self);
    }
}

fn discrepancy_flags(r: &CertificationReport) -> Vec<Flag> {
    let mut out = vec![
        flag(
            "n-assumption",
            "the small-k contradiction is stated against n > 500 although n > 600 is assumed; n > 600 is used throughout",
        ),
        flag(
            "log-base",
            "one step of the chain writes (m - m1) log 2 where log 3 is meant; log 3 is used, the inequality direction is unaffected",
        ),
    ];
    if let Some(s) = &r.search {
        if s.k_lo <= 6 && 6 <= s.k_hi {
            let partners: Vec<_> = r
                .solutions
                .iter()
                .filter(|x| x.k == 6 && x.n == 10 && x.m == 5)
                .map(|x| format!("(n1={}, m1={})", x.n1, x.m1))
                .collect();
            out.push(flag(
                "k6-partner",
                format!(
                    "F_10^(6) - 3^5 = 5 is printed with partner F_6^(6) - 3^1 = 13; exact search gives {}",
                    partners.join(", ")
                ),
            ));
        }
    }
    if let Some(b) = &r.bounds {
        for c in &b.coefficients {
            if !c.strictly_below {
                out.push(flag(
                    &format!("coefficient-{}", c.name),
                    format!("recomputed {:.4e} exceeds stated {:.3e} (rounding)", c.recomputed, c.stated),
                ));
            }
            if let Some(note) = c.note {
                out.push(flag(&format!("absorption-{}", c.name), note));
            }
        }
    }
    if let Some(l) = &r.large_k {
        let q = |i: usize| l.slope.q.iter().find(|(j, _)| *j == i).map(|(_, s)| s.as_str()).unwrap_or("?");
        out.push(flag(
            "q-index",
            format!(
                "stated q_973 = 1.6834e507 is q_972 = {} in 0-based indexing with q_0 = 1; q_973 = {}, q_977 = {}",
                q(972),
                q(973),
                q(977)
            ),
        ));
        out.push(flag("family1-constant", "one inequality prints 98 * 3^-(m - m1); the reduction uses A = 78, B = 3"));
        if let Some(first) = l.rows.first() {
            let eps = [&first.family1_m, &first.family2_n, &first.family3_k];
            for (i, (s, stated)) in eps.iter().zip(REFERENCE_EPSILON).enumerate() {
                let got = s.min_epsilon.unwrap_or(f64::NAN);
                if got.partial_cmp(&stated) != Some(std::cmp::Ordering::Greater) {
                    out.push(flag(
                        &format!("epsilon-family{}", i + 1),
                        format!("minimum eps {got:.3e} at {:?} does not exceed stated {stated}", s.argmin_epsilon),
                    ));
                }
            }
        }
        if !l.monotone {
            out.push(flag("table-monotone", "some row is looser than the one before it; each row stands on its own"));
        }
        for (row, stated) in l.rows.iter().zip(REFERENCE_TABLE) {
            if row.bounds() != stated {
                out.push(flag(
                    &format!("table-row{}", row.row),
                    format!("computed (M=10^{}, {}, {}, {}), stated {:?}", row.m_exponent, row.n_minus_n1, row.m_minus_m1, row.k, stated),
                ));
            }
        }
    }
    out
}

/// Runs every enabled phase.
pub fn certify(cfg: &CertifyConfig) -> Result<CertificationReport, PipelineError> {
    let mut report = CertificationReport::empty();
    report.config = Some(cfg.clone());
    let search_cfg = SearchConfig {
        k_lo: cfg.k_lo,
        k_hi: cfg.k_hi,
        n_lo: 3,
        n_hi: cfg.n_max,
        m_lo: 2,
        m_hi: cfg.m_max,
        modulus: cfg.modulus,
    };
    let (phase, solutions) = run_search_phase(&search_cfg)?;
    report.search = Some(phase);
    report.solutions = solutions;
    report.small_k = Some(run_small_k_phase(cfg.k_lo, cfg.k_hi, cfg.precision, cfg.resume.as_deref())?);
    report.bounds = Some(run_case_split_bounds()?);
    if cfg.large_k {
        report.large_k = Some(run_large_k_phase(cfg.precision, cfg.resume.as_deref())?);
    }
    report.finish();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Markdown,
}

pub fn emit_report(report: &CertificationReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
            v.push(b'\n');
            v
        }
        Format::Markdown => markdown(report).into_bytes(),
    }
}

fn verdict(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skipped => "skipped",
    }
}

fn markdown(r: &CertificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Certificate (schema {})\n", r.schema_version);
    let st = &r.status;
    let _ = writeln!(s, "| phase | status |\n|---|---|");
    for (name, v) in [
        ("search", st.search),
        ("small k", st.small_k),
        ("bounds", st.bounds),
        ("large k", st.large_k),
        ("overall", st.overall),
    ] {
        let _ = writeln!(s, "| {name} | {} |", verdict(v));
    }
    if let Some(p) = &r.search {
        let _ = writeln!(
            s,
            "\n## Search\n\nk in [{}, {}], n <= {}, m <= {}: {} solutions ({} classical, {} sporadic), {} candidates, {} rejected.",
            p.k_lo,
            p.k_hi,
            p.n_max,
            p.m_max,
            r.solutions.len(),
            p.classical,
            p.sporadic,
            p.candidates,
            p.rejected
        );
    }
    if let Some(p) = &r.small_k {
        let _ = writeln!(
            s,
            "\n## Small k\n\nk in [{}, {}]; sweep maxima gamma (alpha) {}, gamma (3) {}, gamma1 {}, gamma2 {}, gamma3 {}; n <= {}.",
            p.k_lo, p.k_hi, p.max_w[0], p.max_w[1], p.max_w[2], p.max_w[3], p.max_w[4], p.max_n_bound
        );
    }
    if let Some(b) = &r.bounds {
        let _ = writeln!(
            s,
            "\n## Bounds\n\ncutoff k = {}; k < {}; n < {}.\n\n| coefficient | recomputed | stated |\n|---|---|---|",
            b.cutoff_k,
            sci(&b.absolute.k_max, 5),
            sci(&b.absolute.n_max, 5)
        );
        for c in &b.coefficients {
            let _ = writeln!(s, "| {} | {:.4e} | {:.3e} |", c.name, c.recomputed, c.stated);
        }
    }
    if let Some(l) = &r.large_k {
        let _ = writeln!(
            s,
            "\n## Large k\n\nmax a_(l+1), l <= 972: {} at index {}.\n\n| | M | n-n1 <= | m-m1 <= | k <= |\n|---|---|---|---|---|",
            l.slope.max_partial_quotient_972, l.slope.max_at
        );
        for row in &l.rows {
            let _ = writeln!(
                s,
                "| {} | 10^{} | {} | {} | {} |",
                row.row, row.m_exponent, row.n_minus_n1, row.m_minus_m1, row.k
            );
        }
    }
    if !r.flags.is_empty() {
        let _ = writeln!(s, "\n## Flags\n");
        for f in &r.flags {
            let _ = writeln!(s, "- {}: {}", f.id, f.note);
        }
    }
    s
}
