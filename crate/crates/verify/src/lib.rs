//! Property checks and their input strategies, shared by the proptest suite
//! below and the acceptance runner in `tests/acceptance.rs`.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use pillai_core::contfrac::cf_expand_all;
use pillai_core::dpreduce::{dp_reduce, ReductionCase, Reducer};
use pillai_core::kfib::{fib_block, KFibContext};
use pillai_core::realball::{Dyadic, RealBall, Truth};
use proptest::prelude::*;

// ---- expression DAGs ----

#[derive(Debug, Clone)]
pub enum Node {
    Const(i64, u32),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a / (b^2 + 1)`
    Div(usize, usize),
    /// `log(a^2 + 1)`
    Log(usize),
    /// `exp(a / (a^2 + 1))`
    Exp(usize),
    /// `sqrt(a^2)`
    Sqrt(usize),
}

/// Nodes refer only to earlier nodes; the last node is the output.
pub fn dag() -> impl Strategy<Value = Vec<Node>> {
    (2usize..14)
        .prop_flat_map(|len| proptest::collection::vec((0u8..8, any::<u32>(), any::<u32>(), -50i64..50, 0u32..4), len))
        .prop_map(|raw| {
            let mut nodes = Vec::with_capacity(raw.len());
            for (i, (op, x, y, c, scale)) in raw.into_iter().enumerate() {
                if i == 0 || op == 0 {
                    nodes.push(Node::Const(c, scale));
                    continue;
                }
                let a = x as usize % i;
                let b = y as usize % i;
                nodes.push(match op {
                    1 => Node::Add(a, b),
                    2 => Node::Sub(a, b),
                    3 => Node::Mul(a, b),
                    4 => Node::Div(a, b),
                    5 => Node::Log(a),
                    6 => Node::Exp(a),
                    _ => Node::Sqrt(a),
                });
            }
            nodes
        })
}

fn sq1(x: &RealBall) -> RealBall {
    x.sqr().add(&RealBall::one(x.precision()))
}

pub fn eval_dag(nodes: &[Node], prec: u32) -> Option<RealBall> {
    let mut v: Vec<RealBall> = Vec::with_capacity(nodes.len());
    for n in nodes {
        let r = match *n {
            // c / 10^scale
            Node::Const(c, s) => RealBall::from_ratio(c, BigInt::from(10).pow(s), prec).ok()?,
            Node::Add(a, b) => v[a].add(&v[b]),
            Node::Sub(a, b) => v[a].sub(&v[b]),
            Node::Mul(a, b) => v[a].mul(&v[b]),
            Node::Div(a, b) => v[a].div(&sq1(&v[b])).ok()?,
            Node::Log(a) => sq1(&v[a]).log().ok()?,
            Node::Exp(a) => v[a].div(&sq1(&v[a])).ok()?.exp().ok()?,
            Node::Sqrt(a) => v[a].sqr().abs().sqrt().ok()?,
        };
        v.push(r);
    }
    v.pop()
}

/// Every precision's enclosure contains the midpoint of a much tighter one.
pub fn check_refinement(nodes: &[Node]) -> Result<(), String> {
    let Some(reference) = eval_dag(nodes, 2048) else {
        return Ok(());
    };
    for p in [53, 64, 128, 256, 512] {
        if let Some(b) = eval_dag(nodes, p) {
            if !b.contains(&reference.midpoint()) {
                return Err(format!("{p}-bit enclosure {b:?} misses reference {:?}", reference.midpoint()));
            }
        }
    }
    Ok(())
}

// ---- k-generalized Fibonacci ----

/// `|F_n - f_k(alpha) alpha^(n-1)| < 1/2`.
pub fn check_binet(ctx: &KFibContext, n: i64) -> Result<(), String> {
    let err = ctx.binet_error(n).map_err(|e| e.to_string())?;
    let half = RealBall::from_ratio(1, 2, err.precision()).unwrap();
    match err.lt(&half) {
        Truth::True => Ok(()),
        t => Err(format!("k = {}, n = {n}: error {} not certified below 1/2 ({t:?})", ctx.k, err.to_f64())),
    }
}

/// Plain k-term sums against the library's sequence, then the three-term
/// recursion and the power-of-two range, all exact.
pub fn check_identities(k: u32, n_hi: i64) -> Result<(), String> {
    let lib = fib_block(k, 2 - k as i64, n_hi).map_err(|e| e.to_string())?;
    let ku = k as usize;
    let mut plain: Vec<BigInt> = vec![BigInt::zero(); ku - 1];
    plain.push(BigInt::one());
    while plain.len() < lib.len() {
        let s: BigInt = plain[plain.len() - ku..].iter().sum();
        plain.push(s);
    }
    if plain != lib {
        return Err(format!("k = {k}: sequence differs from the k-term sum"));
    }
    // index n sits at position n + k - 2
    let at = |n: i64| &lib[(n + k as i64 - 2) as usize];
    for n in 2..=n_hi {
        if n <= k as i64 + 1 && *at(n) != BigInt::one() << (n - 2) as usize {
            return Err(format!("k = {k}: F_{n} != 2^{}", n - 2));
        }
        if n < n_hi {
            let rhs = at(n) * 2 - at(n - k as i64);
            if *at(n + 1) != rhs {
                return Err(format!("k = {k}: F_{} != 2 F_{n} - F_{}", n + 1, n - k as i64));
            }
        }
    }
    Ok(())
}

// ---- reduction soundness ----

#[derive(Debug, Clone)]
pub struct SmallCase {
    pub tau: String,
    pub mu: String,
    pub a: u32,
    pub b: u32,
    pub m: u32,
}

fn small_ball(src: &str, prec: u32) -> RealBall {
    // "sqrt:d", "logr:a:b" (log a / log b) or "frac:p:q"
    let parts: Vec<&str> = src.split(':').collect();
    let n = |i: usize| parts[i].parse::<i64>().unwrap();
    match parts[0] {
        "sqrt" => RealBall::from_int(n(1), prec).sqrt().unwrap(),
        "logr" => RealBall::from_int(n(1), prec)
            .log()
            .unwrap()
            .div(&RealBall::from_int(n(2), prec).log().unwrap())
            .unwrap(),
        _ => RealBall::from_ratio(n(1), n(2), prec).unwrap(),
    }
}

pub fn small_case() -> impl Strategy<Value = SmallCase> {
    let tau = prop_oneof![
        (2i64..60).prop_filter("non-square", |d| {
            let r = (*d as f64).sqrt().round() as i64;
            r * r != *d
        })
        .prop_map(|d| format!("sqrt:{d}")),
        (2i64..12, 2i64..12).prop_filter("independent", |(a, b)| {
            // a^i = b^j would make the ratio rational
            let (x, y) = ((*a as f64).ln(), (*b as f64).ln());
            let r = x / y;
            (1..8).all(|j| ((r * j as f64).round() - r * j as f64).abs() > 1e-9)
        })
        .prop_map(|(a, b)| format!("logr:{a}:{b}")),
    ];
    let mu = prop_oneof![
        (1i64..200, 2i64..200).prop_map(|(p, q)| format!("frac:{p}:{q}")),
        (2i64..90).prop_map(|d| format!("sqrt:{d}")),
    ];
    (tau, mu, 1u32..200, 2u32..5, 1u32..=30).prop_map(|(tau, mu, a, b, m)| SmallCase { tau, mu, a, b, m })
}

/// When `dp_reduce` returns a bound `W`, no `1 <= u <= M` and integer `v` have
/// `|u tau - v + mu| < A B^-(W+1)`; checked by enumerating `u`. Returns
/// whether a bound was produced.
pub fn check_dp_sound(c: &SmallCase) -> Result<bool, String> {
    let p = 256;
    let tau = small_ball(&c.tau, p);
    let mu = small_ball(&c.mu, p);
    let a = RealBall::from_int(c.a, p);
    let b = RealBall::from_int(c.b, p);
    let cf = cf_expand_all(&tau);
    let case = ReductionCase { tau: tau.clone(), mu: mu.clone(), a: a.clone(), b: b.clone(), m: BigInt::from(c.m) };
    let Ok(out) = dp_reduce(&case, &cf) else {
        // Declining to bound is always sound.
        return Ok(false);
    };
    let w: i64 = out.w_bound.to_string().parse().map_err(|_| "huge w".to_string())?;
    let rhs = a.mul(&b.pow_int(-(w + 1)).unwrap());
    for u in 1..=c.m as i64 {
        let d = tau.mul_int(u).add(&mu).dist_to_nearest_int();
        if d.lt(&rhs) == Truth::True {
            return Err(format!("{c:?}: u = {u} satisfies the inequality with w = {} > {w}", w + 1));
        }
    }
    Ok(true)
}

/// An offset next to the lattice: `mu = s tau + r + sign 2^-e`, reduced over
/// `u_min <= u <= M` with `s` as the only candidate shift.
#[derive(Debug, Clone)]
pub struct ShiftCase {
    pub tau: String,
    pub s: i64,
    pub r: i64,
    pub sign: i64,
    pub e: i64,
    pub a: u32,
    pub b: u32,
    pub m: u32,
    pub u_min: u32,
}

pub fn shift_case() -> impl Strategy<Value = ShiftCase> {
    let tau = (2i64..60)
        .prop_filter("non-square", |d| {
            let r = (*d as f64).sqrt().round() as i64;
            r * r != *d
        })
        .prop_map(|d| format!("sqrt:{d}"));
    (tau, -35i64..35, -3i64..3, prop_oneof![Just(-1i64), Just(1)], 4i64..60, 1u32..200, 2u32..5, 1u32..=30)
        .prop_flat_map(|(tau, s, r, sign, e, a, b, m)| {
            (1u32..=m).prop_map(move |u_min| ShiftCase { tau: tau.clone(), s, r, sign, e, a, b, m, u_min })
        })
}

/// Same enumeration as [`check_dp_sound`] for the shifted path, including
/// the zero coefficient `u = -s` when it is in range.
pub fn check_shift_sound(c: &ShiftCase) -> Result<bool, String> {
    let p = 256;
    let tau = small_ball(&c.tau, p);
    let delta = RealBall::from_dyadic(&Dyadic::new(BigInt::from(c.sign), -c.e), p);
    let mu = tau.mul_int(c.s).add(&RealBall::from_int(c.r, p)).add(&delta);
    let a = RealBall::from_int(c.a, p);
    let b = RealBall::from_int(c.b, p);
    let cf = cf_expand_all(&tau);
    let Ok(red) = Reducer::new(&tau, &cf, &BigInt::from(c.m), &a, &b) else {
        return Ok(false);
    };
    let Ok(out) = red.reduce(&mu, &[c.s], c.u_min as u64) else {
        return Ok(false);
    };
    let w: i64 = out.w_bound.to_string().parse().map_err(|_| "huge w".to_string())?;
    let rhs = a.mul(&b.pow_int(-(w + 1)).unwrap());
    for u in c.u_min as i64..=c.m as i64 {
        let d = tau.mul_int(u).add(&mu).dist_to_nearest_int();
        if d.lt(&rhs) == Truth::True {
            return Err(format!("{c:?}: u = {u} satisfies the inequality with w = {} > {w}", w + 1));
        }
    }
    Ok(true)
}

// ---- continued fractions ----

/// `p_l q_(l-1) - p_(l-1) q_l = +-1` with alternating sign on every
/// certified index.
pub fn check_determinant(x: &RealBall) -> Result<usize, String> {
    let cf = cf_expand_all(x);
    let c = &cf.convergents;
    for l in 1..c.len() {
        let det = &c[l].0 * &c[l - 1].1 - &c[l - 1].0 * &c[l].1;
        let expect = if l % 2 == 1 { BigInt::one() } else { BigInt::from(-1) };
        if det != expect {
            return Err(format!("index {l}: determinant {det}"));
        }
    }
    Ok(c.len())
}

pub fn cf_input() -> impl Strategy<Value = (String, u32)> {
    let src = prop_oneof![
        (2i64..1000).prop_map(|d| format!("sqrt:{d}")),
        (2i64..30, 2i64..30).prop_filter("distinct", |(a, b)| a != b).prop_map(|(a, b)| format!("logr:{a}:{b}")),
        (1i64..100_000, 1i64..100_000).prop_map(|(p, q)| format!("frac:{p}:{q}")),
    ];
    (src, 64u32..1500)
}

pub fn cf_value(src: &str, prec: u32) -> RealBall {
    small_ball(src, prec)
}

#[cfg(test)]
mod tests {
    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn enclosures_survive_refinement(nodes in dag()) {
            check_refinement(&nodes).map_err(TestCaseError::fail)?;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn reduction_bound_is_sound(case in small_case()) {
            check_dp_sound(&case).map_err(TestCaseError::fail)?;
        }

        #[test]
        fn shifted_reduction_is_sound(case in shift_case()) {
            check_shift_sound(&case).map_err(TestCaseError::fail)?;
        }

        #[test]
        fn convergent_determinant((src, prec) in cf_input()) {
            check_determinant(&cf_value(&src, prec)).map_err(TestCaseError::fail)?;
        }
    }

    #[test]
    fn binet_error_below_half_on_grid() {
        for k in 2..=30 {
            let ctx = KFibContext::new(k, 512).unwrap();
            for n in 2..=200 {
                check_binet(&ctx, n).unwrap();
            }
        }
    }

    #[test]
    fn recursion_identities_on_grid() {
        for k in 2..=30 {
            check_identities(k, 200).unwrap();
        }
    }
}
