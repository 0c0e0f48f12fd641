//! Exhaustive search for `F_n - F_n1 = 3^m - 3^m1` on bounded ranges.
//!
//! Both sides are reduced modulo a fixed modulus. The `3^m - 3^m1` residues
//! do not depend on `k` and are tabulated once; every `F_n - F_n1` residue is
//! then probed against the table and collisions are checked exactly.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::kfib::{FibSeq, SolutionRecord};

pub const DEFAULT_MODULUS: u128 = 100_000_000_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("verified solution outside the known families: {0:?}")]
    UnclassifiedSolution(Box<SolutionRecord>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub k_lo: u32,
    pub k_hi: u32,
    pub n_lo: u32,
    pub n_hi: u32,
    pub m_lo: u32,
    pub m_hi: u32,
    pub modulus: u128,
}

impl SearchConfig {
    pub fn new(k_lo: u32, k_hi: u32, n_hi: u32, m_hi: u32) -> Self {
        SearchConfig { k_lo, k_hi, n_lo: 3, n_hi, m_lo: 2, m_hi, modulus: DEFAULT_MODULUS }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.n_lo < 3 {
            return Err(SearchError::InvalidConfig("n_lo < 3"));
        }
        if self.m_lo < 2 {
            return Err(SearchError::InvalidConfig("m_lo < 2"));
        }
        if self.modulus < 2 {
            return Err(SearchError::InvalidConfig("modulus < 2"));
        }
        if self.k_lo < 2 {
            return Err(SearchError::InvalidConfig("k_lo < 2"));
        }
        Ok(())
    }
}

/// A modular collision `(k, n, n1, m, m1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Candidate {
    pub k: u32,
    pub n: u32,
    pub n1: u32,
    pub m: u32,
    pub m1: u32,
}

fn residue(x: &BigInt, modulus: u128) -> u128 {
    let r = x % BigInt::from(modulus);
    let r = if r < BigInt::zero() { r + BigInt::from(modulus) } else { r };
    r.to_u128().expect("residue below modulus")
}

fn sub_mod(a: u128, b: u128, m: u128) -> u128 {
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

/// Residues of `3^m - 3^m1` for `m` in range and `1 <= m1 < m`.
pub struct PowerTable {
    map: HashMap<u128, Vec<(u32, u32)>>,
}

impl PowerTable {
    pub fn new(m_lo: u32, m_hi: u32, modulus: u128) -> Self {
        let mut pow = Vec::with_capacity(m_hi as usize + 1);
        let mut p = BigInt::from(1);
        for _ in 0..=m_hi {
            pow.push(residue(&p, modulus));
            p *= 3;
        }
        let mut map: HashMap<u128, Vec<(u32, u32)>> = HashMap::new();
        for m in m_lo..=m_hi {
            for m1 in 1..m {
                let r = sub_mod(pow[m as usize], pow[m1 as usize], modulus);
                map.entry(r).or_default().push((m, m1));
            }
        }
        PowerTable { map }
    }

    pub fn get(&self, r: u128) -> &[(u32, u32)] {
        self.map.get(&r).map_or(&[], Vec::as_slice)
    }
}

/// Collisions for a single `k` against a prebuilt table.
pub fn residue_search_k(cfg: &SearchConfig, k: u32, table: &PowerTable) -> Vec<Candidate> {
    if cfg.n_lo > cfg.n_hi {
        return Vec::new();
    }
    let fib: Vec<u128> = FibSeq::new(k)
        .skip_while(|(i, _)| *i < 2)
        .take_while(|(i, _)| *i <= cfg.n_hi as i64)
        .map(|(_, v)| residue(&v, cfg.modulus))
        .collect();
    let at = |n: u32| fib[n as usize - 2];
    let mut out = Vec::new();
    for n in cfg.n_lo..=cfg.n_hi {
        for n1 in 2..n {
            for &(m, m1) in table.get(sub_mod(at(n), at(n1), cfg.modulus)) {
                out.push(Candidate { k, n, n1, m, m1 });
            }
        }
    }
    out
}

/// All collisions over the configured ranges, sorted.
pub fn residue_search(cfg: &SearchConfig) -> Result<Vec<Candidate>, SearchError> {
    cfg.validate()?;
    if cfg.k_lo > cfg.k_hi || cfg.m_lo > cfg.m_hi || cfg.n_lo > cfg.n_hi {
        return Ok(Vec::new());
    }
    let table = PowerTable::new(cfg.m_lo, cfg.m_hi, cfg.modulus);
    let mut out: Vec<Candidate> = (cfg.k_lo..=cfg.k_hi)
        .into_par_iter()
        .flat_map_iter(|k| residue_search_k(cfg, k, &table))
        .collect();
    out.sort();
    Ok(out)
}

/// Exact check of `F_n - F_n1 = 3^m - 3^m1`.
pub fn verify_candidate(c: &Candidate) -> Option<SolutionRecord> {
    if c.n <= c.n1 || c.n1 < 2 || c.m <= c.m1 || c.m1 < 1 {
        return None;
    }
    let mut f_n = BigInt::zero();
    let mut f_n1 = BigInt::zero();
    for (i, v) in FibSeq::new(c.k).take_while(|(i, _)| *i <= c.n as i64) {
        if i == c.n1 as i64 {
            f_n1 = v.clone();
        }
        if i == c.n as i64 {
            f_n = v;
        }
    }
    let three = BigInt::from(3);
    let lhs = &f_n - three.pow(c.m);
    let rhs = &f_n1 - three.pow(c.m1);
    (lhs == rhs).then(|| SolutionRecord {
        k: c.k,
        n: c.n,
        m: c.m,
        n1: c.n1,
        m1: c.m1,
        c: lhs.clone(),
        lhs,
        rhs,
    })
}

/// Verified solutions and the number of rejected collisions.
#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub candidates: usize,
    pub rejected: usize,
    pub solutions: Vec<SolutionRecord>,
}

pub fn search(cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    let cands = residue_search(cfg)?;
    let solutions: Vec<SolutionRecord> = cands.par_iter().filter_map(verify_candidate).collect();
    Ok(SearchResult {
        candidates: cands.len(),
        rejected: cands.len() - solutions.len(),
        solutions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    /// Both indices in the power-of-two range, from `2^a - 3^b = 2^c - 3^d`.
    Classical,
    /// `n >= k + 2`.
    Sporadic,
}

/// `(n, m, n1, m1, c, k_min)`: `F_n - 3^m = F_n1 - 3^m1 = c` for every `k >= k_min`.
pub const CLASSICAL: [(u32, u32, u32, u32, i64, u32); 3] =
    [(5, 2, 3, 1, -1, 4), (7, 3, 5, 1, 5, 6), (10, 5, 6, 1, 13, 9)];

/// `(k, n, m, n1, m1, c)`.
pub const SPORADIC: [(u32, u32, u32, u32, u32, i64); 4] = [
    (4, 8, 4, 3, 3, -25),
    (5, 10, 5, 3, 2, -7),
    (6, 10, 5, 5, 1, 5),
    (6, 10, 5, 7, 3, 5),
];

pub fn classify(r: &SolutionRecord) -> Result<Family, SearchError> {
    let c = r.c.to_i64();
    let classical = r.n <= r.k + 1
        && r.n1 <= r.k + 1
        && CLASSICAL.iter().any(|&(n, m, n1, m1, cc, kmin)| {
            (r.n, r.m, r.n1, r.m1) == (n, m, n1, m1) && c == Some(cc) && r.k >= kmin
        });
    if classical {
        return Ok(Family::Classical);
    }
    let sporadic = r.n >= r.k + 2
        && SPORADIC.iter().any(|&(k, n, m, n1, m1, cc)| {
            (r.k, r.n, r.m, r.n1, r.m1) == (k, n, m, n1, m1) && c == Some(cc)
        });
    if sporadic {
        return Ok(Family::Sporadic);
    }
    Err(SearchError::UnclassifiedSolution(Box::new(r.clone())))
}

pub fn classify_solutions(records: &[SolutionRecord]) -> Result<Vec<(SolutionRecord, Family)>, SearchError> {
    records.iter().map(|r| classify(r).map(|f| (r.clone(), f))).collect()
}

/// The known solution set restricted to the given ranges, as `(k, n, m, n1, m1)`.
pub fn expected_solutions(cfg: &SearchConfig) -> Vec<(u32, u32, u32, u32, u32)> {
    let in_range = |n: u32, m: u32| (cfg.n_lo..=cfg.n_hi).contains(&n) && (cfg.m_lo..=cfg.m_hi).contains(&m);
    let mut out = Vec::new();
    for k in cfg.k_lo..=cfg.k_hi {
        for &(n, m, n1, m1, _, kmin) in &CLASSICAL {
            if k >= kmin && in_range(n, m) {
                out.push((k, n, m, n1, m1));
            }
        }
        for &(kk, n, m, n1, m1, _) in &SPORADIC {
            if kk == k && in_range(n, m) {
                out.push((k, n, m, n1, m1));
            }
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(k: u32, n: u32, n1: u32, m: u32, m1: u32) -> Candidate {
        Candidate { k, n, n1, m, m1 }
    }

    #[test]
    fn empty_ranges() {
        let mut cfg = SearchConfig::new(4, 4, 3, 2);
        cfg.n_hi = 2;
        assert!(residue_search(&cfg).unwrap().is_empty());
        let cfg = SearchConfig::new(5, 4, 100, 100);
        assert!(residue_search(&cfg).unwrap().is_empty());
    }

    #[test]
    fn invalid_config() {
        let mut cfg = SearchConfig::new(4, 4, 10, 10);
        cfg.m_lo = 1;
        assert!(residue_search(&cfg).is_err());
        cfg.m_lo = 2;
        cfg.modulus = 1;
        assert!(residue_search(&cfg).is_err());
    }

    #[test]
    fn verify_examples() {
        let r = verify_candidate(&cand(4, 8, 3, 4, 3)).unwrap();
        assert_eq!(r.c, BigInt::from(-25));
        let r = verify_candidate(&cand(9, 10, 6, 5, 1)).unwrap();
        assert_eq!(r.c, BigInt::from(13));
        assert!(verify_candidate(&cand(4, 7, 5, 3, 2)).is_none());
        // F_6^(6) = 16 gives 13, not 5.
        assert!(verify_candidate(&cand(6, 10, 6, 5, 1)).is_none());
    }

    #[test]
    fn known_candidates_found() {
        let c4 = residue_search(&SearchConfig::new(4, 4, 600, 600)).unwrap();
        assert!(c4.contains(&cand(4, 8, 3, 4, 3)));
        assert!(c4.contains(&cand(4, 5, 3, 2, 1)));
        let c5 = residue_search(&SearchConfig::new(5, 5, 600, 600)).unwrap();
        assert!(c5.contains(&cand(5, 10, 3, 5, 2)));
    }

    #[test]
    fn classification() {
        let r = verify_candidate(&cand(7, 7, 5, 3, 1)).unwrap();
        assert_eq!(classify(&r).unwrap(), Family::Classical);
        let r = verify_candidate(&cand(5, 10, 3, 5, 2)).unwrap();
        assert_eq!(classify(&r).unwrap(), Family::Sporadic);
        let r = verify_candidate(&cand(6, 10, 7, 5, 3)).unwrap();
        assert_eq!(classify(&r).unwrap(), Family::Sporadic);
        let fake = SolutionRecord { k: 4, n: 9, ..r };
        assert!(matches!(classify(&fake), Err(SearchError::UnclassifiedSolution(_))));
    }

    #[test]
    fn matches_brute_force_on_tiny_ranges() {
        for k in 4..=8 {
            let cfg = SearchConfig::new(k, k, 60, 60);
            let found: Vec<_> = search(&cfg)
                .unwrap()
                .solutions
                .iter()
                .map(|r| (r.k, r.n, r.m, r.n1, r.m1))
                .collect();
            let fib: Vec<BigInt> = FibSeq::new(k).skip_while(|(i, _)| *i < 2).take(59).map(|(_, v)| v).collect();
            let pow: Vec<BigInt> = (0..=60).map(|m| BigInt::from(3).pow(m)).collect();
            let mut brute = Vec::new();
            for n in 3..=60u32 {
                for n1 in 2..n {
                    let d = &fib[n as usize - 2] - &fib[n1 as usize - 2];
                    for m in 2..=60u32 {
                        for m1 in 1..m {
                            if pow[m as usize].clone() - &pow[m1 as usize] == d {
                                brute.push((k, n, m, n1, m1));
                            }
                        }
                    }
                }
            }
            let mut found_sorted = found.clone();
            found_sorted.sort();
            brute.sort();
            assert_eq!(found_sorted, brute, "k = {k}");
        }
    }
}
