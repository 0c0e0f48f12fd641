mod expr;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use pillai_core::baker;
use pillai_core::contfrac::cf_expand_all;
use pillai_core::dpreduce::{DpError, Reducer};
use pillai_core::kfib::{dominant_root, fib_at};
use pillai_core::pipeline::{certify, emit_report, sci, CertifyConfig, Format};
use pillai_core::realball::{precision_cap, Dyadic, RealBall};
use pillai_core::search::{self, SearchConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pillai", version, about = "Certified computations for F_n^(k) - 3^m = F_n1^(k) - 3^m1")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact k-generalized Fibonacci number F_n^(k).
    Fib {
        #[arg(long)]
        k: u32,
        #[arg(long, allow_negative_numbers = true)]
        n: i64,
    },
    /// Certified enclosure of the dominant root of x^k - x^(k-1) - ... - 1.
    Root {
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 30)]
        digits: u32,
    },
    /// Certified continued fraction of an expression.
    Cf {
        #[arg(long)]
        expr: String,
        /// Last index to certify.
        #[arg(long)]
        to_index: usize,
        /// Starting working precision in decimal digits.
        #[arg(long, default_value_t = 100)]
        digits: u32,
    },
    /// Baker-type bounds at a given k, as JSON.
    Bounds {
        #[arg(long)]
        k: u32,
    },
    /// One reduction step, as JSON: bound on w from M|tau w - v + mu| <... A B^-w.
    Reduce {
        #[arg(long)]
        tau: String,
        #[arg(long)]
        mu: String,
        #[arg(long = "A")]
        a: String,
        #[arg(long = "B")]
        b: String,
        #[arg(long = "M")]
        m: BigInt,
    },
    /// Exhaustive search, one JSON solution per line.
    Search {
        #[arg(long, default_value_t = 4)]
        k_lo: u32,
        #[arg(long)]
        k_hi: u32,
        #[arg(long)]
        n_max: u32,
        #[arg(long)]
        m_max: u32,
        #[arg(long, default_value_t = search::DEFAULT_MODULUS)]
        modulus: u128,
    },
    /// Runs the full certification; exits 0 iff every phase passes.
    Certify {
        /// Small-k range up to 600 instead of the default 60.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        k_hi: Option<u32>,
        /// Minimum starting precision in bits.
        #[arg(long)]
        precision: Option<u32>,
        /// JSON report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a markdown summary here.
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Checkpoint directory; finished rows found there are reused.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Skip the large-k reduction.
        #[arg(long)]
        no_large_k: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    let mut out = std::io::stdout().lock();
    match cmd {
        Cmd::Fib { k, n } => {
            writeln!(out, "{}", fib_at(k, n)?)?;
        }
        Cmd::Root { k, digits } => {
            let prec = digits * 10 / 3 + 64;
            let r = dominant_root(k, prec)?;
            let (lo, hi) = decimal_bounds(&r, digits);
            writeln!(out, "[{lo}, {hi}]")?;
        }
        Cmd::Cf { expr, to_index, digits } => cf(&mut out, &expr, to_index, digits)?,
        Cmd::Bounds { k } => {
            let v = bounds(k)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Cmd::Reduce { tau, mu, a, b, m } => {
            let v = reduce(&tau, &mu, &a, &b, &m)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Cmd::Search { k_lo, k_hi, n_max, m_max, modulus } => {
            let cfg = SearchConfig { modulus, ..SearchConfig::new(k_lo, k_hi, n_max, m_max) };
            let res = search::search(&cfg)?;
            for s in &res.solutions {
                writeln!(out, "{}", serde_json::to_string(s)?)?;
            }
        }
        Cmd::Certify { full, k_hi, precision, out: path, markdown, resume, no_large_k } => {
            let mut cfg = if full { CertifyConfig::full() } else { CertifyConfig::default() };
            if let Some(k) = k_hi {
                cfg.k_hi = k;
            }
            cfg.precision = precision.unwrap_or(0);
            cfg.large_k = !no_large_k;
            cfg.resume = resume;
            let report = certify(&cfg)?;
            let json = emit_report(&report, Format::Json);
            match &path {
                Some(p) => std::fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(&json)?,
            }
            if let Some(p) = &markdown {
                std::fs::write(p, emit_report(&report, Format::Markdown))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            let s = &report.status;
            eprintln!(
                "search {:?}, small-k {:?}, bounds {:?}, large-k {:?}: {:?}",
                s.search, s.small_k, s.bounds, s.large_k, s.overall
            );
            return Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// `digits` decimals after the point, rounded outward.
fn decimal_bounds(x: &RealBall, digits: u32) -> (String, String) {
    let scale = BigInt::from(10u32).pow(digits);
    let lo = x.lower();
    let hi = x.upper();
    let lo = Dyadic::new(&lo.m * &scale, lo.e).floor();
    let hi = Dyadic::new(&hi.m * &scale, hi.e).ceil();
    (fixed(&lo, digits as usize), fixed(&hi, digits as usize))
}

fn fixed(n: &BigInt, digits: usize) -> String {
    let neg = n.sign() == num_bigint::Sign::Minus;
    let s = n.magnitude().to_string();
    let s = format!("{s:0>width$}", width = digits + 1);
    let (int, frac) = s.split_at(s.len() - digits);
    let sign = if neg { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

fn cf(out: &mut impl Write, src: &str, to_index: usize, digits: u32) -> Result<()> {
    let mut prec = (digits * 10 / 3 + 32).max(64);
    let cap = precision_cap();
    let cf = loop {
        let x = expr::eval(src, prec)?;
        let cf = cf_expand_all(&x);
        if cf.certified_len() > to_index || cf.terminated {
            break cf;
        }
        if prec >= cap {
            bail!("only {} quotients certified at the {cap}-bit cap", cf.certified_len());
        }
        prec = (prec * 2).min(cap);
    };
    let last = to_index.min(cf.certified_len().saturating_sub(1));
    for l in 0..=last {
        let (p, q) = &cf.convergents[l];
        writeln!(
            out,
            "{}",
            json!({"l": l, "a": cf.quotients[l].to_string(), "p": sci(p, 6), "q": sci(q, 6)})
        )?;
    }
    if last < to_index {
        eprintln!("expansion terminates after index {last}");
    }
    Ok(())
}

fn bounds(k: u32) -> Result<serde_json::Value> {
    if k < 4 {
        bail!("k must be at least 4");
    }
    let m_k = baker::lemma_bd_bound(&BigInt::from(k))?;
    let cutoff = baker::cutoff_k()?;
    Ok(json!({
        "k": k,
        "n_bound": m_k.to_string(),
        "n_bound_sci": sci(&m_k, 6),
        "cutoff_holds": baker::cutoff_holds(k)?,
        "cutoff_k": cutoff,
        "regime": if k >= cutoff { "large" } else { "small" },
        "chain": baker::bound_chain(k),
    }))
}

fn reduce(tau: &str, mu: &str, a: &str, b: &str, m: &BigInt) -> Result<serde_json::Value> {
    if *m < BigInt::from(1) {
        bail!("M must be positive");
    }
    let six_m: BigInt = m * 6u32;
    let cap = precision_cap();
    let mut prec = (2 * six_m.bits() as u32 + 192).max(128);
    loop {
        let tau_b = expr::eval(tau, prec)?;
        let mu_b = expr::eval(mu, prec)?;
        let a_b = expr::eval(a, prec)?;
        let b_b = expr::eval(b, prec)?;
        let cf = cf_expand_all(&tau_b);
        let res = Reducer::new(&tau_b, &cf, m, &a_b, &b_b).and_then(|r| r.reduce(&mu_b, &[], 1));
        match res {
            Ok(o) => {
                return Ok(json!({
                    "precision": prec,
                    "convergent_index": o.convergent_index,
                    "q": o.q.to_string(),
                    "epsilon": o.epsilon,
                    "w_bound": o.w_bound.to_string(),
                    "attempts": o.attempts,
                    "method": o.method,
                }))
            }
            Err(DpError::NoConvergent | DpError::PrecisionExhausted | DpError::MuNearZero) if prec < cap => {
                prec = (prec * 2).min(cap);
            }
            Err(e) => bail!("reduction failed at {prec} bits: {e}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_formatting() {
        assert_eq!(fixed(&BigInt::from(12345), 3), "12.345");
        assert_eq!(fixed(&BigInt::from(5), 3), "0.005");
        assert_eq!(fixed(&BigInt::from(-5), 2), "-0.05");
        assert_eq!(fixed(&BigInt::from(7), 0), "7");
    }

    #[test]
    fn decimal_bounds_are_outward() {
        let x = expr::eval("sqrt(2)", 200).unwrap();
        let (lo, hi) = decimal_bounds(&x, 5);
        assert_eq!(lo, "1.41421");
        assert_eq!(hi, "1.41422");
    }
}
