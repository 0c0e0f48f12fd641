//! Tiny arithmetic expression language evaluated in ball arithmetic.
//!
//! Grammar: `expr := term (('+'|'-') term)*`, `term := unary (('*'|'/') unary)*`,
//! `unary := '-' unary | power`, `power := atom ('^' unary)?`,
//! `atom := number | ident '(' expr ')' | '(' expr ')'`.
//! Functions: `log` (alias `ln`), `exp`, `sqrt`.

use anyhow::{anyhow, bail, Result};
use pillai_core::realball::RealBall;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Op(char),
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let cs: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let st = i;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.') {
                i += 1;
            }
            // exponent: 1e5, 2.5E-3
            if i < cs.len() && (cs[i] == 'e' || cs[i] == 'E') {
                let mut j = i + 1;
                if j < cs.len() && (cs[j] == '+' || cs[j] == '-') {
                    j += 1;
                }
                if j < cs.len() && cs[j].is_ascii_digit() {
                    i = j;
                    while i < cs.len() && cs[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Tok::Num(cs[st..i].iter().collect()));
        } else if c.is_ascii_alphabetic() {
            let st = i;
            while i < cs.len() && cs[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(cs[st..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            bail!("unexpected character {c:?} in expression");
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    prec: u32,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<RealBall> {
        let mut v = self.term()?;
        loop {
            if self.eat('+') {
                v = v.add(&self.term()?);
            } else if self.eat('-') {
                v = v.sub(&self.term()?);
            } else {
                return Ok(v);
            }
        }
    }

    fn term(&mut self) -> Result<RealBall> {
        let mut v = self.unary()?;
        loop {
            if self.eat('*') {
                v = v.mul(&self.unary()?);
            } else if self.eat('/') {
                v = v.div(&self.unary()?)?;
            } else {
                return Ok(v);
            }
        }
    }

    fn unary(&mut self) -> Result<RealBall> {
        if self.eat('-') {
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<RealBall> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        // Integer exponents are exact; anything else goes through exp(log).
        let save = self.pos;
        let int_exp = match self.toks.get(self.pos..self.pos + 2) {
            Some([Tok::Op('-'), Tok::Num(n)]) => n.parse::<i64>().ok().map(|v| (-v, 2)),
            _ => match self.peek() {
                Some(Tok::Num(n)) => n.parse::<i64>().ok().map(|v| (v, 1)),
                _ => None,
            },
        };
        if let Some((e, used)) = int_exp {
            let after = self.toks.get(self.pos + used);
            if !matches!(after, Some(Tok::Op('^'))) {
                self.pos += used;
                return Ok(base.pow_int(e)?);
            }
        }
        self.pos = save;
        let e = self.unary()?;
        Ok(e.mul(&base.log()?).exp()?)
    }

    fn atom(&mut self) -> Result<RealBall> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(RealBall::from_decimal(&n, self.prec)?)
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let v = self.expr()?;
                if !self.eat(')') {
                    bail!("expected ')'");
                }
                Ok(v)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if !self.eat('(') {
                    bail!("expected '(' after {name}");
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    bail!("expected ')' after argument of {name}");
                }
                Ok(match name.as_str() {
                    "log" | "ln" => arg.log()?,
                    "exp" => arg.exp()?,
                    "sqrt" => arg.sqrt()?,
                    _ => bail!("unknown function {name}"),
                })
            }
            Some(t) => Err(anyhow!("unexpected token {t:?}")),
            None => Err(anyhow!("unexpected end of expression")),
        }
    }
}

/// Evaluates `src` to a ball at `prec` working bits.
pub fn eval(src: &str, prec: u32) -> Result<RealBall> {
    let toks = lex(src)?;
    let mut p = Parser { toks: &toks, pos: 0, prec };
    let v = p.expr()?;
    if p.pos != toks.len() {
        bail!("trailing input in expression {src:?}");
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pillai_core::realball::{const_log2, const_log3};

    #[test]
    fn arithmetic() {
        let v = eval("1 + 2*3 - 4/2", 128).unwrap();
        assert!(v.contains_ball(&RealBall::from_int(5, 128)));
        let v = eval("-2^2", 128).unwrap();
        assert!(v.contains_ball(&RealBall::from_int(-4, 128)));
        let v = eval("2^-1", 128).unwrap();
        assert!((v.to_f64() - 0.5).abs() < 1e-30);
        let v = eval("1.5e2", 128).unwrap();
        assert!(v.contains_ball(&RealBall::from_int(150, 128)));
    }

    #[test]
    fn logs_match_constants() {
        let v = eval("log(3)/log(2)", 256).unwrap();
        let w = const_log3(256).div(&const_log2(256)).unwrap();
        assert!(v.overlaps(&w));
        assert!((v.to_f64() - 1.584962500721156).abs() < 1e-15);
    }

    #[test]
    fn real_power_and_sqrt() {
        let v = eval("2^0.5 - sqrt(2)", 200).unwrap();
        assert!(v.contains_ball(&RealBall::zero(200)));
        assert!(v.mag_upper().to_f64() < 1e-55);
    }

    #[test]
    fn errors() {
        assert!(eval("log(", 64).is_err());
        assert!(eval("foo(2)", 64).is_err());
        assert!(eval("1 2", 64).is_err());
        assert!(eval("log(-1)", 64).is_err());
        assert!(eval("1/0", 64).is_err());
    }
}
