//! S-expression syntax for formulas.
//!
//! ```text
//! (sup (abs (- (reward 0) 1/2)) (trans 0 (reward 1)))
//! (nu X (max 0 (- (reward 1) (trans 1 (neg X)))))
//! ```

use num_rational::Rational64;

use super::formula::{check_name, Formula, LipOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Token<'_>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Token::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Token::Close));
                i += 1;
            }
            b';' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !matches!(bytes[i], b'(' | b')' | b';') && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push((start, Token::Atom(&text[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    tokens: Vec<(usize, Token<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.offset(),
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.tokens.get(self.pos).map(|t| t.1.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn rational(&mut self) -> Result<Rational64> {
        match self.peek() {
            Some(Token::Atom(s)) if looks_numeric(s) => {
                let s = *s;
                match parse_rational(s) {
                    Some(q) => {
                        self.pos += 1;
                        Ok(q)
                    }
                    None => self.error(format!("invalid rational `{s}`")),
                }
            }
            _ => self.error("expected a rational constant"),
        }
    }

    fn index(&mut self) -> Result<usize> {
        match self.peek() {
            Some(Token::Atom(s)) => match s.parse::<usize>() {
                Ok(a) => {
                    self.pos += 1;
                    Ok(a)
                }
                Err(_) => self.error(format!("expected an action index, got `{s}`")),
            },
            _ => self.error("expected an action index"),
        }
    }

    fn name(&mut self) -> Result<String> {
        match self.peek() {
            Some(Token::Atom(s)) if check_name(s).is_ok() => {
                let s = s.to_string();
                self.pos += 1;
                Ok(s)
            }
            _ => self.error("expected a variable name"),
        }
    }

    fn close(&mut self) -> Result<()> {
        match self.peek() {
            Some(Token::Close) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.error("expected `)`"),
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        let start = self.pos;
        match self.next() {
            None => self.error("unexpected end of input"),
            Some(Token::Close) => {
                self.pos = start;
                self.error("unexpected `)`")
            }
            Some(Token::Atom(s)) => {
                if looks_numeric(s) {
                    self.pos = start;
                    self.rational().map(Formula::Const)
                } else if check_name(s).is_ok() {
                    Ok(Formula::Var(s.to_string()))
                } else {
                    self.pos = start;
                    self.error(format!("unexpected atom `{s}`"))
                }
            }
            Some(Token::Open) => {
                let head = match self.next() {
                    Some(Token::Atom(h)) => h,
                    _ => {
                        self.pos = start + 1;
                        return self.error("expected an operator after `(`");
                    }
                };
                let f = match head {
                    "sup" | "inf" => {
                        let mut fs = Vec::new();
                        while !matches!(self.peek(), Some(Token::Close) | None) {
                            fs.push(self.formula()?);
                        }
                        if fs.is_empty() {
                            return self.error(format!("`{head}` needs at least one argument"));
                        }
                        if head == "sup" {
                            Formula::Sup(fs)
                        } else {
                            Formula::Inf(fs)
                        }
                    }
                    "neg" => Formula::Comb(LipOp::Negate, vec![self.formula()?]),
                    "abs" => Formula::Comb(LipOp::Abs, vec![self.formula()?]),
                    "shift" => {
                        let q = self.rational()?;
                        Formula::Comb(LipOp::Shift(q), vec![self.formula()?])
                    }
                    "scale" => {
                        let q = self.rational()?;
                        Formula::Comb(LipOp::Scale(q), vec![self.formula()?])
                    }
                    "max" | "min" | "-" => {
                        let op = match head {
                            "max" => LipOp::Max,
                            "min" => LipOp::Min,
                            _ => LipOp::Subtract,
                        };
                        let f = self.formula()?;
                        let g = self.formula()?;
                        Formula::Comb(op, vec![f, g])
                    }
                    "reward" => Formula::Reward(self.index()?),
                    "trans" => {
                        let a = self.index()?;
                        Formula::Trans(a, Box::new(self.formula()?))
                    }
                    "nu" => {
                        let x = self.name()?;
                        Formula::Nu(x, Box::new(self.formula()?))
                    }
                    other => {
                        self.pos = start + 1;
                        return self.error(format!("unknown operator `{other}`"));
                    }
                };
                self.close()?;
                Ok(f)
            }
        }
    }
}

fn looks_numeric(s: &str) -> bool {
    let rest = s.strip_prefix('-').unwrap_or(s);
    rest.starts_with(|c: char| c.is_ascii_digit())
}

fn parse_rational(s: &str) -> Option<Rational64> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.parse::<i64>().ok()?, d.parse::<i64>().ok()?),
        None => (s.parse::<i64>().ok()?, 1),
    };
    if d <= 0 || n == i64::MIN {
        return None;
    }
    Some(Rational64::new(n, d))
}

/// Parses one formula; trailing input is an error.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let mut p = Parser {
        tokens: tokenize(text),
        pos: 0,
        end: text.len(),
    };
    let f = p.formula()?;
    if p.pos != p.tokens.len() {
        return p.error("trailing input after formula");
    }
    Ok(f)
}

/// Parses a sequence of formulas, e.g. the contents of a formula file.
pub fn parse_formulas(text: &str) -> Result<Vec<Formula>> {
    let mut p = Parser {
        tokens: tokenize(text),
        pos: 0,
        end: text.len(),
    };
    let mut out = Vec::new();
    while p.pos < p.tokens.len() {
        out.push(p.formula()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_documented_example() {
        let text = "(sup (abs (- (reward 0) 1/2)) (trans 0 (reward 1)))";
        let f = parse_formula(text).unwrap();
        assert_eq!(
            f,
            Formula::Sup(vec![
                Formula::abs(Formula::sub(Formula::Reward(0), Formula::constant(1, 2))),
                Formula::trans(0, Formula::Reward(1)),
            ])
        );
        assert_eq!(f.to_string(), text);
    }

    #[test]
    fn numbers_and_names() {
        assert_eq!(parse_formula("-3").unwrap(), Formula::constant(-3, 1));
        assert_eq!(parse_formula("2/4").unwrap(), Formula::constant(1, 2));
        assert_eq!(parse_formula("-2/6").unwrap(), Formula::constant(-1, 3));
        assert_eq!(parse_formula(" X_1 ").unwrap(), Formula::var("X_1"));
        assert_eq!(
            parse_formula("(nu X (max 0 (- (reward 1) (trans 1 (neg X)))))").unwrap(),
            Formula::nu(
                "X",
                Formula::max(
                    Formula::constant(0, 1),
                    Formula::sub(Formula::Reward(1), Formula::trans(1, Formula::neg(Formula::var("X"))))
                )
            )
        );
    }

    #[test]
    fn errors_carry_positions() {
        for (text, pos) in [
            ("(reward 0", 9),
            ("(foo 1)", 1),
            ("1/0", 0),
            ("(max 1)", 6),
            ("(reward 0) 1", 11),
            (")", 0),
            ("(sup)", 4),
            ("(nu sup 1)", 4),
            ("(trans x 1)", 7),
        ] {
            match parse_formula(text) {
                Err(Error::Parse { pos: p, .. }) => assert_eq!(p, pos, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn formula_files() {
        let text = "; header\n(reward 0)\n\n(trans 1 1/3) ; comment\n";
        assert_eq!(
            parse_formulas(text).unwrap(),
            vec![Formula::Reward(0), Formula::trans(1, Formula::constant(1, 3))]
        );
    }

    fn rational() -> impl Strategy<Value = Rational64> {
        (-1000i64..1000, 1i64..100).prop_map(|(n, d)| Rational64::new(n, d))
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        let leaf = prop_oneof![
            rational().prop_map(Formula::Const),
            "[A-Z][a-z0-9_]{0,3}".prop_map(Formula::Var),
            (0usize..4).prop_map(Formula::Reward),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(Formula::Sup),
                prop::collection::vec(inner.clone(), 1..4).prop_map(Formula::Inf),
                inner.clone().prop_map(Formula::neg),
                inner.clone().prop_map(Formula::abs),
                (rational(), inner.clone()).prop_map(|(q, f)| Formula::shift(q, f)),
                (rational(), inner.clone()).prop_map(|(q, f)| Formula::scale(q, f)),
                (inner.clone(), inner.clone()).prop_map(|(f, g)| Formula::max(f, g)),
                (inner.clone(), inner.clone()).prop_map(|(f, g)| Formula::min(f, g)),
                (inner.clone(), inner.clone()).prop_map(|(f, g)| Formula::sub(f, g)),
                (0usize..4, inner.clone()).prop_map(|(a, f)| Formula::trans(a, f)),
                ("[A-Z]", inner).prop_map(|(x, f)| Formula::Nu(x, Box::new(f))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(f in arb_formula()) {
            let text = f.to_string();
            prop_assert_eq!(parse_formula(&text).unwrap(), f);
        }
    }
}
