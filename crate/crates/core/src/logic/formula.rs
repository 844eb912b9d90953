use std::fmt;

use num_rational::Rational64;

use crate::error::{Error, Result};

/// Non-expansive combinators over real-valued state functions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LipOp {
    Negate,
    Abs,
    Shift(Rational64),
    /// Multiplication by a rational of magnitude at most one.
    Scale(Rational64),
    Max,
    Min,
    Subtract,
}

impl LipOp {
    pub fn arity(&self) -> usize {
        match self {
            LipOp::Negate | LipOp::Abs | LipOp::Shift(_) | LipOp::Scale(_) => 1,
            LipOp::Max | LipOp::Min | LipOp::Subtract => 2,
        }
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            LipOp::Negate => "neg",
            LipOp::Abs => "abs",
            LipOp::Shift(_) => "shift",
            LipOp::Scale(_) => "scale",
            LipOp::Max => "max",
            LipOp::Min => "min",
            LipOp::Subtract => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(Rational64),
    Var(String),
    /// Pointwise supremum of a finite, non-empty family.
    Sup(Vec<Formula>),
    Inf(Vec<Formula>),
    Comb(LipOp, Vec<Formula>),
    /// `s ↦ R(s, a)`.
    Reward(usize),
    /// `s ↦ γ · E_{P(s,a)}[φ]`.
    Trans(usize, Box<Formula>),
    /// Greatest fixed point `νX. φ`.
    Nu(String, Box<Formula>),
}

pub(crate) const KEYWORDS: [&str; 12] = [
    "sup", "inf", "neg", "abs", "shift", "scale", "max", "min", "-", "reward", "trans", "nu",
];

pub fn rational_to_f64(q: &Rational64) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

impl Formula {
    pub fn constant(numer: i64, denom: i64) -> Formula {
        Formula::Const(Rational64::new(numer, denom))
    }

    pub fn var(name: &str) -> Formula {
        Formula::Var(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(f: Formula) -> Formula {
        Formula::Comb(LipOp::Negate, vec![f])
    }

    pub fn abs(f: Formula) -> Formula {
        Formula::Comb(LipOp::Abs, vec![f])
    }

    pub fn shift(q: Rational64, f: Formula) -> Formula {
        Formula::Comb(LipOp::Shift(q), vec![f])
    }

    pub fn scale(q: Rational64, f: Formula) -> Formula {
        Formula::Comb(LipOp::Scale(q), vec![f])
    }

    pub fn max(f: Formula, g: Formula) -> Formula {
        Formula::Comb(LipOp::Max, vec![f, g])
    }

    pub fn min(f: Formula, g: Formula) -> Formula {
        Formula::Comb(LipOp::Min, vec![f, g])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(f: Formula, g: Formula) -> Formula {
        Formula::Comb(LipOp::Subtract, vec![f, g])
    }

    pub fn trans(a: usize, f: Formula) -> Formula {
        Formula::Trans(a, Box::new(f))
    }

    pub fn nu(var: &str, body: Formula) -> Formula {
        Formula::Nu(var.to_string(), Box::new(body))
    }

    /// Height of the syntax tree; leaves have depth 1.
    pub fn depth(&self) -> usize {
        1 + match self {
            Formula::Const(_) | Formula::Var(_) | Formula::Reward(_) => 0,
            Formula::Sup(fs) | Formula::Inf(fs) | Formula::Comb(_, fs) => {
                fs.iter().map(Formula::depth).max().unwrap_or(0)
            }
            Formula::Trans(_, f) | Formula::Nu(_, f) => f.depth(),
        }
    }

    pub fn size(&self) -> usize {
        1 + match self {
            Formula::Const(_) | Formula::Var(_) | Formula::Reward(_) => 0,
            Formula::Sup(fs) | Formula::Inf(fs) | Formula::Comb(_, fs) => {
                fs.iter().map(Formula::size).sum()
            }
            Formula::Trans(_, f) | Formula::Nu(_, f) => f.size(),
        }
    }

    pub fn free_vars(&self) -> Vec<String> {
        fn walk(f: &Formula, bound: &mut Vec<String>, out: &mut Vec<String>) {
            match f {
                Formula::Var(x) => {
                    if !bound.contains(x) && !out.contains(x) {
                        out.push(x.clone());
                    }
                }
                Formula::Const(_) | Formula::Reward(_) => {}
                Formula::Sup(fs) | Formula::Inf(fs) | Formula::Comb(_, fs) => {
                    fs.iter().for_each(|g| walk(g, bound, out))
                }
                Formula::Trans(_, g) => walk(g, bound, out),
                Formula::Nu(x, g) => {
                    bound.push(x.clone());
                    walk(g, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Checks arities, scale magnitudes, action indices and fixpoint
    /// positivity against a model with `n_actions` actions.
    pub fn check(&self, n_actions: usize) -> Result<()> {
        match self {
            Formula::Const(_) => Ok(()),
            Formula::Var(x) => check_name(x),
            Formula::Sup(fs) | Formula::Inf(fs) => {
                if fs.is_empty() {
                    return Err(Error::Formula("sup/inf over an empty family".into()));
                }
                fs.iter().try_for_each(|f| f.check(n_actions))
            }
            Formula::Comb(op, fs) => {
                if fs.len() != op.arity() {
                    return Err(Error::Formula(format!(
                        "`{}` takes {} argument(s), got {}",
                        op.keyword(),
                        op.arity(),
                        fs.len()
                    )));
                }
                if let LipOp::Scale(q) = op {
                    if q.numer().abs() > *q.denom() {
                        return Err(Error::Formula(format!("scale factor {q} exceeds 1 in magnitude")));
                    }
                }
                fs.iter().try_for_each(|f| f.check(n_actions))
            }
            Formula::Reward(a) => check_action(*a, n_actions),
            Formula::Trans(a, f) => {
                check_action(*a, n_actions)?;
                f.check(n_actions)
            }
            Formula::Nu(x, body) => {
                check_name(x)?;
                check_positive(body, x, true)?;
                body.check(n_actions)
            }
        }
    }
}

pub(crate) fn check_name(x: &str) -> Result<()> {
    let mut chars = x.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&x);
    if ok {
        Ok(())
    } else {
        Err(Error::Formula(format!("invalid variable name `{x}`")))
    }
}

fn check_action(a: usize, n_actions: usize) -> Result<()> {
    if a < n_actions {
        Ok(())
    } else {
        Err(Error::Formula(format!(
            "action {a} out of range for a model with {n_actions} actions"
        )))
    }
}

fn mentions(f: &Formula, x: &str) -> bool {
    f.free_vars().iter().any(|v| v == x)
}

fn check_positive(f: &Formula, x: &str, positive: bool) -> Result<()> {
    match f {
        Formula::Var(y) if y == x && !positive => Err(Error::Formula(format!(
            "variable `{x}` occurs negatively in its fixpoint body"
        ))),
        Formula::Var(_) | Formula::Const(_) | Formula::Reward(_) => Ok(()),
        Formula::Sup(fs) | Formula::Inf(fs) => fs.iter().try_for_each(|g| check_positive(g, x, positive)),
        Formula::Comb(op, fs) => match op {
            LipOp::Negate => fs.iter().try_for_each(|g| check_positive(g, x, !positive)),
            LipOp::Scale(q) if *q.numer() < 0 => fs.iter().try_for_each(|g| check_positive(g, x, !positive)),
            LipOp::Abs => {
                if fs.iter().any(|g| mentions(g, x)) {
                    Err(Error::Formula(format!("variable `{x}` occurs under abs in its fixpoint body")))
                } else {
                    Ok(())
                }
            }
            LipOp::Subtract => {
                check_positive(&fs[0], x, positive)?;
                fs.get(1).map_or(Ok(()), |g| check_positive(g, x, !positive))
            }
            _ => fs.iter().try_for_each(|g| check_positive(g, x, positive)),
        },
        Formula::Trans(_, g) => check_positive(g, x, positive),
        Formula::Nu(y, g) => {
            if y == x {
                Ok(())
            } else {
                check_positive(g, x, positive)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, head: &str, fs: &[Formula]) -> fmt::Result {
            write!(f, "({head}")?;
            for g in fs {
                write!(f, " {g}")?;
            }
            write!(f, ")")
        }
        match self {
            Formula::Const(q) => write!(f, "{q}"),
            Formula::Var(x) => write!(f, "{x}"),
            Formula::Sup(fs) => list(f, "sup", fs),
            Formula::Inf(fs) => list(f, "inf", fs),
            Formula::Comb(op @ (LipOp::Shift(q) | LipOp::Scale(q)), fs) => {
                list(f, &format!("{} {q}", op.keyword()), fs)
            }
            Formula::Comb(op, fs) => list(f, op.keyword(), fs),
            Formula::Reward(a) => write!(f, "(reward {a})"),
            Formula::Trans(a, g) => write!(f, "(trans {a} {g})"),
            Formula::Nu(x, g) => write!(f, "(nu {x} {g})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display() {
        let f = Formula::Sup(vec![
            Formula::abs(Formula::sub(Formula::Reward(0), Formula::constant(1, 2))),
            Formula::trans(0, Formula::Reward(1)),
        ]);
        assert_eq!(f.to_string(), "(sup (abs (- (reward 0) 1/2)) (trans 0 (reward 1)))");
        assert_eq!(Formula::scale(Rational64::new(-2, 4), Formula::var("X")).to_string(), "(scale -1/2 X)");
        assert_eq!(f.depth(), 4);
        assert_eq!(f.size(), 7);
    }

    #[test]
    fn positivity() {
        let bellman = Formula::sub(Formula::Reward(0), Formula::trans(0, Formula::neg(Formula::var("X"))));
        assert!(Formula::nu("X", bellman.clone()).check(1).is_ok());
        assert!(Formula::nu("X", Formula::neg(Formula::var("X"))).check(1).is_err());
        assert!(Formula::nu("X", Formula::sub(Formula::Reward(0), Formula::var("X"))).check(1).is_err());
        assert!(Formula::nu("X", Formula::abs(Formula::var("X"))).check(1).is_err());
        assert!(Formula::nu("X", Formula::scale(Rational64::new(-1, 2), Formula::var("X"))).check(1).is_err());
        assert!(Formula::nu("X", Formula::neg(Formula::neg(Formula::var("X")))).check(1).is_ok());
        // Shadowed binder: the inner X is a different variable.
        assert!(Formula::nu("X", Formula::neg(Formula::nu("X", Formula::var("X")))).check(1).is_ok());
    }

    #[test]
    fn structural_checks() {
        assert!(Formula::Reward(2).check(2).is_err());
        assert!(Formula::trans(1, Formula::Reward(0)).check(2).is_ok());
        assert!(Formula::Sup(vec![]).check(1).is_err());
        assert!(Formula::Comb(LipOp::Max, vec![Formula::Reward(0)]).check(1).is_err());
        assert!(Formula::scale(Rational64::new(3, 2), Formula::Reward(0)).check(1).is_err());
        assert!(Formula::scale(Rational64::new(-1, 1), Formula::Reward(0)).check(1).is_ok());
        assert!(Formula::var("sup").check(1).is_err());
    }

    #[test]
    fn free_variables() {
        let f = Formula::max(Formula::var("Y"), Formula::nu("X", Formula::min(Formula::var("X"), Formula::var("Y"))));
        assert_eq!(f.free_vars(), vec!["Y".to_string()]);
    }
}
