use std::collections::HashMap;

use super::formula::{rational_to_f64, Formula, LipOp};
use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::metric::default_sweep_cap;

/// Free-variable bindings: one value per state.
pub type Valuation = HashMap<String, Vec<f64>>;

/// Fixpoint iterations stop once the sup-norm change is at most this.
pub const FIXPOINT_TOLERANCE: f64 = 1e-9;

/// Evaluates `f` at every state of `m`.
pub fn eval_formula(m: &FiniteMdp, f: &Formula, valuation: &Valuation) -> Result<Vec<f64>> {
    f.check(m.n_actions())?;
    for x in f.free_vars() {
        match valuation.get(&x) {
            None => return Err(Error::UnboundVariable(x)),
            Some(v) if v.len() != m.n_states() => {
                return Err(Error::Dimension(format!(
                    "valuation of `{x}` has {} entries, MDP has {} states",
                    v.len(),
                    m.n_states()
                )))
            }
            Some(_) => {}
        }
    }
    let mut env: Vec<(&str, Vec<f64>)> = valuation.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    Evaluator { m }.eval(f, &mut env)
}

/// Evaluates a closed formula.
pub fn eval_closed(m: &FiniteMdp, f: &Formula) -> Result<Vec<f64>> {
    eval_formula(m, f, &Valuation::new())
}

struct Evaluator<'m> {
    m: &'m FiniteMdp,
}

impl Evaluator<'_> {
    fn eval<'f>(&self, f: &'f Formula, env: &mut Vec<(&'f str, Vec<f64>)>) -> Result<Vec<f64>> {
        let n = self.m.n_states();
        Ok(match f {
            Formula::Const(q) => vec![rational_to_f64(q); n],
            Formula::Var(x) => env
                .iter()
                .rev()
                .find(|(k, _)| k == x)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::UnboundVariable(x.clone()))?,
            Formula::Sup(fs) | Formula::Inf(fs) => {
                let pick = if matches!(f, Formula::Sup(_)) { f64::max } else { f64::min };
                let mut acc = self.eval(&fs[0], env)?;
                for g in &fs[1..] {
                    let v = self.eval(g, env)?;
                    acc.iter_mut().zip(v).for_each(|(a, b)| *a = pick(*a, b));
                }
                acc
            }
            Formula::Comb(op, fs) => {
                let mut v = self.eval(&fs[0], env)?;
                match op {
                    LipOp::Negate => v.iter_mut().for_each(|x| *x = -*x),
                    LipOp::Abs => v.iter_mut().for_each(|x| *x = x.abs()),
                    LipOp::Shift(q) => {
                        let c = rational_to_f64(q);
                        v.iter_mut().for_each(|x| *x += c)
                    }
                    LipOp::Scale(q) => {
                        let c = rational_to_f64(q);
                        v.iter_mut().for_each(|x| *x *= c)
                    }
                    LipOp::Max | LipOp::Min | LipOp::Subtract => {
                        let w = self.eval(&fs[1], env)?;
                        let g: fn(f64, f64) -> f64 = match op {
                            LipOp::Max => f64::max,
                            LipOp::Min => f64::min,
                            _ => |a, b| a - b,
                        };
                        v.iter_mut().zip(w).for_each(|(a, b)| *a = g(*a, b));
                    }
                }
                v
            }
            Formula::Reward(a) => (0..n).map(|s| self.m.reward(s, *a)).collect(),
            Formula::Trans(a, g) => {
                let v = self.eval(g, env)?;
                let gamma = self.m.gamma();
                (0..n)
                    .map(|s| {
                        let e: f64 = self.m.transition_row(s, *a).iter().zip(&v).map(|(p, x)| p * x).sum();
                        gamma * e
                    })
                    .collect()
            }
            Formula::Nu(x, body) => self.greatest_fixpoint(x, body, env)?,
        })
    }

    fn greatest_fixpoint<'f>(
        &self,
        x: &'f str,
        body: &'f Formula,
        env: &mut Vec<(&'f str, Vec<f64>)>,
    ) -> Result<Vec<f64>> {
        let gamma = self.m.gamma();
        let top = self.m.reward_bound() / (1.0 - gamma);
        let cap = default_sweep_cap(FIXPOINT_TOLERANCE, gamma);
        let mut current = vec![top; self.m.n_states()];
        let mut change = f64::INFINITY;
        for _ in 0..cap {
            env.push((x, current));
            let next = self.eval(body, env);
            current = env.pop().expect("binding pushed above").1;
            let next = next?;
            change = next
                .iter()
                .zip(&current)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            current = next;
            if change <= FIXPOINT_TOLERANCE {
                return Ok(current);
            }
        }
        Err(Error::IterationCap { cap, last_change: change })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::sexpr::parse_formula;
    use crate::mdp::{make_chain_example, make_random_mdp};
    use crate::planning::value_iteration;

    fn eval(m: &FiniteMdp, text: &str) -> Vec<f64> {
        eval_closed(m, &parse_formula(text).unwrap()).unwrap()
    }

    #[test]
    fn chain_examples() {
        let m = make_chain_example();
        assert_eq!(eval(&m, "3/4"), vec![0.75; 3]);
        assert_eq!(eval(&m, "(reward 0)"), vec![0.0, 1.0, 0.0]);
        let v = eval(&m, "(trans 0 (reward 0))");
        assert!((v[0] - 0.9).abs() < 1e-15 && v[1] == 0.0 && v[2] == 0.0);
    }

    #[test]
    fn combinators() {
        let m = make_chain_example();
        assert_eq!(eval(&m, "(abs (- (reward 0) 1/2))"), vec![0.5; 3]);
        assert_eq!(eval(&m, "(neg (reward 0))"), vec![0.0, -1.0, 0.0]);
        assert_eq!(eval(&m, "(shift -1 (scale 1/2 (reward 0)))"), vec![-1.0, -0.5, -1.0]);
        assert_eq!(eval(&m, "(max (reward 0) 1/4)"), vec![0.25, 1.0, 0.25]);
        assert_eq!(eval(&m, "(min (reward 0) 1/4)"), vec![0.0, 0.25, 0.0]);
        assert_eq!(eval(&m, "(sup 0 (reward 0) -1)"), vec![0.0, 1.0, 0.0]);
        assert_eq!(eval(&m, "(inf 0 (reward 0) -1)"), vec![-1.0; 3]);
    }

    #[test]
    fn fixpoint_is_optimal_value_on_single_action_models() {
        let m = make_chain_example();
        let v = eval(&m, "(nu X (- (reward 0) (trans 0 (neg X))))");
        let tol = FIXPOINT_TOLERANCE / (1.0 - m.gamma());
        assert!((v[0] - 0.9).abs() <= tol && (v[1] - 1.0).abs() <= tol && v[2].abs() <= tol);
    }

    #[test]
    fn fixpoint_of_bellman_optimality() {
        let m = make_random_mdp(5, 2, 0.8, 11).unwrap();
        let v = eval(
            &m,
            "(nu X (max (- (reward 0) (trans 0 (neg X))) (- (reward 1) (trans 1 (neg X)))))",
        );
        let vstar = value_iteration(&m, 1e-12).unwrap();
        for (a, b) in v.iter().zip(vstar.values()) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn valuations() {
        let m = make_chain_example();
        let f = parse_formula("(max X (reward 0))").unwrap();
        let mut val = Valuation::new();
        assert!(matches!(eval_formula(&m, &f, &val), Err(Error::UnboundVariable(x)) if x == "X"));
        val.insert("X".into(), vec![0.5, 0.5, 2.0]);
        assert_eq!(eval_formula(&m, &f, &val).unwrap(), vec![0.5, 1.0, 2.0]);
        val.insert("X".into(), vec![0.5]);
        assert!(eval_formula(&m, &f, &val).is_err());
    }

    #[test]
    fn rejects_negative_fixpoint_bodies() {
        let m = make_chain_example();
        let f = parse_formula("(nu X (neg X))").unwrap();
        assert!(matches!(eval_closed(&m, &f), Err(Error::Formula(_))));
        let f = parse_formula("(reward 3)").unwrap();
        assert!(eval_closed(&m, &f).is_err());
    }

    #[test]
    fn divergent_fixpoint_hits_the_cap() {
        let m = make_chain_example();
        let f = parse_formula("(nu X (shift 1 X))").unwrap();
        assert!(matches!(eval_closed(&m, &f), Err(Error::IterationCap { .. })));
    }
}
