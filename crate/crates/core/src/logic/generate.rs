//! Random formulas that are non-expansive for the behavioral metric.
//!
//! Every constructor maps functions that are 1-Lipschitz for `d_M` to
//! functions that are 1-Lipschitz for `d_M`. The only use of subtraction
//! besides `|R_a - c|` is the Bellman shape `R_a + γ·P_a φ`, written
//! `(- (reward a) (trans a (neg φ)))`, which is bounded by one term of the
//! metric operator.

use num_rational::Rational64;
use rand::Rng;

use super::formula::Formula;

/// Maximum syntax-tree height of generated formulas.
pub const MAX_DEPTH: usize = 6;

pub struct SafeGrammar {
    n_actions: usize,
    reward_bound: f64,
    next_var: usize,
}

impl SafeGrammar {
    pub fn new(n_actions: usize, reward_bound: f64) -> Self {
        assert!(n_actions > 0);
        Self {
            n_actions,
            reward_bound: reward_bound.max(0.0),
            next_var: 0,
        }
    }

    /// A formula of height at most [`MAX_DEPTH`].
    pub fn sample(&mut self, rng: &mut impl Rng) -> Formula {
        let depth = rng.gen_range(1..=MAX_DEPTH);
        self.next_var = 0;
        self.gen(depth, rng)
    }

    fn constant(&self, rng: &mut impl Rng) -> Rational64 {
        let denom = rng.gen_range(1..=16i64);
        let reach = (self.reward_bound * denom as f64).floor() as i64;
        Rational64::new(rng.gen_range(-reach..=reach), denom)
    }

    fn unit_scale(rng: &mut impl Rng) -> Rational64 {
        let denom = rng.gen_range(1..=8i64);
        Rational64::new(rng.gen_range(-denom..=denom), denom)
    }

    fn action(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(0..self.n_actions)
    }

    fn leaf(&self, budget: usize, rng: &mut impl Rng) -> Formula {
        match rng.gen_range(0..if budget >= 3 { 3 } else { 2 }) {
            0 => Formula::Const(self.constant(rng)),
            1 => Formula::Reward(self.action(rng)),
            _ => Formula::abs(Formula::sub(
                Formula::Reward(self.action(rng)),
                Formula::Const(self.constant(rng)),
            )),
        }
    }

    fn gen(&mut self, budget: usize, rng: &mut impl Rng) -> Formula {
        if budget <= 1 {
            return self.leaf(budget, rng);
        }
        let kinds = match budget {
            2..=3 => 9,
            4..=5 => 10,
            _ => 11,
        };
        match rng.gen_range(0..kinds) {
            0 => self.leaf(budget, rng),
            1 => Formula::neg(self.gen(budget - 1, rng)),
            2 => Formula::shift(self.constant(rng), self.gen(budget - 1, rng)),
            3 => Formula::scale(Self::unit_scale(rng), self.gen(budget - 1, rng)),
            4 => Formula::trans(self.action(rng), self.gen(budget - 1, rng)),
            5 => Formula::max(self.gen(budget - 1, rng), self.gen(budget - 1, rng)),
            6 => Formula::min(self.gen(budget - 1, rng), self.gen(budget - 1, rng)),
            7 | 8 => {
                let k = rng.gen_range(1..=3);
                let fs = (0..k).map(|_| self.gen(budget - 1, rng)).collect();
                if rng.gen_bool(0.5) {
                    Formula::Sup(fs)
                } else {
                    Formula::Inf(fs)
                }
            }
            9 => {
                let a = self.action(rng);
                bellman(a, self.gen(budget - 3, rng))
            }
            _ => {
                let x = format!("X{}", self.next_var);
                self.next_var += 1;
                let a = self.action(rng);
                let base = self.gen(budget - 2, rng);
                let step = bellman(a, Formula::Var(x.clone()));
                let body = if rng.gen_bool(0.5) {
                    Formula::max(base, step)
                } else {
                    Formula::min(base, step)
                };
                Formula::Nu(x, Box::new(body))
            }
        }
    }
}

/// `R_a + γ·P_a φ`.
pub fn bellman(a: usize, phi: Formula) -> Formula {
    Formula::sub(Formula::Reward(a), Formula::trans(a, Formula::neg(phi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_well_formed_and_shallow() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = SafeGrammar::new(3, 1.0);
        let mut saw_nu = false;
        for _ in 0..2000 {
            let f = g.sample(&mut rng);
            assert!(f.depth() <= MAX_DEPTH, "{f}");
            f.check(3).unwrap();
            assert!(f.free_vars().is_empty());
            saw_nu |= f.to_string().contains("(nu ");
        }
        assert!(saw_nu);
    }

    #[test]
    fn zero_reward_bound_gives_zero_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = SafeGrammar::new(1, 0.0);
        for _ in 0..50 {
            assert_eq!(g.constant(&mut rng), Rational64::from_integer(0));
        }
    }
}
