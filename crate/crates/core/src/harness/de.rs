//! Differential evolution, rand/1/bin, maximizing.
//!
//! Trial vectors for a whole generation are drawn from the generator before
//! any of them is evaluated, so results do not depend on whether evaluation
//! runs in parallel.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeSettings {
    pub generations: usize,
    pub population: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl DeSettings {
    /// `min(15·dim, cap)` members, at least four.
    pub fn default_population(dim: usize, cap: usize) -> usize {
        (15 * dim).min(cap).max(4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best objective after initialization and after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn evaluate<F>(xs: &[Vec<f64>], objective: &F, parallel: bool) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if parallel {
        xs.par_iter().map(|x| score(objective(x))).collect()
    } else {
        xs.iter().map(|x| score(objective(x))).collect()
    }
}

/// Maximizes `objective` over the box `bounds`.
pub fn differential_evolution<F>(bounds: &[(f64, f64)], settings: &DeSettings, objective: F) -> DeResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    let np = settings.population.max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    // Latin hypercube: one member per stratum in every coordinate.
    let mut pop = vec![vec![0.0; dim]; np];
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..np).collect();
        strata.shuffle(&mut rng);
        for (i, &k) in strata.iter().enumerate() {
            pop[i][j] = lo + (k as f64 + rng.gen::<f64>()) / np as f64 * (hi - lo);
        }
    }
    let mut fitness = evaluate(&pop, &objective, settings.parallel);
    let mut evaluations = np;
    let best_of = |fitness: &[f64]| {
        (0..fitness.len()).fold(0, |b, i| if fitness[i] > fitness[b] { i } else { b })
    };
    let mut trace = vec![fitness[best_of(&fitness)]];

    for _ in 0..settings.generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = || loop {
                    let r = rng.gen_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let r1 = pick();
                let r2 = loop {
                    let r = pick();
                    if r != r1 {
                        break r;
                    }
                };
                let r3 = loop {
                    let r = pick();
                    if r != r1 && r != r2 {
                        break r;
                    }
                };
                let forced = rng.gen_range(0..dim.max(1));
                (0..dim)
                    .map(|j| {
                        if j == forced || rng.gen::<f64>() < settings.crossover {
                            let v = pop[r1][j] + settings.mutation * (pop[r2][j] - pop[r3][j]);
                            let (lo, hi) = bounds[j];
                            if v < lo || v > hi {
                                rng.gen_range(lo..=hi)
                            } else {
                                v
                            }
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let scores = evaluate(&trials, &objective, settings.parallel);
        evaluations += np;
        for (i, (trial, s)) in trials.into_iter().zip(scores).enumerate() {
            if s >= fitness[i] {
                pop[i] = trial;
                fitness[i] = s;
            }
        }
        trace.push(fitness[best_of(&fitness)]);
    }
    let b = best_of(&fitness);
    DeResult {
        best: pop[b].clone(),
        best_value: fitness[b],
        trace,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(generations: usize, population: usize, parallel: bool) -> DeSettings {
        DeSettings {
            generations,
            population,
            mutation: 0.8,
            crossover: 0.9,
            seed: 3,
            parallel,
        }
    }

    #[test]
    fn finds_the_peak_of_a_concave_function() {
        let bounds = vec![(-5.0, 5.0); 3];
        let r = differential_evolution(&bounds, &settings(200, 45, false), |x| {
            -(x[0] - 1.0).powi(2) - (x[1] + 2.0).powi(2) - (x[2] - 0.5).powi(2)
        });
        assert!(r.best_value > -1e-8, "{r:?}");
        assert!((r.best[0] - 1.0).abs() < 1e-4);
        assert_eq!(r.trace.len(), 201);
        assert_eq!(r.evaluations, 45 * 201);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn stays_in_bounds_and_is_deterministic() {
        let bounds = vec![(-1.0, 2.0), (0.0, 0.5)];
        let f = |x: &[f64]| {
            assert!((-1.0..=2.0).contains(&x[0]) && (0.0..=0.5).contains(&x[1]));
            x[0] * x[1]
        };
        let a = differential_evolution(&bounds, &settings(50, 20, false), f);
        let b = differential_evolution(&bounds, &settings(50, 20, true), f);
        assert_eq!(a, b);
        assert!((a.best_value - 1.0).abs() < 1e-2, "{}", a.best_value);
    }

    #[test]
    fn constant_objective() {
        let r = differential_evolution(&[(0.0, 1.0)], &settings(10, 8, false), |_| 0.0);
        assert_eq!(r.best_value, 0.0);
        assert!(r.trace.iter().all(|&v| v == 0.0));
        assert_eq!(DeSettings::default_population(8, 300), 120);
        assert_eq!(DeSettings::default_population(40, 300), 300);
    }
}
