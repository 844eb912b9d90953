//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.
//!
//! Run a subset with `cargo test --test acceptance -- <substring>`.

use std::time::{Duration, Instant};

use bisim_core::diagnostics::{spectral_report, summary_stats, partition_info, SpectralMode};
use bisim_core::harness::{adversarial_search, AdversarialConfig, ExperimentConfig, run_suite};
use bisim_core::logic::{completeness_probe, soundness_probe, SOUNDNESS_SLACK};
use bisim_core::mdp::{make_chain_example, make_grid_world, make_random_mdp, reindex_actions, FiniteMdp, GridWorldSpec};
use bisim_core::metric::{estimate_contraction, residual_ratio, solve_metric, PseudoMetricMatrix};
use bisim_core::planning::{value_iteration, value_loss_report_with_metric, PlanTolerances, LOSS_SLACK};
use bisim_core::quotient::EpsilonQuotient;
use bisim_core::transport::{kr_gap, w1_exact, w1_line_oracle, DiscreteDistribution};
use bisim_core::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAMMAS: [f64; 4] = [0.7, 0.8, 0.9, 0.95];

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Criterion = fn() -> Result<Verdict>;

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, Criterion); 14] = [
        ("ac01_chain_oracle", chain_oracle),
        ("ac02_quotient_oracle", quotient_oracle),
        ("ac03_contraction", contraction),
        ("ac04_grid_contraction_factor", grid_contraction_factor),
        ("ac05_transport", transport),
        ("ac06_zero_drift", zero_drift),
        ("ac07_value_lipschitz", value_lipschitz),
        ("ac08_value_loss_bound", value_loss_bound),
        ("ac09_reindexing", reindexing),
        ("ac10_logic_soundness", logic_soundness),
        ("ac11_logic_completeness", logic_completeness),
        ("ac12_spectral", spectral),
        ("ac13_scale", scale),
        ("ac14_adversarial", adversarial),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let verdict = run().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let tag = if verdict.passed { "PASS" } else { "FAIL" };
        println!("{tag} {name} ({secs:.2}s): {}", verdict.detail);
        if !verdict.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Random MDPs with `n <= 10`, `m <= 4` and γ drawn from [`GAMMAS`].
fn corpus(count: usize, seed: u64) -> Result<Vec<FiniteMdp>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(2..=10);
            let m = rng.gen_range(1..=4);
            let gamma = *GAMMAS.choose(&mut rng).unwrap();
            make_random_mdp(n, m, gamma, seed * 1000 + i as u64)
        })
        .collect()
}

fn grid(side: usize, gamma: f64) -> Result<FiniteMdp> {
    make_grid_world(&GridWorldSpec::new(side, 0.07, gamma), 0)
}

fn chain_oracle() -> Result<Verdict> {
    let m = make_chain_example();
    let start = Instant::now();
    let run = solve_metric(&m, 1e-9)?;
    let elapsed = start.elapsed();
    let d = &run.final_metric;
    let expected = [(0, 1, 1.9), (0, 2, 0.9), (1, 2, 1.0)];
    let err = expected
        .iter()
        .map(|&(i, j, v)| (d.get(i, j) - v).abs())
        .fold(0.0, f64::max);
    let ok = err <= 1e-9 && run.iterations <= 4 && elapsed < Duration::from_millis(10);
    Ok(Verdict::new(
        ok,
        format!(
            "d = ({:.9}, {:.9}, {:.9}), max error {err:.1e}, {} sweeps, {:?}",
            d.get(0, 1),
            d.get(0, 2),
            d.get(1, 2),
            run.iterations,
            elapsed
        ),
    ))
}

fn quotient_oracle() -> Result<Verdict> {
    let d = solve_metric(&make_chain_example(), 1e-9)?.final_metric;
    let coarse = EpsilonQuotient::build(&d, 1.2)?;
    let fine = EpsilonQuotient::build(&d, 0.95)?;
    let coarse_ok = coarse.partition.classes() == [vec![0, 1, 2]];
    let fine_ok = fine.partition.classes() == [vec![0, 2], vec![1]];
    Ok(Verdict::new(
        coarse_ok && fine_ok,
        format!(
            "eps 1.2 -> {:?}, eps 0.95 -> {:?}",
            coarse.partition.classes(),
            fine.partition.classes()
        ),
    ))
}

fn contraction() -> Result<Verdict> {
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for (i, m) in corpus(100, 3)?.iter().enumerate() {
        let est = estimate_contraction(m, 10, i as u64, None)?;
        worst = worst.max(est.max_excess);
        pairs += est.pairs_used;
    }
    let elapsed = start.elapsed();
    Ok(Verdict::new(
        worst <= 1e-9 && pairs == 1000 && elapsed < Duration::from_secs(120),
        format!("{pairs} pairs, max excess over gamma bound {worst:.3e}"),
    ))
}

fn grid_contraction_factor() -> Result<Verdict> {
    let mut ok = true;
    let mut parts = Vec::new();
    for gamma in [0.95, 0.99] {
        let m = grid(5, gamma)?;
        let run = solve_metric(&m, 1e-9)?;
        let factor = residual_ratio(&run).unwrap_or(0.0);
        let pair = estimate_contraction(&m, 10, 0, None)?.random_pair;
        ok &= factor <= gamma + 1e-6 && factor > 0.5 * gamma && pair <= gamma + 1e-6;
        parts.push(format!("gamma {gamma}: residual factor {factor:.4}, random-pair {pair:.4}"));
    }
    Ok(Verdict::new(ok, parts.join("; ")))
}

fn random_distribution(n: usize, rng: &mut ChaCha8Rng) -> Result<DiscreteDistribution> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    DiscreteDistribution::new(w)
}

fn transport() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max_err = 0.0_f64;
    let mut max_gap = 0.0_f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=64);
        let mu = random_distribution(n, &mut rng)?;
        let nu = random_distribution(n, &mut rng)?;
        let cost: Vec<f64> = (0..n * n).map(|k| (k / n).abs_diff(k % n) as f64).collect();
        let sol = w1_exact(&mu, &nu, &cost)?;
        max_err = max_err.max((sol.value - w1_line_oracle(&mu, &nu)?).abs());
        max_gap = max_gap.max(kr_gap(&sol, &mu, &nu));
    }
    let elapsed = start.elapsed();
    Ok(Verdict::new(
        max_err <= 1e-9 && max_gap <= 1e-7 && elapsed < Duration::from_secs(60),
        format!("1000 instances, max |LP - oracle| {max_err:.2e}, max duality gap {max_gap:.2e}"),
    ))
}

fn zero_drift() -> Result<Verdict> {
    let start = Instant::now();
    let mut max_drift = 0.0_f64;
    let mut failed = Vec::new();
    for suite in ["composition", "backward_stability"] {
        let cfg = ExperimentConfig::from_toml(&format!("suite = \"{suite}\"\nside = 5\n"))?;
        let outcome = run_suite(&cfg)?;
        for row in &outcome.report.rows {
            if let Some(d) = row.get("drift").and_then(|v| v.as_f64()) {
                max_drift = max_drift.max(d);
            }
        }
        failed.extend(
            outcome
                .report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{suite}/{}", c.name)),
        );
    }
    let elapsed = start.elapsed();
    Ok(Verdict::new(
        failed.is_empty() && max_drift <= 1e-9 && elapsed < Duration::from_secs(300),
        format!("5x5 grid, max drift {max_drift:.1e}, failed checks {failed:?}"),
    ))
}

fn value_lipschitz() -> Result<Verdict> {
    let mut worst = f64::NEG_INFINITY;
    for m in corpus(100, 7)? {
        let d = solve_metric(&m, 1e-9)?.final_metric;
        let v = value_iteration(&m, 1e-9)?;
        let n = m.n_states();
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((v.0[i] - v.0[j]).abs() - d.get(i, j));
            }
        }
    }
    Ok(Verdict::new(
        worst <= 1e-7,
        format!("100 MDPs, max |V(s)-V(t)| - d(s,t) = {worst:.3e}"),
    ))
}

fn value_loss_bound() -> Result<Verdict> {
    let tol = PlanTolerances::default();
    let mut worst_slack = f64::INFINITY;
    let mut findings = 0;
    let mut max_loss = 0.0_f64;
    for (i, m) in corpus(100, 7)?.iter().enumerate() {
        let d = solve_metric(m, 1e-9)?.final_metric;
        let r = value_loss_report_with_metric(m, &d, 0.1 * d.max_entry(), &tol)?;
        worst_slack = worst_slack.min(r.bound_diam + LOSS_SLACK - r.value_loss);
        max_loss = max_loss.max(r.value_loss);
        if !r.within_eps_bound {
            findings += 1;
            println!(
                "  finding: mdp {i} loss {:.4e} exceeds 2eps/(1-gamma) = {:.4e}",
                r.value_loss, r.bound_eps
            );
        }
    }
    Ok(Verdict::new(
        worst_slack >= 0.0,
        format!("100 MDPs, max loss {max_loss:.3e}, min diameter-bound slack {worst_slack:.3e}, eps-bound findings {findings}"),
    ))
}

fn reindexing() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    let mut duplicated = 0;
    for (i, m) in corpus(50, 11)?.iter().enumerate() {
        let k = m.n_actions();
        let mut f: Vec<usize> = (0..k).collect();
        let extra = if i % 2 == 0 { rng.gen_range(1..=3) } else { 0 };
        f.extend((0..extra).map(|_| rng.gen_range(0..k)));
        f.shuffle(&mut rng);
        duplicated += usize::from(extra > 0);
        let a = solve_metric(m, 1e-10)?.final_metric;
        let b = solve_metric(&reindex_actions(m, &f)?, 1e-10)?.final_metric;
        worst = worst.max(a.sup_distance(&b));
    }
    Ok(Verdict::new(
        worst <= 1e-9,
        format!("50 MDPs ({duplicated} with duplicated actions), max entrywise difference {worst:.1e}"),
    ))
}

fn logic_soundness() -> Result<Verdict> {
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut formulas = 0;
    for (i, m) in corpus(20, 13)?.iter().enumerate() {
        let d = solve_metric(m, 1e-9)?.final_metric;
        let r = soundness_probe(m, &d, i as u64, 500)?;
        worst = worst.max(r.max_excess);
        violations += r.violations;
        formulas += r.formulas;
    }
    Ok(Verdict::new(
        violations == 0 && worst <= SOUNDNESS_SLACK && formulas == 10_000,
        format!("{formulas} formulas, {violations} violations, max deviation - d = {worst:.3e}"),
    ))
}

fn logic_completeness() -> Result<Verdict> {
    let mut models = vec![make_chain_example(), grid(3, 0.9)?];
    models.extend(corpus(5, 17)?);
    let mut ok = true;
    let mut min_gap = f64::INFINITY;
    let mut max_margin = f64::NEG_INFINITY;
    let mut probes = 0;
    for m in &models {
        let d: PseudoMetricMatrix = solve_metric(m, 1e-12)?.final_metric;
        let n = m.n_states();
        for k in [1, 5, 10, 20] {
            for s1 in 0..n {
                for s2 in 0..n {
                    let p = completeness_probe(m, &d, s1, s2, k)?;
                    ok &= p.within(1e-9, 1e-7);
                    min_gap = min_gap.min(p.gap);
                    max_margin = max_margin.max(p.gap - p.bound);
                    probes += 1;
                }
            }
        }
    }
    Ok(Verdict::new(
        ok,
        format!("{probes} probes, min gap {min_gap:.2e}, max gap - gamma^k |d| = {max_margin:.3e}"),
    ))
}

fn spectral() -> Result<Verdict> {
    let mut ok = true;
    let mut worst_recon = 0.0_f64;
    let mut worst_trace = 0.0_f64;
    let mut metrics: Vec<PseudoMetricMatrix> = Vec::new();
    for m in corpus(20, 19)? {
        metrics.push(solve_metric(&m, 1e-9)?.final_metric);
    }
    let g = solve_metric(&grid(5, 0.95)?, 1e-9)?.final_metric;
    metrics.push(g.clone());
    for d in &metrics {
        for mode in [SpectralMode::Raw, SpectralMode::DoubleCentered] {
            let s = spectral_report(d, mode)?;
            worst_recon = worst_recon.max(s.reconstruction_error);
            if mode == SpectralMode::Raw {
                let trace: f64 = s.eigenvalues.iter().sum();
                let rel = trace.abs() / s.frobenius.max(1.0);
                worst_trace = worst_trace.max(rel);
            }
        }
    }
    ok &= worst_recon <= 1e-8 && worst_trace <= 1e-10;
    let s = spectral_report(&g, SpectralMode::Raw)?;
    let ratio = s.spectral_radius / s.frobenius;
    ok &= ratio >= 0.9;
    Ok(Verdict::new(
        ok,
        format!(
            "max reconstruction error {worst_recon:.1e}, max |trace|/frobenius {worst_trace:.1e}, \
             5x5 grid radius {:.2} / frobenius {:.2} = {ratio:.4}",
            s.spectral_radius, s.frobenius
        ),
    ))
}

fn scale() -> Result<Verdict> {
    let start = Instant::now();
    let m = grid(8, 0.95)?;
    let run = solve_metric(&m, 1e-9)?;
    let d = &run.final_metric;
    let stats = summary_stats(d)?;
    let tol = PlanTolerances::default();
    let mut ok = d.is_pseudometric(1e-9);
    let mut classes = Vec::new();
    for frac in [0.01, 0.05, 0.1, 0.25, 0.5] {
        let eps = frac * d.max_entry();
        let q = EpsilonQuotient::build(d, eps)?;
        partition_info(d, &q.partition)?;
        let r = value_loss_report_with_metric(&m, d, eps, &tol)?;
        ok &= r.within_diam_bound;
        classes.push(q.n_classes());
    }
    for mode in [SpectralMode::Raw, SpectralMode::DoubleCentered] {
        ok &= spectral_report(d, mode)?.reconstruction_error <= 1e-8;
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    Ok(Verdict::new(
        ok,
        format!(
            "64 states, {} sweeps, mean {:.4}, classes per eps {classes:?}, total {elapsed:.2?}",
            run.iterations, stats.array_mean
        ),
    ))
}

fn adversarial() -> Result<Verdict> {
    let base = make_random_mdp(4, 2, 0.9, 0)?;
    let cfg = AdversarialConfig::default();
    let r = adversarial_search(&base, &cfg, 1e-9, 0, false)?;
    let rewards: Vec<f64> = r.best_rewards.iter().flatten().copied().collect();
    let worst = base.with_rewards(rewards)?;

    let contraction = estimate_contraction(&worst, 10, 1, None)?.max_excess;
    let d = solve_metric(&worst, 1e-9)?.final_metric;
    let v = value_iteration(&worst, 1e-9)?;
    let mut lipschitz = f64::NEG_INFINITY;
    for i in 0..4 {
        for j in i + 1..4 {
            lipschitz = lipschitz.max((v.0[i] - v.0[j]).abs() - d.get(i, j));
        }
    }
    let loss = value_loss_report_with_metric(&worst, &d, cfg.epsilon_fraction * d.max_entry(), &PlanTolerances::default())?;
    let ok = r.objective_trace.len() == cfg.iterations + 1
        && r.passed
        && contraction <= 1e-9
        && lipschitz <= 1e-7
        && loss.within_diam_bound;
    Ok(Verdict::new(
        ok,
        format!(
            "{} generations, {} evaluations, best objective {:.3e}; worst instance: contraction excess {contraction:.2e}, \
             lipschitz excess {lipschitz:.2e}, loss {:.3e} <= {:.3e}",
            r.objective_trace.len() - 1,
            r.evaluations,
            r.best_objective,
            loss.value_loss,
            loss.bound_diam
        ),
    ))
}
