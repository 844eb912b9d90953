use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::adversarial::{adversarial_search, CONTRACTION_SLACK, LIPSCHITZ_SLACK};
use super::config::{ExperimentConfig, SuiteName};
use super::{BaselineRow, Check, Constants, RunMetadata, SuiteOutcome, SuiteReport, Timing};
use crate::diagnostics::{
    partition_info, spectral_report, summary_stats, SpectralMode, JACOBI_TOLERANCE, ZERO_EIGEN_THRESHOLD,
};
use crate::error::Result;
use crate::logic::FIXPOINT_TOLERANCE;
use crate::mdp::FiniteMdp;
use crate::metric::{estimate_contraction, solve_metric_with, MetricOptions, MetricRun, PseudoMetricMatrix, TRIANGLE_SLACK};
use crate::planning::{value_loss_report_with_metric, PlanTolerances, LOSS_SLACK};
use crate::quotient::{backward_stability_check, epsilon_classes, idempotence_check_with_metric, EpsilonQuotient};
use crate::transport::GAP_TOL;

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    mdp: FiniteMdp,
    run: MetricRun,
    checks: Vec<Check>,
    rows: Vec<Value>,
    findings: Vec<String>,
    files: Vec<(String, String)>,
    timings: Vec<Timing>,
}

impl Context<'_> {
    fn d(&self) -> &PseudoMetricMatrix {
        &self.run.final_metric
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn file(&mut self, name: String, contents: String) {
        self.files.push((name, contents));
    }

    fn timed<T>(&mut self, stage: String, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        self.timings.push(Timing {
            stage,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

fn metric_options(cfg: &ExperimentConfig) -> MetricOptions {
    MetricOptions {
        parallel: true,
        ..MetricOptions::with_tolerance(cfg.tolerance)
    }
}

fn solve(cfg: &ExperimentConfig, m: &FiniteMdp) -> Result<MetricRun> {
    solve_metric_with(m, &metric_options(cfg))
}

fn baseline_row(cfg: &ExperimentConfig, seed: u64, m: &FiniteMdp, run: &MetricRun) -> Result<BaselineRow> {
    let d = &run.final_metric;
    let stats = summary_stats(d)?;
    let spectral = spectral_report(d, cfg.spectral_mode)?;
    let contraction = estimate_contraction(m, cfg.contraction_pairs, seed, Some(run))?;
    Ok(BaselineRow {
        seed,
        n_states: m.n_states(),
        gamma: m.gamma(),
        iterations: run.iterations,
        certified_error: run.certified_error,
        array_mean: stats.array_mean,
        array_std: stats.array_std,
        frobenius: spectral.frobenius,
        spectral_radius: spectral.spectral_radius,
        condition_number: spectral.condition_number,
        eigen_entropy: spectral.eigen_entropy,
        empirical_contraction: contraction.random_pair,
        residual_contraction: contraction.residual_ratio,
    })
}

fn metric_row(d: &PseudoMetricMatrix, mode: SpectralMode) -> Result<Value> {
    let stats = summary_stats(d)?;
    let s = spectral_report(d, mode)?;
    Ok(json!({
        "array_mean": stats.array_mean,
        "array_std": stats.array_std,
        "frobenius": s.frobenius,
        "spectral_radius": s.spectral_radius,
        "condition_number": s.condition_number,
        "eigen_entropy": s.eigen_entropy,
    }))
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(a), Value::Object(b)) = (a.as_object_mut(), b) {
        a.extend(b);
    }
    a
}

/// Runs `cfg.suite` over every seed.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    cfg.validate()?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut baseline = Vec::new();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut findings = Vec::new();
    let mut files = Vec::new();
    let mut timings = Vec::new();

    for &seed in &cfg.seeds {
        let t0 = Instant::now();
        let mdp = cfg.environment_mdp(seed)?;
        let run = solve(cfg, &mdp)?;
        timings.push(Timing {
            stage: format!("seed{seed}/metric"),
            seconds: t0.elapsed().as_secs_f64(),
        });
        baseline.push(baseline_row(cfg, seed, &mdp, &run)?);
        let mut ctx = Context {
            cfg,
            seed,
            mdp,
            run,
            checks: Vec::new(),
            rows: Vec::new(),
            findings: Vec::new(),
            files: Vec::new(),
            timings: Vec::new(),
        };
        ctx.check(Check::holds("base_pseudometric", seed, ctx.d().is_pseudometric(TRIANGLE_SLACK)));
        ctx.file(format!("metric_seed{seed}.csv"), ctx.d().to_csv());
        let stage = format!("seed{seed}/{}", cfg.suite.as_str());
        ctx.timed(stage, |ctx| match cfg.suite {
            SuiteName::MetricBaseline => metric_baseline(ctx),
            SuiteName::TransferTest => transfer_test(ctx),
            SuiteName::Composition => composition(ctx),
            SuiteName::BackwardStability => backward_stability(ctx),
            SuiteName::InfoTheory => info_theory(ctx),
            SuiteName::Spectral => spectral(ctx),
            SuiteName::Scaling => scaling(ctx),
            SuiteName::CompressionSweep => compression_sweep(ctx),
            SuiteName::PerturbSweep => perturb_sweep(ctx),
            SuiteName::Adversarial => adversarial(ctx),
        })?;
        checks.extend(ctx.checks);
        rows.extend(ctx.rows);
        findings.extend(ctx.findings);
        files.extend(ctx.files);
        timings.extend(ctx.timings);
    }

    let passed = checks.iter().all(|c| c.passed);
    let report = SuiteReport {
        suite: cfg.suite,
        config: cfg.clone(),
        constants: Constants {
            metric_tolerance: cfg.tolerance,
            drift_tolerance: cfg.drift_tolerance,
            triangle_slack: TRIANGLE_SLACK,
            contraction_slack: CONTRACTION_SLACK,
            lipschitz_slack: LIPSCHITZ_SLACK,
            loss_slack: LOSS_SLACK,
            transport_gap_tolerance: GAP_TOL,
            fixpoint_tolerance: FIXPOINT_TOLERANCE,
            jacobi_tolerance: JACOBI_TOLERANCE,
            zero_eigen_threshold: ZERO_EIGEN_THRESHOLD,
            entropy_base: "nats",
        },
        baseline,
        rows,
        checks,
        findings,
        passed,
    };
    Ok(SuiteOutcome {
        report,
        metadata: RunMetadata {
            suite: cfg.suite,
            started_unix_seconds: started,
            total_seconds: clock.elapsed().as_secs_f64(),
            timings,
        },
        files,
    })
}

fn metric_baseline(ctx: &mut Context) -> Result<()> {
    let seed = ctx.seed;
    let gamma = ctx.mdp.gamma();
    let est = estimate_contraction(&ctx.mdp, ctx.cfg.contraction_pairs, seed, Some(&ctx.run))?;
    ctx.check(Check::at_most("contraction_excess", seed, est.max_excess, CONTRACTION_SLACK));
    ctx.check(Check::at_most("empirical_contraction", seed, est.random_pair, gamma + 1e-6));
    let row = json!({
        "seed": seed,
        "iterations": ctx.run.iterations,
        "certified_error": ctx.run.certified_error,
        "diameter": ctx.d().max_entry(),
        "empirical_contraction": est.random_pair,
        "residual_contraction": est.residual_ratio,
        "contraction_pairs": est.pairs_used,
    });
    ctx.rows.push(merge(row, metric_row(ctx.d(), ctx.cfg.spectral_mode)?));
    ctx.file(format!("residuals_seed{seed}.csv"), ctx.run.residuals_csv());
    Ok(())
}

fn transfer_test(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    let perturbed = cfg.grid_or_base(cfg.side, cfg.perturbed_slip, seed)?;
    let run = solve(cfg, &perturbed)?;
    let d2 = &run.final_metric;
    let base = summary_stats(ctx.d())?;
    let stats = summary_stats(d2)?;
    ctx.check(Check::holds("perturbed_pseudometric", seed, d2.is_pseudometric(TRIANGLE_SLACK)));
    let row = json!({
        "seed": seed,
        "slip": cfg.slip,
        "perturbed_slip": cfg.perturbed_slip,
        "baseline_array_mean": base.array_mean,
        "mean_delta": stats.array_mean - base.array_mean,
        "sup_change": d2.sup_distance(ctx.d()),
        "iterations": run.iterations,
    });
    ctx.rows.push(merge(row, metric_row(d2, cfg.spectral_mode)?));
    ctx.file(format!("metric_perturbed_seed{seed}.csv"), d2.to_csv());
    Ok(())
}

fn composition(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    for &eps in &cfg.epsilons {
        let r = idempotence_check_with_metric(&ctx.mdp, ctx.d(), eps, cfg.drift_tolerance)?;
        ctx.check(Check::holds("requotient_bijective", seed, r.bijective));
        ctx.check(Check::at_most("idempotence_drift", seed, r.drift, cfg.drift_tolerance));
        ctx.rows.push(json!({
            "seed": seed,
            "epsilon": eps,
            "classes": r.classes,
            "bijective": r.bijective,
            "drift": r.drift,
            "model_classes_after": r.model_roundtrip.classes_after,
            "model_partition_stable": r.model_roundtrip.partition_stable,
            "model_metric_deviation": r.model_roundtrip.metric_deviation,
        }));
    }
    // Quotienting at ε1 and then at ε2 ≥ ε1 gives the ε2-classes.
    for w in cfg.epsilons.windows(2) {
        let (e1, e2) = (w[0], w[1]);
        let first = EpsilonQuotient::build(ctx.d(), e1)?;
        let second = epsilon_classes(&first.d_q, e2)?;
        let composed: Vec<usize> = first.partition.assignment().iter().map(|&c| second.class_of(c)).collect();
        let direct = epsilon_classes(ctx.d(), e2)?;
        let same = crate::quotient::Partition::from_labels(&composed) == direct;
        ctx.check(Check::holds("composed_partition", seed, same));
        ctx.rows.push(json!({
            "seed": seed,
            "epsilon_inner": e1,
            "epsilon_outer": e2,
            "composed_classes": second.n_classes(),
            "direct_classes": direct.n_classes(),
            "composed_matches": same,
        }));
    }
    Ok(())
}

fn backward_stability(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    for &eps in &cfg.epsilons {
        let r = backward_stability_check(ctx.d(), eps, cfg.drift_tolerance)?;
        ctx.check(Check::holds("partition_preserved", seed, r.partition_preserved));
        ctx.check(Check::holds("non_expansive", seed, r.non_expansive));
        ctx.check(Check::at_most("pullback_drift", seed, r.drift, cfg.drift_tolerance));
        ctx.rows.push(serde_json::to_value(&r).map(|v| merge(json!({ "seed": seed }), v))?);
    }
    Ok(())
}

fn info_theory(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    for &eps in &cfg.epsilons {
        let p = epsilon_classes(ctx.d(), eps)?;
        let info = partition_info(ctx.d(), &p)?;
        let ok = info.compression_ratio > 0.0 && info.compression_ratio <= 1.0;
        ctx.check(Check::holds("compression_ratio_range", seed, ok));
        ctx.rows.push(merge(json!({ "seed": seed, "epsilon": eps }), serde_json::to_value(&info)?));
    }
    Ok(())
}

fn spectral(ctx: &mut Context) -> Result<()> {
    let seed = ctx.seed;
    for mode in [SpectralMode::Raw, SpectralMode::DoubleCentered] {
        let s = spectral_report(ctx.d(), mode)?;
        let sum: f64 = s.eigenvalues.iter().sum();
        ctx.check(Check::at_most("reconstruction_error", seed, s.reconstruction_error, 1e-8));
        ctx.check(Check::at_most("radius_minus_frobenius", seed, s.spectral_radius - s.frobenius, 1e-12 * s.frobenius));
        if mode == SpectralMode::Raw {
            ctx.check(Check::at_most("eigenvalue_sum", seed, sum.abs(), 1e-8 * s.frobenius.max(1.0)));
        }
        let name = serde_json::to_value(mode)?;
        let ratio = if s.frobenius > 0.0 { s.spectral_radius / s.frobenius } else { 0.0 };
        ctx.rows.push(json!({
            "seed": seed,
            "mode": name,
            "frobenius": s.frobenius,
            "spectral_radius": s.spectral_radius,
            "condition_number": s.condition_number,
            "eigen_entropy": s.eigen_entropy,
            "radius_ratio": ratio,
            "eigenvalue_sum": sum,
            "reconstruction_error": s.reconstruction_error,
        }));
        let mut csv = String::from("index,eigenvalue\n");
        for (i, l) in s.eigenvalues.iter().enumerate() {
            csv.push_str(&format!("{i},{l}\n"));
        }
        ctx.file(format!("eigenvalues_{}_seed{seed}.csv", name.as_str().unwrap_or("mode")), csv);
    }
    Ok(())
}

fn quotient_sweep(d: &PseudoMetricMatrix, epsilons: &[f64]) -> Result<Vec<Value>> {
    epsilons
        .iter()
        .map(|&eps| {
            let q = EpsilonQuotient::build(d, eps)?;
            Ok(json!({
                "epsilon": eps,
                "classes": q.n_classes(),
                "compression_ratio": q.compression_ratio(),
                "max_intra_diameter": q.max_intra_diameter(),
            }))
        })
        .collect()
}

fn scaling(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    for &side in &cfg.sides {
        let (m, run) = ctx.timed(format!("seed{seed}/scaling/side{side}/metric"), |_| {
            let m = cfg.grid_or_base(side, cfg.slip, seed)?;
            let run = solve(cfg, &m)?;
            Ok((m, run))
        })?;
        let d = &run.final_metric;
        let analysis = ctx.timed(format!("seed{seed}/scaling/side{side}/analysis"), |_| {
            Ok((metric_row(d, cfg.spectral_mode)?, quotient_sweep(d, &cfg.epsilons)?))
        })?;
        ctx.check(Check::holds("pseudometric", seed, d.is_pseudometric(TRIANGLE_SLACK)));
        let row = json!({
            "seed": seed,
            "side": side,
            "n_states": m.n_states(),
            "iterations": run.iterations,
            "certified_error": run.certified_error,
            "quotients": analysis.1,
        });
        ctx.rows.push(merge(row, analysis.0));
        ctx.file(format!("metric_side{side}_seed{seed}.csv"), d.to_csv());
    }
    Ok(())
}

fn compression_sweep(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    let tol = PlanTolerances {
        metric: cfg.tolerance,
        value: cfg.tolerance,
    };
    for &eps in &cfg.epsilons {
        let r = value_loss_report_with_metric(&ctx.mdp, ctx.d(), eps, &tol)?;
        ctx.check(Check::at_most("value_loss_diameter_bound", seed, r.value_loss, r.bound_diam + LOSS_SLACK));
        ctx.check(Check::at_most("value_lipschitz", seed, r.lipschitz_excess, LIPSCHITZ_SLACK));
        if !r.within_eps_bound {
            ctx.findings.push(format!(
                "seed {seed}, epsilon {eps}: value loss {} exceeds 2ε/(1−γ) = {}",
                r.value_loss, r.bound_eps
            ));
        }
        ctx.rows.push(json!({
            "seed": seed,
            "epsilon": eps,
            "classes": r.classes,
            "compression_ratio": r.classes as f64 / ctx.mdp.n_states() as f64,
            "max_intra_diameter": r.max_intra_diameter,
            "value_loss": r.value_loss,
            "bound_eps": r.bound_eps,
            "bound_diam": r.bound_diam,
            "within_eps_bound": r.within_eps_bound,
            "within_diam_bound": r.within_diam_bound,
            "lipschitz_excess": r.lipschitz_excess,
        }));
    }
    Ok(())
}

fn perturb_sweep(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    let base = summary_stats(ctx.d())?;
    let steps = cfg.sweep_steps.max(1);
    for k in 1..=steps {
        let slip = cfg.slip + (cfg.perturbed_slip - cfg.slip) * k as f64 / steps as f64;
        let m = cfg.grid_or_base(cfg.side, slip, seed)?;
        let run = solve(cfg, &m)?;
        let d = &run.final_metric;
        ctx.check(Check::holds("perturbed_pseudometric", seed, d.is_pseudometric(TRIANGLE_SLACK)));
        let stats = summary_stats(d)?;
        ctx.rows.push(json!({
            "seed": seed,
            "slip": slip,
            "array_mean": stats.array_mean,
            "array_std": stats.array_std,
            "mean_delta": stats.array_mean - base.array_mean,
            "sup_change": d.sup_distance(ctx.d()),
            "iterations": run.iterations,
        }));
    }
    Ok(())
}

fn adversarial(ctx: &mut Context) -> Result<()> {
    let (cfg, seed) = (ctx.cfg, ctx.seed);
    let r = adversarial_search(&ctx.mdp, &cfg.adversarial, cfg.tolerance, seed, true)?;
    let inv = &r.invariants;
    ctx.check(Check::at_most("contraction_excess", seed, inv.contraction_excess, CONTRACTION_SLACK));
    ctx.check(Check::holds("pseudometric", seed, inv.pseudometric_ok));
    ctx.check(Check::at_most("value_lipschitz", seed, inv.lipschitz_excess, LIPSCHITZ_SLACK));
    ctx.check(Check::at_most("value_loss_diameter_bound", seed, inv.value_loss, inv.bound_diam + LOSS_SLACK));
    if !inv.eps_bound_ok {
        ctx.findings.push(format!(
            "seed {seed}: worst instance value loss {} exceeds 2ε/(1−γ) = {}",
            inv.value_loss, inv.bound_eps
        ));
    }
    if r.failed_evaluations > 0 {
        ctx.findings.push(format!("seed {seed}: {} candidate evaluations failed", r.failed_evaluations));
    }
    ctx.rows.push(json!({
        "seed": seed,
        "objective": r.objective,
        "settings": r.settings,
        "reward_bound": r.reward_bound,
        "epsilon_fraction": r.epsilon_fraction,
        "best_objective": r.best_objective,
        "evaluations": r.evaluations,
        "best_rewards": r.best_rewards,
        "worst": r.worst,
        "invariants": r.invariants,
        "value_loss": inv.value_loss,
        "bound_eps": inv.bound_eps,
        "bound_diam": inv.bound_diam,
        "empirical_contraction": inv.contraction_ratio,
    }));
    let mut trace = String::from("generation,best_objective\n");
    for (g, v) in r.objective_trace.iter().enumerate() {
        trace.push_str(&format!("{g},{v}\n"));
    }
    ctx.file(format!("objective_trace_seed{seed}.csv"), trace);
    Ok(())
}
