use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bisim_core::diagnostics::{partition_info, summary_stats};
use bisim_core::harness::{resolve_output_dir, run_suite, ExperimentConfig, SuiteName, SuiteOutcome};
use bisim_core::logic::{completeness_probe, eval_closed, parse_formula, parse_formulas, soundness_probe};
use bisim_core::mdp::{
    load_mdp, make_chain_example, make_grid_world, make_random_mdp, save_mdp, validate_mdp, FiniteMdp, GridWorldSpec,
};
use bisim_core::metric::{solve_metric_with, MetricOptions, MetricRun, PseudoMetricMatrix, TRIANGLE_SLACK};
use bisim_core::planning::{greedy_policy, value_iteration, value_loss_report_with_metric, PlanTolerances};
use bisim_core::quotient::EpsilonQuotient;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Behavioral metrics, ε-quotients and planning for finite MDPs.
///
/// Exit status: 0 on success, 1 when an invariant check fails, 2 on usage,
/// input or configuration errors.
#[derive(Parser)]
#[command(name = "bisim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the behavioral metric of an MDP.
    Metric(MetricArgs),
    /// Build the ε-quotient of an MDP.
    Quotient(QuotientArgs),
    /// Value iteration and the value-loss report for planning in a quotient.
    Plan(QuotientArgs),
    /// Evaluate formulas or run the logic probes.
    Logic(LogicArgs),
    /// Run an experiment suite from a TOML config.
    Suite(SuiteArgs),
    /// Run the adversarial reward search from a TOML config.
    Adversarial(SuiteArgs),
    /// Write a generated MDP as JSON.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// MDP JSON file.
    #[arg(long)]
    mdp: PathBuf,
    /// Metric fixed-point tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MetricArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Also write the metric as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct QuotientArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Chain-closure threshold ε.
    #[arg(long)]
    eps: f64,
}

#[derive(Args)]
struct LogicArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(subcommand)]
    action: LogicAction,
}

#[derive(Subcommand)]
enum LogicAction {
    /// Evaluate a formula, or every formula in a file.
    Eval {
        /// Formula as an s-expression, e.g. "(max (reward 0) (reward 1))".
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        formula: Option<String>,
        /// File of formulas; `;` starts a comment.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Check random safe formulas against the metric.
    Soundness {
        /// Number of formulas to sample.
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the metric with its depth-k mimicking evaluation.
    Completeness {
        #[arg(long)]
        s1: usize,
        #[arg(long)]
        s2: usize,
        /// Picard depth k.
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
}

#[derive(Args)]
struct SuiteArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's, then $BISIM_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Chain,
    Grid,
    Random,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: Kind,
    /// Destination JSON file.
    #[arg(long)]
    out: PathBuf,
    /// Grid side length.
    #[arg(long, default_value_t = 5)]
    side: usize,
    /// Grid slip probability.
    #[arg(long, default_value_t = 0.07)]
    slip: f64,
    /// Discount; defaults to 0.9 for chain and random, 0.95 for grid.
    #[arg(long)]
    gamma: Option<f64>,
    /// Random MDP state count.
    #[arg(long, default_value_t = 10)]
    states: usize,
    /// Random MDP action count.
    #[arg(long, default_value_t = 4)]
    actions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failed invariant checks, as opposed to errors.
struct Findings(String);

enum Failure {
    Error(bisim_core::Error),
    Findings(Findings),
}

impl From<bisim_core::Error> for Failure {
    fn from(e: bisim_core::Error) -> Self {
        Failure::Error(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Metric(a) => metric(a),
        Command::Quotient(a) => quotient(a),
        Command::Plan(a) => plan(a),
        Command::Logic(a) => logic(a),
        Command::Suite(a) => suite(a, None),
        Command::Adversarial(a) => suite(a, Some(SuiteName::Adversarial)),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Findings(Findings(msg))) => {
            eprintln!("bisim: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("bisim: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(model: &ModelArgs) -> Result<(FiniteMdp, MetricRun), bisim_core::Error> {
    let m = load_mdp(&model.mdp)?;
    let run = solve_metric_with(&m, &MetricOptions { parallel: true, ..MetricOptions::with_tolerance(model.tol) })?;
    Ok((m, run))
}

fn print_matrix(d: &PseudoMetricMatrix) {
    for i in 0..d.n() {
        let row: Vec<String> = d.row(i).iter().map(|x| format!("{x:.6}")).collect();
        println!("{}", row.join(" "));
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn metric(a: MetricArgs) -> Outcome {
    let (_, run) = load(&a.model)?;
    let d = &run.final_metric;
    if let Some(path) = &a.csv {
        std::fs::write(path, d.to_csv()).map_err(|e| bisim_core::Error::Io { path: path.clone(), source: e })?;
    }
    if a.model.json {
        print_json(&serde_json::json!({
            "metric": (0..d.n()).map(|i| d.row(i).to_vec()).collect::<Vec<_>>(),
            "iterations": run.iterations,
            "certified_error": run.certified_error,
            "summary": summary_stats(d).ok(),
        }));
    } else {
        print_matrix(d);
        println!("iterations: {}  certified error: {:e}", run.iterations, run.certified_error);
    }
    if !d.is_pseudometric(TRIANGLE_SLACK) {
        return Err(Failure::Findings(Findings("metric violates the pseudometric axioms".into())));
    }
    Ok(())
}

fn quotient(a: QuotientArgs) -> Outcome {
    let (_, run) = load(&a.model)?;
    let d = &run.final_metric;
    let q = EpsilonQuotient::build(d, a.eps)?;
    if a.model.json {
        let info = partition_info(d, &q.partition)?;
        let mut v = q.to_json();
        v["partition_info"] = serde_json::to_value(info).expect("json");
        print_json(&v);
    } else {
        println!("classes: {}", q.n_classes());
        for (c, members) in q.partition.classes().iter().enumerate() {
            let names: Vec<String> = members.iter().map(|s| s.to_string()).collect();
            println!("  class {c}: {{{}}}  diameter {:.6}", names.join(", "), q.intra_diameters[c]);
        }
        println!("quotient metric:");
        print_matrix(&q.d_q);
    }
    Ok(())
}

fn plan(a: QuotientArgs) -> Outcome {
    let (m, run) = load(&a.model)?;
    let tol = PlanTolerances { metric: a.model.tol, value: a.model.tol };
    let v = value_iteration(&m, tol.value)?;
    let policy = greedy_policy(&m, &v)?;
    let r = value_loss_report_with_metric(&m, &run.final_metric, a.eps, &tol)?;
    if a.model.json {
        print_json(&serde_json::json!({
            "values": v.values(),
            "policy": policy.actions(),
            "report": r,
        }));
    } else {
        print!("{}", v.to_csv());
        print!("{}", policy.to_csv());
        println!(
            "epsilon {}  classes {}  value_loss {:.6e}  bound_eps {:.6}  bound_diam {:.6}",
            r.epsilon, r.classes, r.value_loss, r.bound_eps, r.bound_diam
        );
        if !r.within_eps_bound {
            println!("finding: value loss exceeds 2ε/(1−γ)");
        }
    }
    if !r.within_diam_bound {
        return Err(Failure::Findings(Findings("value loss exceeds the diameter bound".into())));
    }
    if r.lipschitz_excess > 1e-7 {
        return Err(Failure::Findings(Findings("optimal values are not 1-Lipschitz for d_M".into())));
    }
    Ok(())
}

fn logic(a: LogicArgs) -> Outcome {
    let (m, run) = load(&a.model)?;
    let d = &run.final_metric;
    match a.action {
        LogicAction::Eval { formula, file } => {
            let formulas = match (formula, file) {
                (Some(text), _) => vec![parse_formula(&text)?],
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| bisim_core::Error::Io { path: path.clone(), source: e })?;
                    parse_formulas(&text)?
                }
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let mut out = Vec::new();
            for f in &formulas {
                let v = eval_closed(&m, f)?;
                if !a.model.json {
                    let vals: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
                    println!("{f}\n  {}", vals.join(" "));
                }
                out.push(serde_json::json!({ "formula": f.to_string(), "values": v }));
            }
            if a.model.json {
                print_json(&serde_json::Value::Array(out));
            }
            Ok(())
        }
        LogicAction::Soundness { count, seed } => {
            let r = soundness_probe(&m, d, seed, count)?;
            if a.model.json {
                print_json(&serde_json::to_value(&r).expect("json"));
            } else {
                println!(
                    "formulas {}  violations {}  max excess {:e}  max deviation {:.6}",
                    r.formulas, r.violations, r.max_excess, r.max_deviation
                );
            }
            if r.passed {
                Ok(())
            } else {
                Err(Failure::Findings(Findings(format!(
                    "{} formulas exceed the metric; worst: {}",
                    r.violations,
                    r.worst_formula.unwrap_or_default()
                ))))
            }
        }
        LogicAction::Completeness { s1, s2, depth } => {
            let p = completeness_probe(&m, d, s1, s2, depth)?;
            if a.model.json {
                print_json(&serde_json::to_value(p).expect("json"));
            } else {
                println!(
                    "depth {}  lower bound {:.9}  gap {:e}  bound {:e}",
                    p.depth, p.lower_bound, p.gap, p.bound
                );
            }
            if p.within(1e-9, 1e-7) {
                Ok(())
            } else {
                Err(Failure::Findings(Findings("completeness gap outside its bound".into())))
            }
        }
    }
}

fn suite(a: SuiteArgs, force: Option<SuiteName>) -> Outcome {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = force {
        cfg.suite = s;
        cfg.validate()?;
    }
    let outcome: SuiteOutcome = run_suite(&cfg)?;
    let dir = resolve_output_dir(a.out.as_deref(), &cfg);
    outcome.write(&dir)?;
    let report = &outcome.report;
    for b in &report.baseline {
        println!(
            "seed {}: array_mean {:.4}  array_std {:.4}  frobenius {:.4}  spectral_radius {:.4}",
            b.seed, b.array_mean, b.array_std, b.frobenius, b.spectral_radius
        );
    }
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
    println!(
        "{}: {} checks, {} failed, {} findings -> {}",
        report.suite.as_str(),
        report.checks.len(),
        failed.len(),
        report.findings.len(),
        display(&dir)
    );
    for f in &report.findings {
        println!("finding: {f}");
    }
    if failed.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = failed.iter().map(|c| format!("{} (seed {})", c.name, c.seed)).collect();
        Err(Failure::Findings(Findings(format!("failed checks: {}", names.join(", ")))))
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn generate(a: GenerateArgs) -> Outcome {
    let m = match a.kind {
        Kind::Chain => {
            let m = make_chain_example();
            match a.gamma {
                Some(g) => m.with_gamma(g),
                None => m,
            }
        }
        Kind::Grid => make_grid_world(&GridWorldSpec::new(a.side, a.slip, a.gamma.unwrap_or(0.95)), a.seed)?,
        Kind::Random => make_random_mdp(a.states, a.actions, a.gamma.unwrap_or(0.9), a.seed)?,
    };
    let report = validate_mdp(&m);
    if !report.ok {
        return Err(Failure::Error(bisim_core::Error::InvalidModel(report.to_string())));
    }
    save_mdp(&m, &a.out, None)?;
    println!("wrote {} ({} states, {} actions)", display(&a.out), m.n_states(), m.n_actions());
    Ok(())
}
