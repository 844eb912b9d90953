//! A quantitative modal μ-calculus evaluated on finite MDPs, with probes
//! relating formula deviations to the behavioral metric.

mod eval;
mod formula;
pub mod generate;
mod probes;
mod sexpr;

pub use eval::{eval_closed, eval_formula, Valuation, FIXPOINT_TOLERANCE};
pub use formula::{rational_to_f64, Formula, LipOp};
pub use num_rational::Rational64;
pub use probes::{
    completeness_probe, deviation_excess, mimic_deviation, soundness_of, soundness_probe, CompletenessProbe,
    SoundnessReport, SOUNDNESS_SLACK,
};
pub use sexpr::{parse_formula, parse_formulas};
