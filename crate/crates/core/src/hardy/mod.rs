//! Discrete weighted Hardy quotients, their minimization, witness families,
//! refinement studies and admissibility predictions.

mod multigrid;
#[cfg(test)]
mod oracle;
mod problem;
mod report;
mod solve;
mod study;
mod witness;

pub use problem::{quotient, Boundary, Discretization, HardyProblem, LineProblem, Preconditioner, GRADIENT_EPS};
pub use report::{admissibility_csv, admissibility_svg, refinement_csv, result_json, trace_csv};
pub use solve::{minimize_quotient, Method, RayleighResult, SolverOptions, SolverStatus};
pub use study::{
    admissibility_scan, default_protocol, estimate_inputs, predict_admissibility, refinement_study, AdmissibilityMap,
    CodimPair, LocalEstimate, NumericLabel, PredictedLabel, PredictionInputs, Refinable, RefinementLevel,
    RefinementOptions, RefinementStudy, ScanPoint, WitnessProbe,
};
pub use witness::{certifies_decay, witness_quotient, WitnessFamily, DECAY_RATIO};
