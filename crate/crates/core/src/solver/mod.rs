//! Joint feasibility of the network's matrix inequalities.
//!
//! Constraints are compiled to affine form by probing their defining
//! formulas, solved as a maximum-margin semidefinite program, and accepted
//! only after an eigenvalue check of the directly reassembled matrices.

mod families;
mod problem;
mod search;
mod variables;

pub use families::{
    AnalysisFamily, AnalysisVariables, NodeScalars, SynthesisFamily, SynthesisVariables,
};
pub use problem::{
    check_constraints, compile, AffineConstraint, ClosureFamily, ConstraintCheck, ConstraintValue,
    LmiFamily, LmiProblem, Sense, SolveOutcome, SolveStatus, SolverBudget, VerificationReport,
    PSD_SLACK, STRICT_MARGIN,
};
pub use search::{
    analyze, is_monotone, minimize_gamma, recheck_analysis, synthesize, synthesize_logged,
    xi_max_eigenvalue, AnalysisReport, GammaProbe, GammaSearch, GammaSearchOutcome, GridPoint,
    PointOutcome, ScalarGrid, SynthesisResult,
};
pub use variables::{MatrixVariable, Structure, VarId, VariableMap};
