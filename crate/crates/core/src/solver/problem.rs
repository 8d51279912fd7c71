use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::variables::VariableMap;
use crate::error::{Error, Result};
use crate::linalg::{asymmetry, eig_extremes, max_abs, Mat};

/// Which side of zero a constraint matrix must sit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `F(x) ≺ 0`, verified as `λ_max ≤ −δ`.
    NegativeDefinite,
    /// `F(x) ⪰ 0`, verified as `λ_min ≥ −1e-9·scale`.
    PositiveSemidefinite,
}

#[derive(Debug, Clone)]
pub struct ConstraintValue {
    pub name: String,
    pub sense: Sense,
    pub matrix: Mat,
}

impl ConstraintValue {
    pub fn new(name: impl Into<String>, sense: Sense, matrix: Mat) -> Self {
        Self {
            name: name.into(),
            sense,
            matrix,
        }
    }
}

/// A set of matrix constraints evaluated directly from their defining
/// formulas. Compilation probes this to obtain the affine form; verification
/// calls it again on the solver's answer.
pub trait LmiFamily: Send + Sync + fmt::Debug {
    fn variables(&self) -> &VariableMap;
    fn evaluate(&self, x: &[f64]) -> Result<Vec<ConstraintValue>>;
}

/// Family backed by a closure; used for small hand-built problems.
pub struct ClosureFamily<F> {
    vars: VariableMap,
    eval: F,
}

impl<F> ClosureFamily<F>
where
    F: Fn(&VariableMap, &[f64]) -> Result<Vec<ConstraintValue>> + Send + Sync,
{
    pub fn new(vars: VariableMap, eval: F) -> Self {
        Self { vars, eval }
    }
}

impl<F> fmt::Debug for ClosureFamily<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureFamily")
            .field("vars", &self.vars.len())
            .finish()
    }
}

impl<F> LmiFamily for ClosureFamily<F>
where
    F: Fn(&VariableMap, &[f64]) -> Result<Vec<ConstraintValue>> + Send + Sync,
{
    fn variables(&self) -> &VariableMap {
        &self.vars
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<ConstraintValue>> {
        (self.eval)(&self.vars, x)
    }
}

/// `F_0 + Σ_l x_l F_l` with only the nonzero `F_l` kept.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub name: String,
    pub sense: Sense,
    pub constant: Mat,
    pub terms: Vec<(usize, Mat)>,
}

impl AffineConstraint {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, x: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for (l, f) in &self.terms {
            m += f * x[*l];
        }
        m
    }
}

/// Affine form of an [`LmiFamily`], ready for a solver.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    family: Arc<dyn LmiFamily>,
    constraints: Vec<AffineConstraint>,
}

const AFFINE_TOL: f64 = 1e-10;
const SYM_TOL: f64 = 1e-12;
/// Relative margin for strict constraints.
pub const STRICT_MARGIN: f64 = 1e-6;
/// Relative slack for non-strict constraints.
pub const PSD_SLACK: f64 = 1e-9;

fn shape_of(values: &[ConstraintValue]) -> Vec<(String, Sense, usize)> {
    values
        .iter()
        .map(|c| (c.name.clone(), c.sense, c.matrix.nrows()))
        .collect()
}

/// Probes `family` at zero and at each unit vector to obtain `F_0` and
/// `F_l`, then checks the affine form against direct evaluation at two
/// pseudo-random points.
pub fn compile(family: Arc<dyn LmiFamily>) -> Result<LmiProblem> {
    let nv = family.variables().len();
    let zero = vec![0.0; nv];
    let base = family.evaluate(&zero)?;
    for c in &base {
        if !c.matrix.is_square() {
            return Err(Error::Dimension(format!(
                "constraint {} is not square",
                c.name
            )));
        }
        if asymmetry(&c.matrix) > SYM_TOL {
            return Err(Error::InvalidArgument(format!(
                "constraint {} is not symmetric",
                c.name
            )));
        }
    }
    let shape = shape_of(&base);
    let probes: Vec<Vec<ConstraintValue>> = (0..nv)
        .into_par_iter()
        .map(|l| {
            let mut e = zero.clone();
            e[l] = 1.0;
            family.evaluate(&e)
        })
        .collect::<Result<_>>()?;
    let mut constraints: Vec<AffineConstraint> = base
        .into_iter()
        .map(|c| AffineConstraint {
            name: c.name,
            sense: c.sense,
            constant: c.matrix,
            terms: Vec::new(),
        })
        .collect();
    for (l, probe) in probes.into_iter().enumerate() {
        if shape_of(&probe) != shape {
            return Err(Error::NonAffine(
                "constraint list changes with the variables".into(),
            ));
        }
        for (c, v) in constraints.iter_mut().zip(probe) {
            let diff = v.matrix - &c.constant;
            if max_abs(&diff) > 0.0 {
                c.terms.push((l, diff));
            }
        }
    }
    let problem = LmiProblem {
        family,
        constraints,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..2 {
        let x: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = problem.family.evaluate(&x)?;
        for (c, d) in problem.constraints.iter().zip(&direct) {
            let compiled = c.evaluate(&x);
            let scale = 1.0 + max_abs(&d.matrix);
            let err = max_abs(&(compiled - &d.matrix));
            if err > AFFINE_TOL * scale {
                return Err(Error::NonAffine(format!(
                    "constraint {} deviates from its affine form by {err:e}",
                    c.name
                )));
            }
        }
    }
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBudget {
    pub max_iter: u32,
    /// Seconds per solve.
    pub time_limit: f64,
    /// `|x_l| ≤ box_bound` for every scalar unknown.
    pub box_bound: f64,
    /// The margin objective stops improving at `−margin_floor`.
    pub margin_floor: f64,
}

impl Default for SolverBudget {
    fn default() -> Self {
        Self {
            max_iter: 200,
            time_limit: 60.0,
            box_bound: 1e4,
            margin_floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    InfeasibleWithinBudget,
    BudgetExhausted,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub sense: Sense,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `−δ` for strict constraints, `−slack` for non-strict ones.
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<ConstraintCheck>,
    pub passed: bool,
}

impl VerificationReport {
    /// First failing constraint.
    pub fn offending(&self) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    /// Largest `λ_max` over the strict constraints.
    pub fn worst_strict(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.sense == Sense::NegativeDefinite)
            .map(|c| c.lambda_max)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Eigenvalue check of already evaluated constraint matrices.
pub fn check_constraints(values: &[ConstraintValue]) -> VerificationReport {
    let checks: Vec<ConstraintCheck> = values
        .iter()
        .map(|c| {
            let finite = c.matrix.iter().all(|v| v.is_finite());
            let (lo, hi) = if finite {
                eig_extremes(&c.matrix)
            } else {
                (f64::NAN, f64::NAN)
            };
            let scale = max_abs(&c.matrix).max(1.0);
            let (threshold, passed) = match c.sense {
                Sense::NegativeDefinite => {
                    let t = -STRICT_MARGIN * scale;
                    (t, hi <= t)
                }
                Sense::PositiveSemidefinite => {
                    let t = -PSD_SLACK * scale;
                    (t, lo >= t)
                }
            };
            ConstraintCheck {
                name: c.name.clone(),
                sense: c.sense,
                lambda_min: lo,
                lambda_max: hi,
                threshold,
                passed,
            }
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    VerificationReport { checks, passed }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub values: Option<Vec<f64>>,
    /// Optimal `t` of the margin problem; negative means strictly feasible.
    pub margin: f64,
    pub verification: Option<VerificationReport>,
    pub iterations: u32,
    pub wall_time: Duration,
    pub solver_status: String,
}

// Non-strict cones are tightened by this much so that interior-point
// round-off stays inside the verification slack.
const PSD_TIGHTEN: f64 = 1e-7;

/// Upper-triangle column-major position, the layout of Clarabel's PSD cone.
fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }
}

impl LmiProblem {
    pub fn family(&self) -> &Arc<dyn LmiFamily> {
        &self.family
    }

    pub fn constraints(&self) -> &[AffineConstraint] {
        &self.constraints
    }

    pub fn variable_count(&self) -> usize {
        self.family.variables().len()
    }

    pub fn evaluate_compiled(&self, x: &[f64]) -> Vec<Mat> {
        self.constraints.iter().map(|c| c.evaluate(x)).collect()
    }

    /// Reassembles every constraint through the family and checks its
    /// eigenvalues. Never consults the compiled form.
    pub fn verify_solution(&self, x: &[f64]) -> VerificationReport {
        match self.family.evaluate(x) {
            Ok(values) => check_constraints(&values),
            Err(e) => VerificationReport {
                checks: vec![ConstraintCheck {
                    name: format!("evaluation: {e}"),
                    sense: Sense::NegativeDefinite,
                    lambda_min: f64::NAN,
                    lambda_max: f64::NAN,
                    threshold: 0.0,
                    passed: false,
                }],
                passed: false,
            },
        }
    }

    /// Minimizes `t` subject to `tI − F(x) ⪰ 0` on strict constraints,
    /// `F(x) ⪰ 0` on the rest, a box on `x` and `t ≥ −margin_floor`. The
    /// answer counts as feasible only once [`Self::verify_solution`] passes.
    pub fn solve_feasibility(&self, budget: &SolverBudget) -> SolveOutcome {
        let start = Instant::now();
        let nv = self.variable_count();
        let t_col = nv;
        let mut a = Triplets {
            rows: vec![],
            cols: vec![],
            vals: vec![],
        };
        let mut b = Vec::new();
        let mut cones = Vec::new();

        // box and margin floor
        for l in 0..nv {
            a.push(b.len(), l, 1.0);
            b.push(budget.box_bound);
            a.push(b.len(), l, -1.0);
            b.push(budget.box_bound);
        }
        a.push(b.len(), t_col, -1.0);
        b.push(budget.margin_floor);
        cones.push(SupportedConeT::NonnegativeConeT(2 * nv + 1));

        let sqrt2 = std::f64::consts::SQRT_2;
        for c in &self.constraints {
            let d = c.dim();
            let row0 = b.len();
            let strict = c.sense == Sense::NegativeDefinite;
            // s = b − A z must equal svec(tI − F) or svec(F − εI)
            let sign = if strict { -1.0 } else { 1.0 };
            b.resize(row0 + d * (d + 1) / 2, 0.0);
            for j in 0..d {
                for i in 0..=j {
                    let w = if i == j { 1.0 } else { sqrt2 };
                    let r = row0 + svec_index(i, j);
                    let mut rhs = sign * c.constant[(i, j)] * w;
                    if i == j && !strict {
                        rhs -= PSD_TIGHTEN;
                    }
                    b[r] = rhs;
                    for (l, f) in &c.terms {
                        a.push(r, *l, -sign * f[(i, j)] * w);
                    }
                    if strict && i == j {
                        a.push(r, t_col, -1.0);
                    }
                }
            }
            cones.push(if d == 1 {
                SupportedConeT::NonnegativeConeT(1)
            } else {
                SupportedConeT::PSDTriangleConeT(d)
            });
        }

        let m = b.len();
        let amat = CscMatrix::new_from_triplets(m, nv + 1, a.rows, a.cols, a.vals);
        let pmat = CscMatrix::zeros((nv + 1, nv + 1));
        let mut q = vec![0.0; nv + 1];
        q[t_col] = 1.0;
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(budget.max_iter)
            .time_limit(budget.time_limit)
            .build()
            .expect("static solver settings");
        let mut solver = match DefaultSolver::new(&pmat, &q, &amat, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => {
                return SolveOutcome {
                    status: SolveStatus::BudgetExhausted,
                    values: None,
                    margin: f64::NAN,
                    verification: None,
                    iterations: 0,
                    wall_time: start.elapsed(),
                    solver_status: format!("setup failed: {e:?}"),
                }
            }
        };
        solver.solve();
        let status = solver.solution.status;
        let z = solver.solution.x.clone();
        let iterations = solver.solution.iterations;
        let margin = z.get(t_col).copied().unwrap_or(f64::NAN);
        let values: Vec<f64> = z.into_iter().take(nv).collect();
        let report = self.verify_solution(&values);
        let status_out = if report.passed {
            SolveStatus::Feasible
        } else {
            match status {
                SolverStatus::Solved
                | SolverStatus::AlmostSolved
                | SolverStatus::PrimalInfeasible
                | SolverStatus::AlmostPrimalInfeasible => SolveStatus::InfeasibleWithinBudget,
                _ => SolveStatus::BudgetExhausted,
            }
        };
        log::debug!(
            "solve: {} scalars, {} constraints, status {status:?}, t* = {margin:.3e}, {iterations} iterations",
            nv,
            self.constraints.len()
        );
        SolveOutcome {
            status: status_out,
            values: Some(values),
            margin,
            verification: Some(report),
            iterations,
            wall_time: start.elapsed(),
            solver_status: format!("{status:?}"),
        }
    }

    /// The same constraints with every variable pinned at `values`.
    pub fn fix_all(&self, values: &[f64]) -> Result<LmiProblem> {
        if values.len() != self.variable_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} variables",
                values.len(),
                self.variable_count()
            )));
        }
        compile(Arc::new(Fixed {
            inner: self.family.clone(),
            values: values.to_vec(),
            vars: VariableMap::new(),
        }))
    }
}

#[derive(Debug)]
struct Fixed {
    inner: Arc<dyn LmiFamily>,
    values: Vec<f64>,
    vars: VariableMap,
}

impl LmiFamily for Fixed {
    fn variables(&self) -> &VariableMap {
        &self.vars
    }

    fn evaluate(&self, _x: &[f64]) -> Result<Vec<ConstraintValue>> {
        self.inner.evaluate(&self.values)
    }
}
