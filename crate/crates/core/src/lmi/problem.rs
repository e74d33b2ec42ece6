//! Affine conic feasibility problems and the engine interface.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::jacobi_eigenvalues;

use super::constraints::{Role, SideContext, Value};
use super::vars::VarLayout;

/// `constant + Σ xᵢ Fᵢ`; each `Fᵢ` is stored by its upper-triangle entries.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrix {
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl AffineMatrix {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, entries) in &self.terms {
            let xi = x[*i];
            if xi == 0.0 {
                continue;
            }
            for &(r, c, v) in entries {
                m[(r, c)] += xi * v;
                if r != c {
                    m[(c, r)] += xi * v;
                }
            }
        }
        m
    }

    pub fn negated(&self) -> Self {
        Self {
            constant: -&self.constant,
            terms: self
                .terms
                .iter()
                .map(|(i, e)| (*i, e.iter().map(|&(r, c, v)| (r, c, -v)).collect()))
                .collect(),
        }
    }
}

/// `constant + Σ xᵢ cᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineScalar {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineScalar {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(i, c)| c * x[*i]).sum::<f64>()
    }
}

/// `expr(x) ⪰ margin · I`; `weight > 0` makes it part of the maximized margin.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixConstraint {
    pub name: String,
    pub expr: AffineMatrix,
    pub margin: f64,
    pub weight: f64,
}

/// `expr(x) ≥ margin`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarConstraint {
    pub name: String,
    pub expr: AffineScalar,
    pub margin: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProblem {
    pub var_names: Vec<String>,
    pub matrices: Vec<MatrixConstraint>,
    pub scalars: Vec<ScalarConstraint>,
    /// Box `|xᵢ| ≤ variable_bound` keeping the search compact.
    pub variable_bound: f64,
}

impl ConicProblem {
    pub fn new(var_names: Vec<String>) -> Self {
        Self { var_names, matrices: Vec::new(), scalars: Vec::new(), variable_bound: 1e4 }
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    /// `expr ⪰ margin·I`.
    pub fn add_psd(&mut self, name: &str, expr: AffineMatrix, margin: f64, weight: f64) {
        self.matrices.push(MatrixConstraint { name: name.into(), expr, margin, weight });
    }

    /// `expr ⪯ -margin·I`.
    pub fn add_nsd(&mut self, name: &str, expr: AffineMatrix, margin: f64, weight: f64) {
        self.add_psd(name, expr.negated(), margin, weight);
    }

    /// `expr ≥ margin`.
    pub fn add_scalar(&mut self, name: &str, expr: AffineScalar, margin: f64, weight: f64) {
        self.scalars.push(ScalarConstraint { name: name.into(), expr, margin, weight });
    }

    /// Signed margins `λmin(expr) - margin` (Jacobi eigenvalues), matrices first.
    pub fn margins(&self, x: &[f64]) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        for c in &self.matrices {
            let l = jacobi_eigenvalues(&c.expr.eval(x)).first().copied().unwrap_or(f64::INFINITY);
            out.push((c.name.clone(), l - c.margin, c.weight));
        }
        for c in &self.scalars {
            out.push((c.name.clone(), c.expr.eval(x) - c.margin, c.weight));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("problem is malformed: {0}")]
    Malformed(String),
}

/// Raw answer of an engine: its best point for `max t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineOutcome {
    pub x: Vec<f64>,
    pub t: f64,
    /// Valid upper bound on the optimal common margin, when the engine has one.
    pub upper_bound: Option<f64>,
    pub iterations: usize,
    pub status: String,
}

/// Backend maximizing the common margin `t` of a [`ConicProblem`].
pub trait FeasibilityEngine: Send + Sync {
    fn name(&self) -> String;
    fn solve(&self, problem: &ConicProblem) -> Result<EngineOutcome, SolverError>;
}

/// Engine that returns a preset answer.
#[derive(Clone, Debug)]
pub enum MockEngine {
    Point(Vec<f64>),
    Fail(String),
}

impl FeasibilityEngine for MockEngine {
    fn name(&self) -> String {
        "mock".into()
    }

    fn solve(&self, problem: &ConicProblem) -> Result<EngineOutcome, SolverError> {
        match self {
            Self::Point(x) => {
                let mut x = x.clone();
                x.resize(problem.n_vars(), 0.0);
                Ok(EngineOutcome { x, t: 0.0, upper_bound: None, iterations: 0, status: "mock".into() })
            }
            Self::Fail(msg) => Err(SolverError::Numerical(msg.clone())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible {
        x: Vec<f64>,
        /// Smallest weighted margin, used to rank feasible points.
        min_margin: f64,
        margins: Vec<(String, f64)>,
    },
    Infeasible {
        reason: String,
        best_margin: f64,
    },
}

/// Runs `engine` and re-verifies its point with independent eigenvalues.
///
/// Feasible only if every constraint margin is at least `-tol`.
pub fn solve_feasibility(
    problem: &ConicProblem,
    tol: f64,
    engine: &dyn FeasibilityEngine,
) -> Result<Feasibility, SolverError> {
    for c in &problem.matrices {
        if c.expr.constant.nrows() != c.expr.constant.ncols() {
            return Err(SolverError::Malformed(format!("{} is not square", c.name)));
        }
    }
    let out = engine.solve(problem)?;
    if out.x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Numerical(format!("{} returned non-finite values", engine.name())));
    }
    let margins = problem.margins(&out.x);
    let worst = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let ranked = margins
        .iter()
        .filter(|m| m.2 > 0.0)
        .map(|m| m.1 / m.2)
        .fold(f64::INFINITY, f64::min);
    if worst >= -tol {
        Ok(Feasibility::Feasible {
            x: out.x,
            min_margin: if ranked.is_finite() { ranked } else { worst },
            margins: margins.into_iter().map(|m| (m.0, m.1)).collect(),
        })
    } else {
        let which = margins
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|m| m.0.clone())
            .unwrap_or_default();
        let bound = out.upper_bound.map(|b| format!(", margin upper bound {b:.3e}")).unwrap_or_default();
        Ok(Feasibility::Infeasible {
            reason: format!(
                "{} ({}, {} iterations): best point violates {which} by {:.3e}{bound}",
                engine.name(),
                out.status,
                out.iterations,
                -worst
            ),
            best_margin: worst,
        })
    }
}

/// Builds the conic problem of one side by probing the constraint functions
/// at the origin and at unit vectors of the flat layout.
pub fn build_problem(ctx: &SideContext, psd_margin: f64) -> (ConicProblem, VarLayout) {
    let layout = VarLayout::new(ctx.sys, ctx.side, ctx.form, ctx.beta);
    let nv = layout.len();
    let cons: Vec<_> = ctx.constraints().into_iter().filter(|c| c.role != Role::Derived).collect();
    let mut x = vec![0.0; nv];
    let eval_all = |x: &[f64]| -> Vec<Value> {
        let v = layout.unpack(ctx.sys, x);
        cons.iter().map(|c| ctx.eval(c.expr, &v)).collect()
    };
    let base = eval_all(&x);
    let mut mat_terms: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); cons.len()];
    let mut sca_terms: Vec<Vec<Vec<(usize, f64)>>> = base
        .iter()
        .map(|v| match v {
            Value::Scalars(s) => vec![Vec::new(); s.len()],
            Value::Matrix(_) => Vec::new(),
        })
        .collect();
    for i in 0..nv {
        x[i] = 1.0;
        let probe = eval_all(&x);
        x[i] = 0.0;
        for (k, (p, b)) in probe.iter().zip(&base).enumerate() {
            match (p, b) {
                (Value::Matrix(pm), Value::Matrix(bm)) => {
                    let scale = 1e-13 * (1.0 + crate::linalg::max_abs(bm).max(crate::linalg::max_abs(pm)));
                    let mut entries = Vec::new();
                    for c in 0..pm.ncols() {
                        for r in 0..=c {
                            let d = pm[(r, c)] - bm[(r, c)];
                            if d.abs() > scale {
                                entries.push((r, c, d));
                            }
                        }
                    }
                    if !entries.is_empty() {
                        mat_terms[k].push((i, entries));
                    }
                }
                (Value::Scalars(ps), Value::Scalars(bs)) => {
                    for r in 0..ps.len() {
                        let d = ps[r] - bs[r];
                        if d.abs() > 1e-13 * (1.0 + ps[r].abs().max(bs[r].abs())) {
                            sca_terms[k][r].push((i, d));
                        }
                    }
                }
                _ => unreachable!("constraint changed shape"),
            }
        }
    }
    let mut prob = ConicProblem::new((0..nv).map(|i| layout.name(i)).collect());
    for (k, c) in cons.iter().enumerate() {
        let (margin, weight) = match c.role {
            Role::Margin => (psd_margin, 1.0),
            _ => (0.0, 0.0),
        };
        match &base[k] {
            Value::Matrix(bm) => {
                let terms = std::mem::take(&mut mat_terms[k]);
                prob.add_psd(&c.name, AffineMatrix { constant: bm.clone(), terms }, margin, weight);
            }
            Value::Scalars(bs) => {
                for r in 0..bs.len() {
                    let terms = std::mem::take(&mut sca_terms[k][r]);
                    let mut expr = AffineScalar { constant: bs[r], terms };
                    if c.role == Role::Margin {
                        let s = expr.terms.iter().map(|t| t.1.abs()).fold(expr.constant.abs(), f64::max);
                        if s > 0.0 {
                            expr.constant /= s;
                            expr.terms.iter_mut().for_each(|t| t.1 /= s);
                        }
                    }
                    let name = if bs.len() > 1 { format!("{}[{r}]", c.name) } else { c.name.clone() };
                    prob.add_scalar(&name, expr, margin, weight);
                }
            }
        }
    }
    (prob, layout)
}
