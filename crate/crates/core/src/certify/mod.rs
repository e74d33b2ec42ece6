//! Grid search over the scalar parameters and certificate construction.

mod check;

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmi::{
    branch_set, build_problem, solve_feasibility, DecisionVars, Feasibility, FeasibilityEngine, PForm, Side, SideContext,
};
use crate::model::{classify_nonlinearities, validate_system, BoundSet, PersidskiiSystem, QueryError, QueryKind, StabilityQuery, ValidationReport};

pub use check::{alpha_values, check_certificate, CheckItem, CheckReport};

/// `{0} ∪ ±logspace(lo, hi, per_sign)`, ascending.
pub fn beta_grid(lo: f64, hi: f64, per_sign: usize) -> Vec<f64> {
    let pos: Vec<f64> = (0..per_sign)
        .map(|i| {
            let w = if per_sign == 1 { 0.0 } else { i as f64 / (per_sign - 1) as f64 };
            (lo.ln() + w * (hi.ln() - lo.ln())).exp()
        })
        .collect();
    let mut g: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
    g.push(0.0);
    g.extend(pos);
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub beta_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    /// Write the `P` terms through the dynamics instead of through `ẋ`.
    pub remark1: bool,
    /// Required eigenvalue margin of strict inequalities.
    pub psd_margin: f64,
    /// Verification tolerance of non-strict inequalities.
    pub tol: f64,
    /// Wall-clock budget in seconds; cells not started in time are skipped.
    pub time_budget: Option<f64>,
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beta_grid: beta_grid(1e-2, 1e2, 25),
            rho_grid: vec![0.0, 1.0, 10.0],
            remark1: false,
            psd_margin: 1e-7,
            tol: 1e-9,
            time_budget: None,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub side: Side,
    pub beta: f64,
    pub rho: f64,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// One certified side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideCertificate {
    pub side: Side,
    pub beta: f64,
    pub rho: f64,
    pub form: PForm,
    pub vars: DecisionVars,
    /// Class-K value at the starting radius (`ᾱ₂(ε₂)` or `α̲₁(ε₁)`).
    pub alpha_start: f64,
    /// Class-K value at the target radius (`ᾱ₁(δ₂)` or `α̲₂(δ₁)`).
    pub alpha_target: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver: String,
    pub psd_margin: f64,
    pub tol: f64,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema: u32,
    pub query: StabilityQuery,
    pub remark1: bool,
    /// Blocks whose Λ enters the Finsler sum.
    pub finsler_blocks: Vec<usize>,
    pub upper: SideCertificate,
    /// Absent when `δ₁ = 0` or the kind has no lower part.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<SideCertificate>,
    pub provenance: Provenance,
}

impl Certificate {
    pub fn side(&self, side: Side) -> Option<&SideCertificate> {
        match side {
            Side::Upper => Some(&self.upper),
            Side::Lower => self.lower.as_ref(),
        }
    }

    pub fn side_mut(&mut self, side: Side) -> Option<&mut SideCertificate> {
        match side {
            Side::Upper => Some(&mut self.upper),
            Side::Lower => self.lower.as_mut(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertifyOutcome {
    Certified { certificate: Box<Certificate>, trace: Vec<TraceEntry> },
    /// Absence of a certificate; says nothing about whether the property fails.
    NoCertificate { reason: String, trace: Vec<TraceEntry> },
}

impl CertifyOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Self::Certified { certificate, .. } => Some(certificate),
            Self::NoCertificate { .. } => None,
        }
    }

    pub fn trace(&self) -> &[TraceEntry] {
        match self {
            Self::Certified { trace, .. } | Self::NoCertificate { trace, .. } => trace,
        }
    }
}

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("invalid query: {0}")]
    Query(#[from] QueryError),
    #[error("system is not admissible: {0:?}")]
    Inadmissible(ValidationReport),
}

/// Numerical rank of `m` relative to its largest singular value.
fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let top = s.iter().copied().fold(0.0, f64::max);
    s.iter().filter(|v| **v > 1e-10 * top.max(1e-300)).count()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

/// Necessary condition on `β` implied by `quad_lo ≤ quad_hi`.
fn beta_admissible(sys: &PersidskiiSystem, q: &StabilityQuery, side: Side, form: PForm, beta: f64) -> bool {
    let t = q.horizon;
    match side {
        Side::Upper => {
            let gain = if form == PForm::OutputSplit { spectral_norm(&sys.c) } else { 1.0 };
            let start = gain * q.eps2;
            if start == 0.0 {
                return true;
            }
            let ok_t = q.delta2 * q.delta2 >= (beta * t).exp() * start * start;
            ok_t && (!q.kind.is_interval() || q.delta2 >= start)
        }
        Side::Lower => {
            let ok_t = (beta * t).exp() * q.eps1 * q.eps1 >= q.delta1 * q.delta1;
            ok_t && (!q.kind.is_interval() || q.eps1 >= q.delta1)
        }
    }
}

/// A block `j` and a nonzero `v` with `Aⱼv = 0` supported where the
/// `Ξʲ` coefficients of the branch vanish: then `wᵀQw = 0` for
/// `w = [0; 0; v; 0]`, so `Q` cannot be strictly definite.
/// Returns `(block, dimension of that flat subspace)`.
fn flat_f_direction(sys: &PersidskiiSystem, side: Side, beta: f64) -> Option<(usize, usize)> {
    let set = branch_set(side, beta);
    for (j, b) in sys.blocks.iter().enumerate() {
        let cols: Vec<usize> = b
            .family
            .unit_bounds
            .iter()
            .enumerate()
            .filter(|(_, u)| {
                let c = match set {
                    BoundSet::Kappa => u.k1,
                    BoundSet::Eta => u.e1,
                };
                beta == 0.0 || c == 0.0
            })
            .map(|(i, _)| i)
            .collect();
        if cols.is_empty() {
            continue;
        }
        let sub = b.a.select_columns(&cols);
        let dim = cols.len() - rank(&sub);
        if dim > 0 {
            return Some((j, dim));
        }
    }
    None
}

struct SideResult {
    best: Option<SideCertificate>,
    trace: Vec<TraceEntry>,
}

fn search_side(
    sys: &PersidskiiSystem,
    q: &StabilityQuery,
    side: Side,
    finsler_blocks: &[usize],
    cfg: &SearchConfig,
    engine: &dyn FeasibilityEngine,
    start: Instant,
) -> SideResult {
    let probe = SideContext::new(sys, *q, side, 0.0, 0.0, cfg.remark1, finsler_blocks.to_vec());
    let form = probe.form;
    let mut cells = Vec::new();
    let mut trace = Vec::new();
    for &beta in &cfg.beta_grid {
        let mut seen_nonneg: Option<f64> = None;
        for &rho in &cfg.rho_grid {
            if !beta_admissible(sys, q, side, form, beta) {
                trace.push(TraceEntry {
                    side,
                    beta,
                    rho,
                    status: "pruned".into(),
                    margin: None,
                    detail: "necessary growth condition fails for this β".into(),
                });
                continue;
            }
            if let Some((j, dim)) = flat_f_direction(sys, side, beta) {
                trace.push(TraceEntry {
                    side,
                    beta,
                    rho,
                    status: "pruned".into(),
                    margin: None,
                    detail: format!(
                        "Q has a zero eigenvalue on a {dim}-dimensional subspace of F-block {}: \
                         A_j v = 0 there and the Ξ coefficients vanish, so the strict sign condition on Q cannot hold",
                        j + 1
                    ),
                });
                continue;
            }
            // with a full P ⪰ quad_lo·I the Finsler condition is implied for ρ ≥ 0
            if form != PForm::OutputSplit && rho >= 0.0 {
                if let Some(r0) = seen_nonneg {
                    trace.push(TraceEntry {
                        side,
                        beta,
                        rho,
                        status: "merged".into(),
                        margin: None,
                        detail: format!("same constraint set as ρ = {r0}"),
                    });
                    continue;
                }
                seen_nonneg = Some(rho);
            }
            cells.push((beta, rho, trace.len()));
            trace.push(TraceEntry { side, beta, rho, status: "pending".into(), margin: None, detail: String::new() });
        }
    }
    let run = |&(beta, rho, _): &(f64, f64, usize)| -> (String, Option<f64>, String, Option<SideCertificate>) {
        if let Some(budget) = cfg.time_budget {
            if start.elapsed().as_secs_f64() > budget {
                return ("skipped".into(), None, "time budget exhausted".into(), None);
            }
        }
        let ctx = SideContext::new(sys, *q, side, beta, rho, cfg.remark1, finsler_blocks.to_vec());
        let (prob, layout) = build_problem(&ctx, cfg.psd_margin);
        match solve_feasibility(&prob, cfg.tol, engine) {
            Ok(Feasibility::Feasible { x, min_margin, .. }) => {
                let vars = layout.unpack(sys, &x);
                let (alpha_start, alpha_target) = alpha_values(sys, q, side, form, &vars);
                let cert = SideCertificate { side, beta, rho, form, vars, alpha_start, alpha_target, margin: min_margin };
                ("feasible".into(), Some(min_margin), String::new(), Some(cert))
            }
            Ok(Feasibility::Infeasible { reason, best_margin }) => ("infeasible".into(), Some(best_margin), reason, None),
            Err(e) => ("error".into(), None, e.to_string(), None),
        }
    };
    let results: Vec<_> = if cfg.parallel { cells.par_iter().map(run).collect() } else { cells.iter().map(run).collect() };
    let mut best: Option<SideCertificate> = None;
    for ((_, _, idx), (status, margin, detail, cert)) in cells.iter().zip(results) {
        trace[*idx].status = status;
        trace[*idx].margin = margin;
        trace[*idx].detail = detail;
        if let Some(c) = cert {
            if best.as_ref().map(|b| c.margin > b.margin).unwrap_or(true) {
                best = Some(c);
            }
        }
    }
    SideResult { best, trace }
}

fn no_cell_reason(side: Side, trace: &[TraceEntry]) -> String {
    let name = match side {
        Side::Upper => "upper",
        Side::Lower => "lower",
    };
    let cells: Vec<&TraceEntry> = trace.iter().filter(|e| e.side == side).collect();
    if !cells.is_empty() && cells.iter().all(|e| e.status == "pruned") {
        if let Some(e) = cells.iter().find(|e| e.detail.starts_with("Q has a zero eigenvalue")) {
            return format!("every {name}-side cell is excluded: {}", e.detail);
        }
        return format!("every β on the grid fails the necessary growth condition of the {name} side");
    }
    format!("no feasible cell for the {name} side on the search grid")
}

/// Searches for a certificate of `query`.
pub fn certify(
    sys: &PersidskiiSystem,
    query: &StabilityQuery,
    cfg: &SearchConfig,
    engine: &dyn FeasibilityEngine,
) -> Result<CertifyOutcome, CertifyError> {
    query.validate()?;
    let rep = validate_system(sys);
    if !rep.is_admissible() {
        return Err(CertifyError::Inadmissible(rep));
    }
    let start = Instant::now();
    let finsler_blocks = classify_nonlinearities(sys).integral_unbounded_blocks();
    let mut trace = Vec::new();
    let needs_lower = query.kind.has_lower_side() && query.delta1 > 0.0;
    let mut lower = None;
    if needs_lower {
        if query.kind == QueryKind::Oas && rank(&sys.c) < sys.n() {
            return Ok(CertifyOutcome::NoCertificate {
                reason: format!(
                    "the lower output bound needs V = (Cx)ᵀP₂(Cx) to dominate a positive-definite quadratic in x; \
                     rank C = {} < n = {}, so no such certificate exists",
                    rank(&sys.c),
                    sys.n()
                ),
                trace,
            });
        }
        let r = search_side(sys, query, Side::Lower, &finsler_blocks, cfg, engine, start);
        trace.extend(r.trace);
        match r.best {
            Some(c) => lower = Some(c),
            None => return Ok(CertifyOutcome::NoCertificate { reason: no_cell_reason(Side::Lower, &trace), trace }),
        }
    }
    let r = search_side(sys, query, Side::Upper, &finsler_blocks, cfg, engine, start);
    trace.extend(r.trace);
    let Some(upper) = r.best else {
        return Ok(CertifyOutcome::NoCertificate { reason: no_cell_reason(Side::Upper, &trace), trace });
    };
    let cert = Certificate {
        schema: 1,
        query: *query,
        remark1: cfg.remark1,
        finsler_blocks,
        upper,
        lower,
        provenance: Provenance {
            solver: engine.name(),
            psd_margin: cfg.psd_margin,
            tol: cfg.tol,
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    };
    let report = check_certificate(sys, query, &cert);
    if !report.passed {
        return Ok(CertifyOutcome::NoCertificate {
            reason: format!("candidate failed the independent check: {}", report.failures().join("; ")),
            trace,
        });
    }
    Ok(CertifyOutcome::Certified { certificate: Box::new(cert), trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = beta_grid(1e-2, 1e2, 25);
        assert_eq!(g.len(), 51);
        assert_eq!(g[25], 0.0);
        assert!((g[26] - 1e-2).abs() < 1e-15);
        assert!((g[50] - 1e2).abs() < 1e-9);
        assert!((g[0] + 1e2).abs() < 1e-9);
    }

    #[test]
    fn rank_of_output_row() {
        assert_eq!(rank(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])), 1);
        assert_eq!(rank(&DMatrix::identity(2, 2)), 2);
    }

    fn tanh_system(a1: DMatrix<f64>, h: DMatrix<f64>) -> PersidskiiSystem {
        let k = a1.ncols();
        let family = crate::model::NonlinearityFamily::new(vec![crate::model::ScalarNonlinearity::Tanh; k]).unwrap();
        PersidskiiSystem::new(
            DMatrix::from_diagonal_element(1, 1, -2.0),
            vec![crate::model::NonlinearBlock { a: a1, h, family }],
            DMatrix::identity(1, 1),
        )
    }

    #[test]
    fn wide_block_has_flat_direction() {
        let square = tanh_system(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(flat_f_direction(&square, Side::Upper, 0.5), None);
        let wide = tanh_system(DMatrix::from_row_slice(1, 3, &[1.0, -0.5, 0.2]), DMatrix::from_element(3, 1, 0.3));
        assert_eq!(flat_f_direction(&wide, Side::Upper, -1.0), Some((0, 2)));
        assert_eq!(flat_f_direction(&wide, Side::Lower, 0.0), Some((0, 2)));
        let q = StabilityQuery::stbnz(1.0, 0.1, 1.0, 0.1);
        match certify(&wide, &q, &SearchConfig::default(), &crate::lmi::HkmEngine::default()).unwrap() {
            CertifyOutcome::NoCertificate { reason, .. } => assert!(reason.contains("zero eigenvalue"), "{reason}"),
            _ => panic!("wide block certified"),
        }
    }
}
