//! Generalized Persidskii systems, stability queries and admissibility checks.

pub mod family;
pub mod json;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use family::{
    BoundSet, CustomFn, NonlinearityFamily, ScalarNonlinearity, SectorIntegralBounds, Table, UnitBounds,
};

/// One term `A_j F_j(H_j x)`.
#[derive(Clone, Debug)]
pub struct NonlinearBlock {
    /// `n × k`
    pub a: DMatrix<f64>,
    /// `k × n`
    pub h: DMatrix<f64>,
    pub family: NonlinearityFamily,
}

/// `ẋ = A₀x + Σ A_j F_j(H_j x) + u`, `y = Cx`.
#[derive(Clone, Debug)]
pub struct PersidskiiSystem {
    pub a0: DMatrix<f64>,
    pub blocks: Vec<NonlinearBlock>,
    pub c: DMatrix<f64>,
}

impl PersidskiiSystem {
    pub fn new(a0: DMatrix<f64>, blocks: Vec<NonlinearBlock>, c: DMatrix<f64>) -> Self {
        Self { a0, blocks, c }
    }

    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.family.width()).collect()
    }

    pub fn total_width(&self) -> usize {
        self.widths().iter().sum()
    }

    pub fn families(&self) -> Vec<&NonlinearityFamily> {
        self.blocks.iter().map(|b| &b.family).collect()
    }

    pub fn h_mats(&self) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.h.clone()).collect()
    }

    /// `H_j x` for every block.
    pub fn arguments(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        self.blocks.iter().map(|b| &b.h * x).collect()
    }

    /// `F_j(H_j x)` for every block.
    pub fn nonlinear_terms(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        self.blocks.iter().map(|b| b.family.apply(&(&b.h * x))).collect()
    }

    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = &self.a0 * x + u;
        for b in &self.blocks {
            dx += &b.a * b.family.apply(&(&b.h * x));
        }
        dx
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    /// The same system with its blocks listed in `perm` order.
    pub fn reordered(&self, perm: &[usize]) -> Self {
        Self {
            a0: self.a0.clone(),
            blocks: perm.iter().map(|&i| self.blocks[i].clone()).collect(),
            c: self.c.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    #[serde(rename = "ASTS")]
    Asts,
    #[serde(rename = "STBNZ")]
    Stbnz,
    #[serde(rename = "AS")]
    As,
    #[serde(rename = "oAS")]
    Oas,
}

impl QueryKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Asts => "ASTS",
            Self::Stbnz => "STBNZ",
            Self::As => "AS",
            Self::Oas => "oAS",
        }
    }

    /// Whether the property must hold on all of `[0, T]`.
    pub fn is_interval(&self) -> bool {
        matches!(self, Self::Asts | Self::Stbnz)
    }

    pub fn has_lower_side(&self) -> bool {
        !matches!(self, Self::Stbnz)
    }
}

/// What a simulated trajectory is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorMode {
    IntervalAnnulus,
    IntervalBall,
    TerminalAnnulus,
    TerminalOutputAnnulus,
}

/// Annular stability question over the horizon `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityQuery {
    pub kind: QueryKind,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub eps1: f64,
    pub eps2: f64,
    #[serde(default)]
    pub delta1: f64,
    pub delta2: f64,
    pub gamma0: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("horizon T must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("radii must satisfy 0 <= eps1 < eps2 and 0 <= delta1 < delta2")]
    Radii,
    #[error("input bound gamma0 must be non-negative and finite")]
    InputBound,
    #[error("query violates (ε₁,ε₂) ⊆ (δ₁,δ₂)")]
    Inclusion,
    #[error("STBNZ queries require eps1 = delta1 = 0")]
    InnerRadius,
}

impl StabilityQuery {
    pub fn new(kind: QueryKind, horizon: f64, eps: (f64, f64), delta: (f64, f64), gamma0: f64) -> Self {
        Self { kind, horizon, eps1: eps.0, eps2: eps.1, delta1: delta.0, delta2: delta.1, gamma0 }
    }

    /// Ball-to-ball query: `ε₁ = δ₁ = 0`.
    pub fn stbnz(horizon: f64, eps2: f64, delta2: f64, gamma0: f64) -> Self {
        Self::new(QueryKind::Stbnz, horizon, (0.0, eps2), (0.0, delta2), gamma0)
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(QueryError::Horizon(self.horizon));
        }
        let r = [self.eps1, self.eps2, self.delta1, self.delta2];
        if r.iter().any(|v| !v.is_finite())
            || self.eps1 < 0.0
            || self.delta1 < 0.0
            || self.eps1 >= self.eps2
            || self.delta1 >= self.delta2
        {
            return Err(QueryError::Radii);
        }
        if !(self.gamma0.is_finite() && self.gamma0 >= 0.0) {
            return Err(QueryError::InputBound);
        }
        match self.kind {
            QueryKind::Asts if self.delta1 > self.eps1 || self.eps2 > self.delta2 => Err(QueryError::Inclusion),
            QueryKind::Stbnz if self.eps1 != 0.0 || self.delta1 != 0.0 => Err(QueryError::InnerRadius),
            _ => Ok(()),
        }
    }

    pub fn monitor_mode(&self) -> MonitorMode {
        match self.kind {
            QueryKind::Asts => MonitorMode::IntervalAnnulus,
            QueryKind::Stbnz => MonitorMode::IntervalBall,
            QueryKind::As => MonitorMode::TerminalAnnulus,
            QueryKind::Oas => MonitorMode::TerminalOutputAnnulus,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    Dimension { what: String },
    NonFinite { what: String },
    SectorViolation { block: usize, component: usize, nu: f64, value: f64 },
    RelaxedSector { block: usize, component: usize },
    BoundViolation { block: usize, component: usize, nu: f64 },
    UnverifiedFamily { block: usize, component: usize },
}

/// Findings of [`validate_system`]; no errors means the system is admissible.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Probe points for the sector and bound checks: a few fixed points then a
/// 1000-point grid over `[-10, 10]`.
pub fn sector_probe_points() -> Vec<f64> {
    let mut pts = vec![1.0, -1.0, 1e-3, -1e-3, 10.0, -10.0];
    pts.extend((0..1000).map(|i| -10.0 + 20.0 * i as f64 / 999.0));
    pts
}

/// Dimension, finiteness, sector and bound checks.
pub fn validate_system(sys: &PersidskiiSystem) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let n = sys.n();
    let dim = |rep: &mut ValidationReport, what: String| rep.errors.push(ValidationIssue::Dimension { what });
    if sys.a0.ncols() != n {
        dim(&mut rep, format!("A0 is {}x{}, expected square", sys.a0.nrows(), sys.a0.ncols()));
    }
    if sys.c.ncols() != n {
        dim(&mut rep, format!("C has {} columns, expected {n}", sys.c.ncols()));
    }
    let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
    if !finite(&sys.a0) || !finite(&sys.c) {
        rep.errors.push(ValidationIssue::NonFinite { what: "A0/C".into() });
    }
    let probes = sector_probe_points();
    for (j, b) in sys.blocks.iter().enumerate() {
        let k = b.family.width();
        if k == 0 {
            dim(&mut rep, format!("block {j} has zero width"));
        }
        if b.a.nrows() != n || b.a.ncols() != k {
            dim(&mut rep, format!("A{} is {}x{}, expected {n}x{k}", j + 1, b.a.nrows(), b.a.ncols()));
        }
        if b.h.nrows() != k || b.h.ncols() != n {
            dim(&mut rep, format!("H{} is {}x{}, expected {k}x{n}", j + 1, b.h.nrows(), b.h.ncols()));
        }
        if b.family.unit_bounds.len() != k {
            dim(&mut rep, format!("block {j} has {} bound records for {k} components", b.family.unit_bounds.len()));
        }
        if !finite(&b.a) || !finite(&b.h) {
            rep.errors.push(ValidationIssue::NonFinite { what: format!("A{0}/H{0}", j + 1) });
        }
        for (i, f) in b.family.components.iter().enumerate() {
            if let Some(&nu) = probes.iter().find(|&&nu| {
                let prod = nu * f.value(nu);
                if b.family.relaxed_sector {
                    !(prod >= 0.0)
                } else {
                    !(prod > 0.0)
                }
            }) {
                rep.errors.push(ValidationIssue::SectorViolation {
                    block: j,
                    component: i,
                    nu,
                    value: f.value(nu),
                });
            } else if b.family.relaxed_sector && probes.iter().any(|&nu| nu * f.value(nu) == 0.0) {
                rep.warnings.push(ValidationIssue::RelaxedSector { block: j, component: i });
            }
            if let Some(ub) = b.family.unit_bounds.get(i) {
                if let Some(&nu) = probes.iter().find(|&&nu| {
                    let v = f.value(nu);
                    let mid = 2.0 * f.integral(nu);
                    let slack = 1e-9 * (1.0 + mid.abs());
                    ub.lower(nu, v) > mid + slack || mid > ub.upper(nu, v) + slack
                }) {
                    rep.errors.push(ValidationIssue::BoundViolation { block: j, component: i, nu });
                }
            }
            if !f.analytically_verified() {
                rep.warnings.push(ValidationIssue::UnverifiedFamily { block: j, component: i });
            }
        }
    }
    rep
}

/// Block counts and the ordering that lists radially unbounded blocks first,
/// then blocks with unbounded antiderivatives, then the rest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub c: usize,
    pub mu: usize,
    pub permutation: Vec<usize>,
    pub radially_unbounded: Vec<bool>,
    pub integral_unbounded: Vec<bool>,
}

impl Classification {
    /// Original indices of the blocks with unbounded antiderivatives.
    pub fn integral_unbounded_blocks(&self) -> Vec<usize> {
        (0..self.integral_unbounded.len()).filter(|&j| self.integral_unbounded[j]).collect()
    }
}

pub fn classify_nonlinearities(sys: &PersidskiiSystem) -> Classification {
    let radially_unbounded: Vec<bool> = sys.blocks.iter().map(|b| b.family.radially_unbounded()).collect();
    let integral_unbounded: Vec<bool> = sys
        .blocks
        .iter()
        .map(|b| b.family.radially_unbounded() || b.family.integral_unbounded())
        .collect();
    let rank = |j: usize| {
        if radially_unbounded[j] {
            0
        } else if integral_unbounded[j] {
            1
        } else {
            2
        }
    };
    let mut permutation: Vec<usize> = (0..sys.m()).collect();
    permutation.sort_by_key(|&j| rank(j));
    Classification {
        c: radially_unbounded.iter().filter(|v| **v).count(),
        mu: integral_unbounded.iter().filter(|v| **v).count(),
        permutation,
        radially_unbounded,
        integral_unbounded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_system(f: ScalarNonlinearity) -> PersidskiiSystem {
        let fam = NonlinearityFamily {
            unit_bounds: vec![f.default_unit_bounds().unwrap_or_default()],
            components: vec![f],
            relaxed_sector: false,
        };
        PersidskiiSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            vec![NonlinearBlock { a: DMatrix::from_element(1, 1, -1.0), h: DMatrix::identity(1, 1), family: fam }],
            DMatrix::identity(1, 1),
        )
    }

    #[test]
    fn tanh_scalar_is_admissible() {
        let rep = validate_system(&scalar_system(ScalarNonlinearity::Tanh));
        assert!(rep.is_admissible(), "{rep:?}");
    }

    #[test]
    fn negated_identity_violates_sector_at_one() {
        let rep = validate_system(&scalar_system(ScalarNonlinearity::OddPolynomial(vec![-1.0])));
        match &rep.errors[0] {
            ValidationIssue::SectorViolation { block, component, nu, value } => {
                assert_eq!((*block, *component), (0, 0));
                assert_eq!(*nu, 1.0);
                assert_eq!(*value, -1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relu_needs_relaxed_flag() {
        let rep = validate_system(&scalar_system(ScalarNonlinearity::Relu));
        assert!(!rep.is_admissible());
        let mut sys = scalar_system(ScalarNonlinearity::Relu);
        sys.blocks[0].family.relaxed_sector = true;
        let rep = validate_system(&sys);
        assert!(rep.is_admissible());
        assert!(rep.warnings.iter().any(|w| matches!(w, ValidationIssue::RelaxedSector { .. })));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut sys = scalar_system(ScalarNonlinearity::Tanh);
        sys.blocks[0].h = DMatrix::zeros(1, 2);
        assert!(validate_system(&sys)
            .errors
            .iter()
            .any(|e| matches!(e, ValidationIssue::Dimension { .. })));
    }

    #[test]
    fn classification_puts_cubic_first() {
        let tanh = NonlinearBlock {
            a: DMatrix::from_element(1, 1, -1.0),
            h: DMatrix::identity(1, 1),
            family: NonlinearityFamily::tanh(1),
        };
        let cubic = NonlinearBlock {
            family: NonlinearityFamily::uniform(ScalarNonlinearity::OddPolynomial(vec![0.0, 1.0]), 1).unwrap(),
            ..tanh.clone()
        };
        let sys = PersidskiiSystem::new(DMatrix::from_element(1, 1, -1.0), vec![tanh, cubic], DMatrix::identity(1, 1));
        let cl = classify_nonlinearities(&sys);
        assert_eq!((cl.c, cl.mu), (1, 2));
        assert_eq!(cl.permutation, vec![1, 0]);
    }

    #[test]
    fn query_validation() {
        let q = StabilityQuery::new(QueryKind::Asts, 1.0, (1.0, 2.0), (1.5, 3.0), 1.0);
        assert_eq!(q.validate(), Err(QueryError::Inclusion));
        assert_eq!(q.validate().unwrap_err().to_string(), "query violates (ε₁,ε₂) ⊆ (δ₁,δ₂)");
        assert!(StabilityQuery::stbnz(1.0, 1.0, 2.0, 1.0).validate().is_ok());
        let bad = StabilityQuery { eps1: 0.1, ..StabilityQuery::stbnz(1.0, 1.0, 2.0, 1.0) };
        assert_eq!(bad.validate(), Err(QueryError::InnerRadius));
        let bad_t = StabilityQuery { horizon: 0.0, ..StabilityQuery::stbnz(1.0, 1.0, 2.0, 1.0) };
        assert!(bad_t.validate().is_err());
    }
}
