//! Decision variables of one side of the certificate and their flat layout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{plainvec, rowmajor};
use crate::model::{BoundSet, PersidskiiSystem, SectorIntegralBounds};

use super::Side;

/// `P = P₁ + CᵀP₂C` split used for output queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSplit {
    #[serde(with = "rowmajor")]
    pub p1: DMatrix<f64>,
    #[serde(with = "rowmajor")]
    pub p2: DMatrix<f64>,
}

/// Diagonal coupling `Υ_{s,z}` between blocks `s < z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpsilonPair {
    pub s: usize,
    pub z: usize,
    #[serde(with = "plainvec")]
    pub diag: DVector<f64>,
}

/// Scalars bounding the class-K functions: `quad_lo·I ⪯ (P or P₂) ⪯ quad_hi·I`
/// and `integral_hi ≥ Λⁱ ∫₀^{‖Hⁱ‖r} f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundAux {
    pub quad_lo: f64,
    pub quad_hi: f64,
    pub integral_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionVars {
    #[serde(with = "rowmajor")]
    pub p: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSplit>,
    #[serde(with = "plainvec::vec")]
    pub lambda: Vec<DVector<f64>>,
    #[serde(with = "plainvec::vec")]
    pub upsilon0: Vec<DVector<f64>>,
    pub upsilon_pairs: Vec<UpsilonPair>,
    #[serde(with = "rowmajor::vec")]
    pub omega: Vec<DMatrix<f64>>,
    #[serde(rename = "Gamma", with = "rowmajor")]
    pub gamma_mat: DMatrix<f64>,
    #[serde(rename = "Psi", with = "rowmajor")]
    pub psi: DMatrix<f64>,
    #[serde(with = "rowmajor")]
    pub xi0: DMatrix<f64>,
    #[serde(with = "rowmajor::vec")]
    pub xi: Vec<DMatrix<f64>>,
    pub gamma: f64,
    pub aux: BoundAux,
}

impl DecisionVars {
    pub fn zeros(sys: &PersidskiiSystem) -> Self {
        let n = sys.n();
        let w = sys.widths();
        let m = w.len();
        let mut pairs = Vec::new();
        for s in 0..m {
            for z in (s + 1)..m {
                pairs.push(UpsilonPair { s, z, diag: DVector::zeros(n) });
            }
        }
        Self {
            p: DMatrix::zeros(n, n),
            output: None,
            lambda: w.iter().map(|&k| DVector::zeros(k)).collect(),
            upsilon0: w.iter().map(|&k| DVector::zeros(k)).collect(),
            upsilon_pairs: pairs,
            omega: w.iter().map(|&k| DMatrix::zeros(n, k)).collect(),
            gamma_mat: DMatrix::zeros(n, n),
            psi: DMatrix::zeros(n, n),
            xi0: DMatrix::zeros(n, n),
            xi: w.iter().map(|&k| DMatrix::zeros(k, k)).collect(),
            gamma: 0.0,
            aux: BoundAux::default(),
        }
    }

    pub fn upsilon_pair(&self, s: usize, z: usize) -> Option<&DVector<f64>> {
        self.upsilon_pairs.iter().find(|u| u.s == s && u.z == z).map(|u| &u.diag)
    }
}

/// How `P` is parametrized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PForm {
    /// Free symmetric `P`.
    Full,
    /// `P = P₁ + CᵀP₂C` with `P₁ ⪰ 0`.
    OutputSplit,
    /// `P = CᵀP₂C`, `Λ = 0`.
    OutputOnly,
}

/// Which coefficient set feeds the branch constraints for a side and `β`.
pub fn branch_set(side: Side, beta: f64) -> BoundSet {
    match (side, beta < 0.0) {
        (Side::Upper, true) => BoundSet::Eta,
        (Side::Upper, false) => BoundSet::Kappa,
        (Side::Lower, true) => BoundSet::Kappa,
        (Side::Lower, false) => BoundSet::Eta,
    }
}

/// Fills the eliminated blocks `Ξ⁰, Ξʲ, Υ_{s,z}` at their branch bound.
pub fn fill_derived(sys: &PersidskiiSystem, side: Side, beta: f64, v: &mut DecisionVars) {
    let bounds = SectorIntegralBounds::generate(&sys.families(), sys.n(), &v.lambda);
    let set = branch_set(side, beta);
    let mut base = v.p.clone();
    for (j, b) in sys.blocks.iter().enumerate() {
        base += b.h.transpose() * DMatrix::from_diagonal(&bounds.c0(set)[j]) * &b.h;
    }
    v.xi0 = base * (-beta);
    for j in 0..sys.m() {
        v.xi[j] = DMatrix::from_diagonal(&(bounds.sum1(set, j) * (-beta)));
    }
    for u in v.upsilon_pairs.iter_mut() {
        u.diag = bounds.sum3(set, u.s, u.z) * (-beta);
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Slot {
    Sym { which: SymTarget, i: usize, j: usize },
    Lambda { j: usize, i: usize },
    Upsilon0 { j: usize, i: usize },
    Omega { j: usize, r: usize, c: usize },
    Gamma,
    QuadLo,
    QuadHi,
    IntegralHi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SymTarget {
    P,
    P1,
    P2,
    GammaMat,
    Psi,
}

/// Flat ordering of the free scalar variables of one side.
#[derive(Clone, Debug, PartialEq)]
pub struct VarLayout {
    slots: Vec<Slot>,
    pub form: PForm,
    pub side: Side,
    pub beta: f64,
}

impl VarLayout {
    pub fn new(sys: &PersidskiiSystem, side: Side, form: PForm, beta: f64) -> Self {
        let n = sys.n();
        let p = sys.p();
        let mut slots = Vec::new();
        let sym = |slots: &mut Vec<Slot>, which: SymTarget, d: usize| {
            for i in 0..d {
                for j in i..d {
                    slots.push(Slot::Sym { which, i, j });
                }
            }
        };
        match form {
            PForm::Full => sym(&mut slots, SymTarget::P, n),
            PForm::OutputSplit => {
                sym(&mut slots, SymTarget::P1, n);
                sym(&mut slots, SymTarget::P2, p);
            }
            PForm::OutputOnly => sym(&mut slots, SymTarget::P2, p),
        }
        let widths = sys.widths();
        if form != PForm::OutputOnly {
            for (j, &k) in widths.iter().enumerate() {
                for i in 0..k {
                    slots.push(Slot::Lambda { j, i });
                }
            }
        }
        for (j, &k) in widths.iter().enumerate() {
            for i in 0..k {
                slots.push(Slot::Upsilon0 { j, i });
            }
        }
        for (j, &k) in widths.iter().enumerate() {
            for r in 0..n {
                for c in 0..k {
                    slots.push(Slot::Omega { j, r, c });
                }
            }
        }
        sym(&mut slots, SymTarget::GammaMat, n);
        sym(&mut slots, SymTarget::Psi, n);
        slots.extend([Slot::Gamma, Slot::QuadLo, Slot::QuadHi, Slot::IntegralHi]);
        Self { slots, form, side, beta }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn name(&self, k: usize) -> String {
        match &self.slots[k] {
            Slot::Sym { which, i, j } => format!("{which:?}[{i},{j}]"),
            Slot::Lambda { j, i } => format!("Lambda{}[{i}]", j + 1),
            Slot::Upsilon0 { j, i } => format!("Upsilon0_{}[{i}]", j + 1),
            Slot::Omega { j, r, c } => format!("Omega{}[{r},{c}]", j + 1),
            Slot::Gamma => "gamma".into(),
            Slot::QuadLo => "quad_lo".into(),
            Slot::QuadHi => "quad_hi".into(),
            Slot::IntegralHi => "integral_hi".into(),
        }
    }

    /// Decision variables from a flat vector, derived blocks included.
    pub fn unpack(&self, sys: &PersidskiiSystem, x: &[f64]) -> DecisionVars {
        let mut v = DecisionVars::zeros(sys);
        let n = sys.n();
        let p = sys.p();
        let mut p1 = DMatrix::zeros(n, n);
        let mut p2 = DMatrix::zeros(p, p);
        for (slot, &val) in self.slots.iter().zip(x) {
            match slot {
                Slot::Sym { which, i, j } => {
                    let m = match which {
                        SymTarget::P => &mut v.p,
                        SymTarget::P1 => &mut p1,
                        SymTarget::P2 => &mut p2,
                        SymTarget::GammaMat => &mut v.gamma_mat,
                        SymTarget::Psi => &mut v.psi,
                    };
                    m[(*i, *j)] = val;
                    m[(*j, *i)] = val;
                }
                Slot::Lambda { j, i } => v.lambda[*j][*i] = val,
                Slot::Upsilon0 { j, i } => v.upsilon0[*j][*i] = val,
                Slot::Omega { j, r, c } => v.omega[*j][(*r, *c)] = val,
                Slot::Gamma => v.gamma = val,
                Slot::QuadLo => v.aux.quad_lo = val,
                Slot::QuadHi => v.aux.quad_hi = val,
                Slot::IntegralHi => v.aux.integral_hi = val,
            }
        }
        match self.form {
            PForm::Full => {}
            PForm::OutputSplit | PForm::OutputOnly => {
                v.p = &p1 + sys.c.transpose() * &p2 * &sys.c;
                v.output = Some(OutputSplit { p1, p2 });
            }
        }
        fill_derived(sys, self.side, self.beta, &mut v);
        v
    }

    /// Inverse of [`unpack`](Self::unpack) on the free variables.
    pub fn pack(&self, v: &DecisionVars) -> Vec<f64> {
        let zero_n = DMatrix::zeros(0, 0);
        let (p1, p2) = match &v.output {
            Some(o) => (&o.p1, &o.p2),
            None => (&zero_n, &zero_n),
        };
        self.slots
            .iter()
            .map(|slot| match slot {
                Slot::Sym { which, i, j } => {
                    let m = match which {
                        SymTarget::P => &v.p,
                        SymTarget::P1 => p1,
                        SymTarget::P2 => p2,
                        SymTarget::GammaMat => &v.gamma_mat,
                        SymTarget::Psi => &v.psi,
                    };
                    m[(*i, *j)]
                }
                Slot::Lambda { j, i } => v.lambda[*j][*i],
                Slot::Upsilon0 { j, i } => v.upsilon0[*j][*i],
                Slot::Omega { j, r, c } => v.omega[*j][(*r, *c)],
                Slot::Gamma => v.gamma,
                Slot::QuadLo => v.aux.quad_lo,
                Slot::QuadHi => v.aux.quad_hi,
                Slot::IntegralHi => v.aux.integral_hi,
            })
            .collect()
    }
}
