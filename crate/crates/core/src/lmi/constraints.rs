//! The constraint set of one side, as numeric functions of the decision variables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{PersidskiiSystem, QueryKind, SectorIntegralBounds, StabilityQuery};

use super::vars::{branch_set, PForm};
use super::{assemble_q, phi, DecisionVars, Side};

/// Role of a constraint in the feasibility search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Strict inequality; enters the common margin that is maximized.
    Margin,
    /// Non-strict inequality.
    Plain,
    /// Holds by construction of the derived blocks; only re-checked.
    Derived,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    QSign,
    Finsler,
    PLower,
    P1Psd,
    PUpper,
    QuadLoPositive,
    Normalization,
    LambdaNonneg,
    IntegralAux,
    IntegralNonneg,
    Upsilon0Branch,
    GammaPositive,
    GammaTerminal,
    GammaInitial,
    Xi0Branch,
    XiBranch,
    UpsilonPairBranch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub role: Role,
    pub expr: Expr,
}

/// Value of a constraint in `⪰ 0` form.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Matrix(DMatrix<f64>),
    /// Elementwise `≥ 0`.
    Scalars(DVector<f64>),
}

/// Everything that fixes the constraint set of one side.
#[derive(Clone, Debug)]
pub struct SideContext<'a> {
    pub sys: &'a PersidskiiSystem,
    pub query: StabilityQuery,
    pub side: Side,
    pub beta: f64,
    pub rho: f64,
    pub remark1: bool,
    pub form: PForm,
    /// Blocks entering the Finsler sum.
    pub finsler_blocks: Vec<usize>,
}

impl<'a> SideContext<'a> {
    pub fn new(
        sys: &'a PersidskiiSystem,
        query: StabilityQuery,
        side: Side,
        beta: f64,
        rho: f64,
        remark1: bool,
        finsler_blocks: Vec<usize>,
    ) -> Self {
        let form = match (query.kind, side) {
            (QueryKind::Oas, Side::Upper) => PForm::OutputSplit,
            (QueryKind::Oas, Side::Lower) => PForm::OutputOnly,
            _ => PForm::Full,
        };
        Self { sys, query, side, beta, rho, remark1, form, finsler_blocks }
    }

    /// Radius at which the integral part of the upper class-K bound is needed.
    pub fn integral_radius(&self) -> f64 {
        match self.side {
            Side::Upper => self.query.eps2,
            Side::Lower => self.query.delta1,
        }
    }

    /// `max(∫₀^{gr} f, ∫₀^{-gr} f)` per block and component.
    pub fn integral_constants(&self) -> Vec<DVector<f64>> {
        let r = self.integral_radius();
        self.sys
            .blocks
            .iter()
            .map(|b| {
                DVector::from_fn(b.family.width(), |i, _| {
                    let g = b.h.row(i).norm() * r;
                    let f = &b.family.components[i];
                    f.integral(g).max(f.integral(-g))
                })
            })
            .collect()
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        use Expr::*;
        use Role::*;
        let mut out = vec![
            (QSign, Margin, match self.side {
                Side::Upper => "Q ⪯ 0",
                Side::Lower => "Q ⪰ 0",
            }),
            (Finsler, Margin, "P + ρΣHᵀΛH ≻ 0"),
            (PLower, Plain, "P ⪰ quad_lo·I"),
            (PUpper, Plain, "P ⪯ quad_hi·I"),
            (QuadLoPositive, Margin, "quad_lo > 0"),
            (Normalization, Plain, "quad_hi ≤ 1"),
            (IntegralAux, Plain, "integral_hi ≥ Λⁱ∫f"),
            (IntegralNonneg, Plain, "integral_hi ≥ 0"),
            (Upsilon0Branch, Plain, "Υ₀ branch bound"),
            (GammaPositive, Margin, "γ > 0"),
            (GammaTerminal, Margin, "γ condition at t = T"),
            (Xi0Branch, Derived, "Ξ⁰ branch bound"),
            (XiBranch, Derived, "Ξʲ branch bound"),
            (UpsilonPairBranch, Derived, "Υ_{s,z} branch bound"),
        ];
        if self.form == PForm::OutputSplit {
            out.push((P1Psd, Plain, "P₁ ⪰ 0"));
        }
        if self.form != PForm::OutputOnly {
            out.push((LambdaNonneg, Plain, "Λ ⪰ 0"));
        }
        if self.query.kind.is_interval() {
            out.push((GammaInitial, Margin, "γ condition at t = 0"));
        }
        out.into_iter()
            .map(|(expr, role, name)| Constraint { name: name.to_string(), role, expr })
            .collect()
    }

    fn k_total(&self) -> f64 {
        self.sys.total_width() as f64
    }

    /// Linear lower/upper bounds of the class-K values used by the γ condition:
    /// `(α at the start radius, α at the target radius)` per side.
    pub fn alpha_linear(&self, v: &DecisionVars) -> (f64, f64) {
        let q = &self.query;
        let a = &v.aux;
        match self.side {
            Side::Upper => (a.quad_hi * q.eps2 * q.eps2 + 2.0 * self.k_total() * a.integral_hi, a.quad_lo * q.delta2 * q.delta2),
            Side::Lower => {
                let int = if self.form == PForm::OutputOnly { 0.0 } else { 2.0 * self.k_total() * a.integral_hi };
                (a.quad_lo * q.eps1 * q.eps1, a.quad_hi * q.delta1 * q.delta1 + int)
            }
        }
    }

    pub fn eval(&self, expr: Expr, v: &DecisionVars) -> Value {
        let sys = self.sys;
        let n = sys.n();
        let q = &self.query;
        let beta = self.beta;
        let set = branch_set(self.side, beta);
        let scalar = |x: f64| Value::Scalars(DVector::from_element(1, x));
        let upper = self.side == Side::Upper;
        match expr {
            Expr::QSign => {
                let m = assemble_q(sys, self.side, v, self.remark1);
                Value::Matrix(if upper { -m } else { m })
            }
            Expr::Finsler => {
                let mut m = v.p.clone();
                for &j in &self.finsler_blocks {
                    let h = &sys.blocks[j].h;
                    m += self.rho * h.transpose() * DMatrix::from_diagonal(&v.lambda[j]) * h;
                }
                Value::Matrix(m)
            }
            Expr::PLower => Value::Matrix(match (self.form, &v.output) {
                (PForm::OutputSplit, Some(o)) => &o.p2 - DMatrix::identity(o.p2.nrows(), o.p2.nrows()) * v.aux.quad_lo,
                _ => &v.p - DMatrix::identity(n, n) * v.aux.quad_lo,
            }),
            Expr::PUpper => Value::Matrix(match (self.form, &v.output) {
                (PForm::OutputOnly, Some(o)) => DMatrix::identity(o.p2.nrows(), o.p2.nrows()) * v.aux.quad_hi - &o.p2,
                _ => DMatrix::identity(n, n) * v.aux.quad_hi - &v.p,
            }),
            Expr::P1Psd => Value::Matrix(v.output.as_ref().map(|o| o.p1.clone()).unwrap_or_else(|| DMatrix::zeros(n, n))),
            Expr::QuadLoPositive => scalar(v.aux.quad_lo),
            Expr::Normalization => scalar(1.0 - v.aux.quad_hi),
            Expr::LambdaNonneg => Value::Scalars(concat(&v.lambda)),
            Expr::IntegralAux => {
                if self.form == PForm::OutputOnly {
                    return Value::Scalars(DVector::zeros(0));
                }
                let c = self.integral_constants();
                let vals: Vec<DVector<f64>> = v
                    .lambda
                    .iter()
                    .zip(&c)
                    .map(|(l, c)| DVector::from_element(l.len(), v.aux.integral_hi) - l.component_mul(c))
                    .collect();
                Value::Scalars(concat(&vals))
            }
            Expr::IntegralNonneg => scalar(v.aux.integral_hi),
            Expr::Upsilon0Branch => {
                let b = SectorIntegralBounds::generate(&sys.families(), n, &v.lambda);
                let vals: Vec<DVector<f64>> = (0..sys.m())
                    .map(|j| {
                        let d = &v.upsilon0[j] + b.sum2(set, j) * beta;
                        if upper {
                            d
                        } else {
                            -d
                        }
                    })
                    .collect();
                Value::Scalars(concat(&vals))
            }
            Expr::GammaPositive => scalar(v.gamma),
            Expr::GammaTerminal | Expr::GammaInitial => {
                let (start, target) = self.alpha_linear(v);
                let t = if expr == Expr::GammaTerminal { q.horizon } else { 0.0 };
                let drive = v.gamma * q.gamma0 * q.gamma0 * phi(beta, t);
                let growth = (beta * t).exp();
                scalar(if upper { target - growth * start - drive } else { growth * start - drive - target })
            }
            Expr::Xi0Branch => {
                let b = SectorIntegralBounds::generate(&sys.families(), n, &v.lambda);
                let mut base = v.p.clone();
                for (j, blk) in sys.blocks.iter().enumerate() {
                    base += blk.h.transpose() * DMatrix::from_diagonal(&b.c0(set)[j]) * &blk.h;
                }
                let d = &v.xi0 + base * beta;
                Value::Matrix(if upper { d } else { -d })
            }
            Expr::XiBranch => {
                let b = SectorIntegralBounds::generate(&sys.families(), n, &v.lambda);
                let dim: usize = sys.total_width();
                let mut m = DMatrix::zeros(dim, dim);
                let mut off = 0;
                for j in 0..sys.m() {
                    let d = &v.xi[j] + DMatrix::from_diagonal(&b.sum1(set, j)) * beta;
                    let d = if upper { d } else { -d };
                    let k = d.nrows();
                    m.view_mut((off, off), (k, k)).copy_from(&d);
                    off += k;
                }
                Value::Matrix(m)
            }
            Expr::UpsilonPairBranch => {
                let b = SectorIntegralBounds::generate(&sys.families(), n, &v.lambda);
                let mut vals = Vec::new();
                for u in &v.upsilon_pairs {
                    let target = b.sum3(set, u.s, u.z) * (-beta);
                    let d = &u.diag - target;
                    vals.push(d.clone());
                    vals.push(-d);
                }
                Value::Scalars(concat(&vals))
            }
        }
    }
}

fn concat(vs: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(vs.iter().map(|v| v.len()).sum(), vs.iter().flat_map(|v| v.iter().copied()))
}
