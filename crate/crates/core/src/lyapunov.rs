//! The Persidskii-type Lyapunov function and its class-K sandwich bounds.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{lambda_max, lambda_min};
use crate::model::{PersidskiiSystem, ScalarNonlinearity};

/// `V(x) = xᵀPx + 2 Σ_j Σ_i Λ_jⁱ ∫₀^{H_jⁱx} f_jⁱ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovParams {
    pub p: DMatrix<f64>,
    pub lambda: Vec<DVector<f64>>,
    pub rho: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LyapunovError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Λ entry ({block}, {component}) is negative")]
    NegativeLambda { block: usize, component: usize },
    #[error("P is not positive definite (λmin = {0})")]
    NotPositiveDefinite(f64),
    #[error("output factor: {0}")]
    OutputFactor(String),
}

impl LyapunovParams {
    pub fn check(&self, sys: &PersidskiiSystem) -> Result<(), LyapunovError> {
        let n = sys.n();
        if self.p.nrows() != n || self.p.ncols() != n {
            return Err(LyapunovError::Dimension(format!("P is {}x{}, expected {n}x{n}", self.p.nrows(), self.p.ncols())));
        }
        if self.lambda.len() != sys.m() {
            return Err(LyapunovError::Dimension(format!("{} Λ blocks for {} nonlinear blocks", self.lambda.len(), sys.m())));
        }
        for (j, (l, k)) in self.lambda.iter().zip(sys.widths()).enumerate() {
            if l.len() != k {
                return Err(LyapunovError::Dimension(format!("Λ{} has {} entries, expected {k}", j + 1, l.len())));
            }
            if let Some(i) = l.iter().position(|v| *v < 0.0) {
                return Err(LyapunovError::NegativeLambda { block: j, component: i });
            }
        }
        Ok(())
    }
}

pub fn eval_v(params: &LyapunovParams, sys: &PersidskiiSystem, x: &DVector<f64>) -> Result<f64, LyapunovError> {
    params.check(sys)?;
    if x.len() != sys.n() {
        return Err(LyapunovError::Dimension(format!("x has {} entries, expected {}", x.len(), sys.n())));
    }
    let mut v = x.dot(&(&params.p * x));
    for (b, l) in sys.blocks.iter().zip(&params.lambda) {
        let nu = &b.h * x;
        for (i, f) in b.family.components.iter().enumerate() {
            v += 2.0 * l[i] * f.integral(nu[i]);
        }
    }
    Ok(v)
}

/// One `Λⁱ ∫₀^{g τ} f` contribution of the upper bound.
#[derive(Clone, Debug, Serialize)]
pub struct IntegralTerm {
    pub weight: f64,
    pub gain: f64,
    #[serde(serialize_with = "ser_fn")]
    pub f: ScalarNonlinearity,
}

fn ser_fn<S: serde::Serializer>(f: &ScalarNonlinearity, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&f.descriptor())
}

impl IntegralTerm {
    fn eval(&self, tau: f64) -> f64 {
        let r = self.gain * tau;
        self.weight * self.f.integral(r).max(self.f.integral(-r))
    }
}

/// A class-K function bounding `V` from above or below.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ClassKBound {
    /// `coeff · τ²`
    Quadratic { coeff: f64 },
    /// `quad · τ² + 2 · width_sum · max_t term_t(τ)`
    QuadraticPlusIntegral { quad: f64, width_sum: usize, terms: Vec<IntegralTerm> },
    /// Pointwise sampled minimum; not a certified bound.
    Sampled { points: Vec<(f64, f64)> },
}

impl ClassKBound {
    pub fn eval(&self, tau: f64) -> f64 {
        match self {
            Self::Quadratic { coeff } => coeff * tau * tau,
            Self::QuadraticPlusIntegral { quad, width_sum, terms } => {
                let m = terms.iter().map(|t| t.eval(tau)).fold(0.0, f64::max);
                quad * tau * tau + 2.0 * *width_sum as f64 * m
            }
            Self::Sampled { points } => {
                points.iter().find(|(r, _)| *r >= tau).map(|p| p.1).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn certified(&self) -> bool {
        !matches!(self, Self::Sampled { .. })
    }

    /// Largest integral contribution `max_t term_t(τ)`, zero for pure quadratics.
    pub fn integral_max(&self, tau: f64) -> f64 {
        match self {
            Self::QuadraticPlusIntegral { terms, .. } => terms.iter().map(|t| t.eval(tau)).fold(0.0, f64::max),
            _ => 0.0,
        }
    }
}

/// `α₂(τ) = λmax(P)τ² + 2(Σk_j) max_{j,i} Λ_jⁱ ∫₀^{‖H_jⁱ‖τ} f_jⁱ`.
pub fn alpha_upper(params: &LyapunovParams, sys: &PersidskiiSystem) -> Result<ClassKBound, LyapunovError> {
    params.check(sys)?;
    let mut terms = Vec::new();
    for (b, l) in sys.blocks.iter().zip(&params.lambda) {
        for (i, f) in b.family.components.iter().enumerate() {
            terms.push(IntegralTerm { weight: l[i], gain: b.h.row(i).norm(), f: f.clone() });
        }
    }
    Ok(ClassKBound::QuadraticPlusIntegral {
        quad: lambda_max(&params.p).max(0.0),
        width_sum: sys.total_width(),
        terms,
    })
}

/// How the lower bound `α₁` is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum AlphaStrategy {
    /// `λmin(P) τ²`, valid when `P ≻ 0` and `Λ ≥ 0`.
    QuadraticCertified,
    /// `λmin(P₂) s²` in `s = ‖Cx‖`, valid when `P - CᵀP₂C ⪰ 0`.
    OutputQuadratic { p2: DMatrix<f64> },
    /// Minimum of `V` over sampled spheres; diagnostic only.
    Sampled { radii: Vec<f64>, directions: usize, seed: u64 },
}

pub fn alpha_lower(
    params: &LyapunovParams,
    sys: &PersidskiiSystem,
    strategy: &AlphaStrategy,
) -> Result<ClassKBound, LyapunovError> {
    params.check(sys)?;
    let tol = 1e-10 * (1.0 + crate::linalg::max_abs(&params.p));
    match strategy {
        AlphaStrategy::QuadraticCertified => {
            let l = lambda_min(&params.p);
            if l <= 0.0 {
                return Err(LyapunovError::NotPositiveDefinite(l));
            }
            Ok(ClassKBound::Quadratic { coeff: l })
        }
        AlphaStrategy::OutputQuadratic { p2 } => {
            if p2.nrows() != sys.p() || p2.ncols() != sys.p() {
                return Err(LyapunovError::OutputFactor(format!("P2 must be {0}x{0}", sys.p())));
            }
            let l2 = lambda_min(p2);
            if l2 <= 0.0 {
                return Err(LyapunovError::OutputFactor(format!("P2 is not positive definite (λmin = {l2})")));
            }
            let rest = &params.p - sys.c.transpose() * p2 * &sys.c;
            let lr = lambda_min(&rest);
            if lr < -tol {
                return Err(LyapunovError::OutputFactor(format!("P - CᵀP2C has λmin = {lr}")));
            }
            Ok(ClassKBound::Quadratic { coeff: l2 })
        }
        AlphaStrategy::Sampled { radii, directions, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let n = sys.n();
            let mut points = Vec::new();
            for &r in radii {
                let mut best = f64::INFINITY;
                for _ in 0..*directions {
                    let d = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    let x = d.normalize() * r;
                    best = best.min(eval_v(params, sys, &x)?);
                }
                points.push((r, best));
            }
            Ok(ClassKBound::Sampled { points })
        }
    }
}

/// `λmax(P₂) s²`, the upper bound of `V = (Cx)ᵀP₂(Cx)` in `s = ‖Cx‖`.
pub fn alpha_upper_output(p2: &DMatrix<f64>) -> ClassKBound {
    ClassKBound::Quadratic { coeff: lambda_max(p2).max(0.0) }
}

/// `P + ρ Σ_{j ∈ blocks} H_jᵀΛ_jH_j`.
pub fn finsler_matrix(params: &LyapunovParams, sys: &PersidskiiSystem, blocks: &[usize]) -> DMatrix<f64> {
    let mut m = params.p.clone();
    for &j in blocks {
        let h = &sys.blocks[j].h;
        m += params.rho * h.transpose() * DMatrix::from_diagonal(&params.lambda[j]) * h;
    }
    m
}

/// Positive definiteness of the Finsler matrix over the first `mu` blocks.
pub fn finsler_positive(params: &LyapunovParams, sys: &PersidskiiSystem, mu: usize) -> bool {
    let blocks: Vec<usize> = (0..mu.min(sys.m())).collect();
    let m = finsler_matrix(params, sys, &blocks);
    lambda_min(&m) > 1e-12 * (1.0 + crate::linalg::max_abs(&m))
}
