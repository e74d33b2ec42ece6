//! Matrix inequalities of the certificate and the conic feasibility layer.

mod assemble;
mod constraints;
mod ipm;
mod problem;
mod sdpa;
mod vars;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble_q, QLayout};
pub use constraints::{Constraint, Expr, Role, SideContext, Value};
pub use ipm::HkmEngine;
pub use problem::{
    build_problem, solve_feasibility, AffineMatrix, AffineScalar, ConicProblem, EngineOutcome, Feasibility,
    FeasibilityEngine, MatrixConstraint, MockEngine, ScalarConstraint, SolverError,
};
pub use sdpa::write_sdpa;
pub use vars::{branch_set, fill_derived, BoundAux, DecisionVars, OutputSplit, PForm, UpsilonPair, VarLayout};

/// Upper (`V̄`, growth) or lower (`V̲`, decay) half of the certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// `(e^{βt} - 1)/β`, or `t` when `β = 0`.
pub fn phi(beta: f64, t: f64) -> f64 {
    if beta == 0.0 {
        t
    } else {
        (beta * t).exp_m1() / beta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    /// `sup_t a e^{βt} + c φ(t)`
    Sup,
    /// `inf_t a e^{βt} - c φ(t)`
    Inf,
}

/// Closed-form extremum over `t ∈ [0, T]` of `a e^{βt} ± c (e^{βt} - 1)/β`.
///
/// The function is monotone in `t`, so the extremum sits at an endpoint.
pub fn sup_exp_bound(a: f64, c: f64, beta: f64, horizon: f64, which: Extremum) -> f64 {
    let at = |t: f64| match which {
        Extremum::Sup => a * (beta * t).exp() + c * phi(beta, t),
        Extremum::Inf => a * (beta * t).exp() - c * phi(beta, t),
    };
    match which {
        Extremum::Sup => at(0.0).max(at(horizon)),
        Extremum::Inf => at(0.0).min(at(horizon)),
    }
}

/// Numeric γ condition for one side given the class-K values.
///
/// Upper: `α_start = ᾱ₂(ε₂)`, `α_target = ᾱ₁(δ₂)`; requires the (sup or
/// terminal) bound to stay at or below `α_target`. Lower: `α_start = α̲₁(ε₁)`,
/// `α_target = α̲₂(δ₁)`; requires the (inf or terminal) bound to stay at or
/// above `α_target`. Returns the signed slack.
pub fn gamma_condition_slack(
    side: Side,
    interval: bool,
    alpha_start: f64,
    alpha_target: f64,
    gamma: f64,
    gamma0: f64,
    beta: f64,
    horizon: f64,
) -> f64 {
    let c = gamma * gamma0 * gamma0;
    match side {
        Side::Upper => {
            let v = if interval {
                sup_exp_bound(alpha_start, c, beta, horizon, Extremum::Sup)
            } else {
                alpha_start * (beta * horizon).exp() + c * phi(beta, horizon)
            };
            alpha_target - v
        }
        Side::Lower => {
            let v = if interval {
                sup_exp_bound(alpha_start, c, beta, horizon, Extremum::Inf)
            } else {
                alpha_start * (beta * horizon).exp() - c * phi(beta, horizon)
            };
            v - alpha_target
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sup_bound_examples() {
        assert_eq!(sup_exp_bound(1.0, 0.0, -1.0, 2.0, Extremum::Sup), 1.0);
        assert!((sup_exp_bound(1.0, 2.0, 0.0, 1.0, Extremum::Sup) - 3.0).abs() < 1e-15);
        let v = sup_exp_bound(1.0, 0.0, 1.0, 2.0, Extremum::Sup);
        assert!((v - 2f64.exp()).abs() < 1e-12);
        let w = sup_exp_bound(1.0, 1.0, -1.0, 1.0, Extremum::Inf);
        assert!((w - ((-1f64).exp() - (1.0 - (-1f64).exp()))).abs() < 1e-12);
    }

    #[test]
    fn phi_small_beta_is_continuous() {
        assert!((phi(1e-12, 2.0) - 2.0).abs() < 1e-10);
        assert_eq!(phi(0.0, 2.0), 2.0);
    }
}
