//! Pointwise check that `Q` reproduces the derivative of `V`.

use nalgebra::DVector;

use crate::lmi::{assemble_q, DecisionVars, QLayout, Side};
use crate::model::PersidskiiSystem;

/// `|wᵀQw − xᵀΞ⁰x − ΣFⱼᵀΞʲFⱼ − 2Σ(Hⱼx)ᵀΥ₀ⱼFⱼ − 2Σ_{s<z}FₛᵀHₛΥ_{s,z}H_zᵀF_z ± γ‖u‖² − V̇|`
/// divided by `1 + |wᵀQw| + |V̇|`, with `V̇ = 2xᵀPẋ + 2Σ(Hⱼẋ)ᵀΛⱼFⱼ`.
///
/// `ẋ` is taken from the dynamics unless `xdot` overrides it.
pub fn vdot_identity_residual(
    sys: &PersidskiiSystem,
    side: Side,
    v: &DecisionVars,
    x: &DVector<f64>,
    u: &DVector<f64>,
    remark1: bool,
    xdot: Option<&DVector<f64>>,
) -> f64 {
    let xd = xdot.cloned().unwrap_or_else(|| sys.rhs(x, u));
    let f = sys.nonlinear_terms(x);
    let lay = QLayout::new(sys);
    let w = lay.stack(&xd, x, &f, u);
    let q = assemble_q(sys, side, v, remark1);
    let quad = w.dot(&(&q * &w));
    let mut lhs = quad - x.dot(&(&v.xi0 * x));
    for (j, b) in sys.blocks.iter().enumerate() {
        lhs -= f[j].dot(&(&v.xi[j] * &f[j]));
        lhs -= 2.0 * (&b.h * x).dot(&v.upsilon0[j].component_mul(&f[j]));
    }
    for pair in &v.upsilon_pairs {
        let l = sys.blocks[pair.s].h.transpose() * &f[pair.s];
        let r = sys.blocks[pair.z].h.transpose() * &f[pair.z];
        lhs -= 2.0 * l.dot(&pair.diag.component_mul(&r));
    }
    let uu = u.dot(u);
    lhs += match side {
        Side::Upper => v.gamma * uu,
        Side::Lower => -v.gamma * uu,
    };
    let mut vdot = 2.0 * x.dot(&(&v.p * &xd));
    for (j, b) in sys.blocks.iter().enumerate() {
        vdot += 2.0 * (&b.h * &xd).dot(&v.lambda[j].component_mul(&f[j]));
    }
    (lhs - vdot).abs() / (1.0 + quad.abs() + vdot.abs())
}
