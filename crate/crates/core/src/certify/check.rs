//! Independent re-validation of certificates.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::linalg::{jacobi_eigenvalues, max_abs};
use crate::lmi::{gamma_condition_slack, DecisionVars, PForm, Role, Side, SideContext, Value};
use crate::model::{validate_system, PersidskiiSystem, StabilityQuery};

use super::Certificate;

/// Tolerance for non-strict conditions.
const CHECK_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    /// Signed margin; non-negative means satisfied.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn failures(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|i| !i.passed)
            .map(|i| format!("{} (margin {:.3e})", i.name, i.margin))
            .collect()
    }

    pub fn min_margin(&self) -> f64 {
        self.items.iter().map(|i| i.margin).fold(f64::INFINITY, f64::min)
    }
}

fn jmin(m: &DMatrix<f64>) -> f64 {
    jacobi_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

fn jmax(m: &DMatrix<f64>) -> f64 {
    jacobi_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// `max_{j,i} Λ_jⁱ max(∫₀^{‖H_jⁱ‖r} f, ∫₀^{-‖H_jⁱ‖r} f)`.
fn integral_max(sys: &PersidskiiSystem, v: &DecisionVars, r: f64) -> f64 {
    let mut best: f64 = 0.0;
    for (b, l) in sys.blocks.iter().zip(&v.lambda) {
        for (i, f) in b.family.components.iter().enumerate() {
            let g = b.h.row(i).norm() * r;
            best = best.max(l[i] * f.integral(g).max(f.integral(-g)));
        }
    }
    best
}

/// Exact class-K values `(start, target)` of one side, from `P`, `P₂` and `Λ`.
pub fn alpha_values(sys: &PersidskiiSystem, q: &StabilityQuery, side: Side, form: PForm, v: &DecisionVars) -> (f64, f64) {
    let k = sys.total_width() as f64;
    match side {
        Side::Upper => {
            let start = jmax(&v.p).max(0.0) * q.eps2 * q.eps2 + 2.0 * k * integral_max(sys, v, q.eps2);
            let lo = match (form, &v.output) {
                (PForm::OutputSplit, Some(o)) => jmin(&o.p2),
                _ => jmin(&v.p),
            };
            (start, lo * q.delta2 * q.delta2)
        }
        Side::Lower => {
            let start = jmin(&v.p) * q.eps1 * q.eps1;
            let target = match (form, &v.output) {
                (PForm::OutputOnly, Some(o)) => jmax(&o.p2).max(0.0) * q.delta1 * q.delta1,
                _ => jmax(&v.p).max(0.0) * q.delta1 * q.delta1 + 2.0 * k * integral_max(sys, v, q.delta1),
            };
            (start, target)
        }
    }
}

fn shapes_ok(sys: &PersidskiiSystem, v: &DecisionVars, form: PForm) -> Result<(), String> {
    let n = sys.n();
    let w = sys.widths();
    let sq = |m: &DMatrix<f64>, d: usize| m.nrows() == d && m.ncols() == d;
    if !sq(&v.p, n) || !sq(&v.gamma_mat, n) || !sq(&v.psi, n) || !sq(&v.xi0, n) {
        return Err("P, Γ, Ψ and Ξ⁰ must be n×n".into());
    }
    if v.lambda.len() != w.len() || v.upsilon0.len() != w.len() || v.omega.len() != w.len() || v.xi.len() != w.len() {
        return Err("one Λ, Υ₀, Ω and Ξ block per nonlinearity block is required".into());
    }
    for (j, &k) in w.iter().enumerate() {
        if v.lambda[j].len() != k || v.upsilon0[j].len() != k || v.omega[j].shape() != (n, k) || !sq(&v.xi[j], k) {
            return Err(format!("block {j} has mis-shaped variables"));
        }
    }
    let expected_pairs = w.len() * w.len().saturating_sub(1) / 2;
    if v.upsilon_pairs.len() != expected_pairs || v.upsilon_pairs.iter().any(|u| u.diag.len() != n || u.s >= u.z || u.z >= w.len()) {
        return Err("Υ_{s,z} pairs are malformed".into());
    }
    match (form, &v.output) {
        (PForm::Full, None) => {}
        (PForm::OutputSplit | PForm::OutputOnly, Some(o)) if sq(&o.p1, n) && sq(&o.p2, sys.p()) => {}
        _ => return Err("output split does not match the parametrization".into()),
    }
    let all = [&v.p, &v.gamma_mat, &v.psi, &v.xi0];
    if all.iter().any(|m| m.iter().any(|x| !x.is_finite())) || !v.gamma.is_finite() {
        return Err("non-finite entries".into());
    }
    Ok(())
}

fn asym(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

fn check_side(sys: &PersidskiiSystem, q: &StabilityQuery, cert: &Certificate, side: Side, items: &mut Vec<CheckItem>) {
    let Some(sc) = cert.side(side) else {
        return;
    };
    let tag = match side {
        Side::Upper => "upper",
        Side::Lower => "lower",
    };
    let mut push = |name: String, margin: f64, passed: bool| items.push(CheckItem { name: format!("{tag}: {name}"), margin, passed });
    let ctx = SideContext::new(sys, *q, side, sc.beta, sc.rho, cert.remark1, cert.finsler_blocks.clone());
    if ctx.form != sc.form {
        push("parametrization matches the query".into(), -1.0, false);
        return;
    }
    if !sc.beta.is_finite() || !sc.rho.is_finite() {
        push("finite scalar parameters".into(), -1.0, false);
        return;
    }
    if cert.finsler_blocks.iter().any(|&j| j >= sys.m()) {
        push("Finsler block indices".into(), -1.0, false);
        return;
    }
    let v = &sc.vars;
    if let Err(e) = shapes_ok(sys, v, sc.form) {
        push(format!("variable shapes: {e}"), -1.0, false);
        return;
    }
    let scale = 1.0 + max_abs(&v.p);
    let sym_err = asym(&v.p).max(asym(&v.gamma_mat)).max(asym(&v.psi));
    push("P, Γ, Ψ symmetric".into(), -sym_err, sym_err <= 1e-9 * scale);
    if let Some(o) = &v.output {
        let recon = &o.p1 + sys.c.transpose() * &o.p2 * &sys.c;
        let err = max_abs(&(&v.p - recon));
        push("P = P₁ + CᵀP₂C".into(), -err, err <= 1e-9 * scale);
        if sc.form == PForm::OutputOnly {
            let extra = max_abs(&o.p1).max(v.lambda.iter().flat_map(|l| l.iter()).fold(0.0, |a: f64, b| a.max(b.abs())));
            push("P₁ = 0 and Λ = 0".into(), -extra, extra == 0.0);
        }
    }
    for c in ctx.constraints() {
        let margin = match ctx.eval(c.expr, v) {
            Value::Matrix(m) => jmin(&m),
            Value::Scalars(s) => s.iter().copied().fold(f64::INFINITY, f64::min),
        };
        let passed = match c.role {
            Role::Margin => margin > 0.0,
            Role::Plain | Role::Derived => margin >= -CHECK_TOL,
        };
        push(c.name.clone(), margin, passed);
    }
    let (start, target) = alpha_values(sys, q, side, sc.form, v);
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()));
    let recorded = rel(start, sc.alpha_start) && rel(target, sc.alpha_target);
    push(
        "recorded class-K values match".into(),
        -((start - sc.alpha_start).abs() + (target - sc.alpha_target).abs()),
        recorded,
    );
    let slack = gamma_condition_slack(side, q.kind.is_interval(), start, target, v.gamma, q.gamma0, sc.beta, q.horizon);
    push("γ condition with exact class-K values".into(), slack, slack > 0.0);
}

/// Re-assembles every condition from the certificate's stored variables and
/// recomputes eigenvalue margins with a Jacobi eigenvalue routine.
pub fn check_certificate(sys: &PersidskiiSystem, q: &StabilityQuery, cert: &Certificate) -> CheckReport {
    let mut items = Vec::new();
    let qok = q.validate().is_ok();
    items.push(CheckItem { name: "query is well formed".into(), margin: if qok { 0.0 } else { -1.0 }, passed: qok });
    let same = cert.query == *q;
    items.push(CheckItem { name: "certificate answers this query".into(), margin: if same { 0.0 } else { -1.0 }, passed: same });
    let adm = validate_system(sys).is_admissible();
    items.push(CheckItem { name: "system is admissible".into(), margin: if adm { 0.0 } else { -1.0 }, passed: adm });
    let needs_lower = q.kind.has_lower_side() && q.delta1 > 0.0;
    let has_lower = cert.lower.is_some();
    items.push(CheckItem {
        name: "lower side present when required".into(),
        margin: if needs_lower && !has_lower { -1.0 } else { 0.0 },
        passed: !needs_lower || has_lower,
    });
    if cert.upper.side != Side::Upper || cert.lower.as_ref().map(|l| l.side != Side::Lower).unwrap_or(false) {
        items.push(CheckItem { name: "side labels".into(), margin: -1.0, passed: false });
    }
    if qok && adm {
        check_side(sys, q, cert, Side::Upper, &mut items);
        if needs_lower {
            check_side(sys, q, cert, Side::Lower, &mut items);
        }
    }
    CheckReport { passed: items.iter().all(|i| i.passed), items }
}
