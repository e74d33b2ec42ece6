//! Simulation of the closed system, containment monitoring and falsification.

mod falsify;
mod identity;
mod input;
mod integrate;
mod monitor;

use std::io::Write;

use nalgebra::DVector;

pub use falsify::{
    falsify, sample_annulus, sample_case, FalsificationReport, FalsifyConfig, FalsifyError, InputFamily, SampleOutcome,
    SampleStatus, Witness,
};
pub use identity::vdot_identity_residual;
pub use input::InputSignal;
pub use integrate::{integrate_fn, DenseSegment, IntegrationError, IntegrationStats, IntegratorConfig, Trajectory};
pub use monitor::{monitor_annulus, Verdict, Violation};

use crate::model::PersidskiiSystem;

/// Integrates the system from `x0` over `[0, T]` under input `u`.
pub fn integrate(
    sys: &PersidskiiSystem,
    x0: &DVector<f64>,
    u: &InputSignal,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    let bps = u.breakpoints(horizon);
    let (times, states, segments, stats) = integrate_fn(|t, x| sys.rhs(x, &u.eval(t)), x0, 0.0, horizon, &bps, cfg)?;
    Ok(Trajectory { times, states, segments, stats, c: sys.c.clone() })
}

/// Writes `t, x₁..xₙ, ‖x‖, ‖y‖` on a uniform grid of `points + 1` times.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, points: usize, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let n = traj.states[0].len();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("norm_x".into());
    header.push("norm_y".into());
    w.write_record(&header)?;
    let t_end = traj.t_end();
    for k in 0..=points {
        let t = t_end * k as f64 / points.max(1) as f64;
        let x = traj.state_at(t);
        let mut row = vec![format!("{t}")];
        row.extend(x.iter().map(|v| format!("{v}")));
        row.push(format!("{}", x.norm()));
        row.push(format!("{}", (&traj.c * &x).norm()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{DecisionVars, Side};
    use crate::model::{NonlinearBlock, NonlinearityFamily};
    use nalgebra::DMatrix;

    fn scalar(a: f64, b: f64) -> PersidskiiSystem {
        let block = NonlinearBlock { a: DMatrix::from_element(1, 1, b), h: DMatrix::identity(1, 1), family: NonlinearityFamily::tanh(1) };
        PersidskiiSystem::new(DMatrix::from_element(1, 1, a), vec![block], DMatrix::identity(1, 1))
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let sys = PersidskiiSystem::new(-DMatrix::identity(1, 1), vec![], DMatrix::identity(1, 1));
        let x0 = DVector::from_vec(vec![1.0]);
        let tr = integrate(&sys, &x0, &InputSignal::zero(1), 1.0, &IntegratorConfig::default()).unwrap();
        assert!((tr.final_state()[0] - 0.36787944117144233).abs() < 1e-9);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tanh_equilibrium_stays_put() {
        let sys = PersidskiiSystem::new(DMatrix::zeros(1, 1), scalar(0.0, -1.0).blocks, DMatrix::identity(1, 1));
        let tr = integrate(&sys, &DVector::zeros(1), &InputSignal::zero(1), 3.0, &IntegratorConfig::default()).unwrap();
        assert!(tr.states.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn forced_scalar_settles_at_root() {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * mid + mid.tanh() < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((2.0 * root + root.tanh() - 1.0).abs() < 1e-12);
        let sys = scalar(-2.0, -1.0);
        let u = InputSignal::Constant { value: vec![1.0] };
        let tr = integrate(&sys, &DVector::zeros(1), &u, 5.0, &IntegratorConfig::default()).unwrap();
        assert!((tr.final_state()[0] - root).abs() < 1e-5);
    }

    #[test]
    fn pure_quadratic_identity_is_exact() {
        let sys = scalar(-2.0, -1.0);
        let mut v = DecisionVars::zeros(&sys);
        v.p[(0, 0)] = 0.7;
        let x = DVector::from_vec(vec![0.4]);
        let u = DVector::from_vec(vec![-0.3]);
        for side in [Side::Upper, Side::Lower] {
            assert!(vdot_identity_residual(&sys, side, &v, &x, &u, false, None) < 1e-15);
        }
    }

    #[test]
    fn wrong_derivative_breaks_identity() {
        let sys = scalar(-2.0, -1.0);
        let mut v = DecisionVars::zeros(&sys);
        v.p[(0, 0)] = 0.7;
        v.psi[(0, 0)] = 0.5;
        v.gamma_mat[(0, 0)] = -0.2;
        let x = DVector::from_vec(vec![0.4]);
        let u = DVector::from_vec(vec![-0.3]);
        let good = vdot_identity_residual(&sys, Side::Upper, &v, &x, &u, false, None);
        let bad = vdot_identity_residual(&sys, Side::Upper, &v, &x, &u, false, Some(&DVector::from_vec(vec![1.0])));
        assert!(good < 1e-14 && bad > 1e-3, "{good} {bad}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let sys = PersidskiiSystem::new(-DMatrix::identity(2, 2), vec![], DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let tr = integrate(&sys, &DVector::from_vec(vec![1.0, 0.0]), &InputSignal::zero(2), 1.0, &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&tr, 10, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,norm_x,norm_y\n"));
        assert_eq!(text.lines().count(), 12);
    }
}
