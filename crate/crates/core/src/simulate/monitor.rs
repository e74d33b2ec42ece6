//! Annular containment checks on simulated trajectories.

use nalgebra::DVector;
use serde::Serialize;

use crate::model::{MonitorMode, StabilityQuery};

use super::integrate::Trajectory;

/// Interior samples per accepted step, in addition to the step endpoints.
const SUBSAMPLES: usize = 8;
/// Time resolution of crossing localization.
const CROSSING_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    /// First time the monitored norm leaves the annulus.
    pub time: f64,
    pub state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub mode: MonitorMode,
    pub passed: bool,
    /// Signed distance into `[δ₁, δ₂]`, minimized over the checked times.
    pub worst_margin: f64,
    pub worst_time: f64,
    pub violation: Option<Violation>,
}

fn margin(mode: MonitorMode, q: &StabilityQuery, r: f64) -> f64 {
    match mode {
        MonitorMode::IntervalBall => q.delta2 - r,
        _ => (r - q.delta1).min(q.delta2 - r),
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > CROSSING_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { (c, fc) } else { (d, fd) }
}

/// Checks the trajectory against the query's annulus.
pub fn monitor_annulus(traj: &Trajectory, q: &StabilityQuery) -> Verdict {
    let mode = q.monitor_mode();
    let norm_at = |t: f64| -> f64 {
        match mode {
            MonitorMode::TerminalOutputAnnulus => traj.output_at(t).norm(),
            _ => traj.state_at(t).norm(),
        }
    };
    if matches!(mode, MonitorMode::TerminalAnnulus | MonitorMode::TerminalOutputAnnulus) {
        let t = q.horizon;
        let x: DVector<f64> = traj.state_at(t);
        let m = margin(mode, q, norm_at(t));
        return Verdict {
            mode,
            passed: m >= 0.0,
            worst_margin: m,
            worst_time: t,
            violation: (m < 0.0).then(|| Violation { time: t, state: x.iter().copied().collect() }),
        };
    }
    let g = |t: f64| margin(mode, q, norm_at(t));
    let mut worst = (0.0, g(0.0));
    let mut first_cross: Option<f64> = None;
    if worst.1 < 0.0 {
        first_cross = Some(0.0);
    }
    for seg in &traj.segments {
        let ts: Vec<f64> = (0..=SUBSAMPLES + 1).map(|k| seg.t0 + seg.h * k as f64 / (SUBSAMPLES + 1) as f64).collect();
        let ms: Vec<f64> = ts.iter().map(|&t| margin(mode, q, norm_of(traj, mode, seg.eval(t)))).collect();
        let k = (0..ms.len()).min_by(|&a, &b| ms[a].total_cmp(&ms[b])).unwrap_or(0);
        let lo = ts[k.saturating_sub(1)];
        let hi = ts[(k + 1).min(ts.len() - 1)];
        let (tr, mr) = golden_min(&|t| margin(mode, q, norm_of(traj, mode, seg.eval(t))), lo, hi);
        let (tb, mb) = if mr < ms[k] { (tr, mr) } else { (ts[k], ms[k]) };
        if mb < worst.1 {
            worst = (tb, mb);
        }
        if first_cross.is_none() && mb < 0.0 {
            let mut a = ts[0];
            let mut b = ts.iter().zip(&ms).find(|(_, &m)| m < 0.0).map(|(&t, _)| t).unwrap_or(tb);
            while b - a > CROSSING_TOL {
                let mid = 0.5 * (a + b);
                if margin(mode, q, norm_of(traj, mode, seg.eval(mid))) < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            first_cross = Some(b);
        }
    }
    Verdict {
        mode,
        passed: worst.1 >= 0.0,
        worst_margin: worst.1,
        worst_time: worst.0,
        violation: first_cross.map(|t| Violation { time: t, state: traj.state_at(t).iter().copied().collect() }),
    }
}

fn norm_of(traj: &Trajectory, mode: MonitorMode, x: DVector<f64>) -> f64 {
    match mode {
        MonitorMode::TerminalOutputAnnulus => (&traj.c * x).norm(),
        _ => x.norm(),
    }
}
