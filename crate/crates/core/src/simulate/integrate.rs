//! Dormand–Prince 5(4) with step-size control and dense output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-9, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step limit reached at t = {t}")]
    MaxSteps { t: f64 },
}

/// Continuous extension of one accepted step.
#[derive(Clone, Debug)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    r: [DVector<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let r = &self.r;
        &r[0] + (&r[1] + (&r[2] + (&r[3] + &r[4] * th1) * th) * th1) * th
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest scaled local error estimate among accepted steps.
    pub max_error_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub segments: Vec<DenseSegment>,
    pub stats: IntegrationStats,
    /// Output map used by [`Trajectory::output_at`].
    pub c: DMatrix<f64>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn state_at(&self, t: f64) -> DVector<f64> {
        if self.segments.is_empty() {
            return self.states[0].clone();
        }
        let i = self.segments.partition_point(|s| s.t1() < t).min(self.segments.len() - 1);
        self.segments[i].eval(t)
    }

    pub fn output_at(&self, t: f64) -> DVector<f64> {
        &self.c * self.state_at(t)
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has an initial state")
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn scaled_norm(v: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, cfg: &IntegratorConfig) -> f64 {
    let n = v.len().max(1) as f64;
    let s: f64 = (0..v.len())
        .map(|i| {
            let sk = cfg.atol + cfg.rtol * y0[i].abs().max(y1[i].abs());
            (v[i] / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `ẋ = f(t, x)` over `[t0, t1]`, restarting at every breakpoint.
pub fn integrate_fn<F>(
    f: F,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    breakpoints: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<DenseSegment>, IntegrationStats), IntegrationError>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > t0 && b < t1).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    cuts.dedup();
    cuts.push(t1);
    let mut times = vec![t0];
    let mut states = vec![x0.clone()];
    let mut segs = Vec::new();
    let mut stats = IntegrationStats::default();
    let mut t = t0;
    let mut y = x0.clone();
    let mut h_prev: Option<f64> = None;
    for &end in &cuts {
        let span = end - t;
        if span <= 0.0 {
            continue;
        }
        let mut k1 = f(t, &y);
        stats.evaluations += 1;
        let mut h = match h_prev {
            Some(h) => h.min(span),
            None => initial_step(&f, t, &y, &k1, span, cfg, &mut stats),
        };
        let mut last_rejected = false;
        while t < end {
            if stats.accepted + stats.rejected >= cfg.max_steps {
                return Err(IntegrationError::MaxSteps { t });
            }
            let mut final_step = false;
            if t + h >= end || (end - (t + h)) < 1e-12 * span {
                h = end - t;
                final_step = true;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(IntegrationError::StepSizeUnderflow { t });
            }
            let y2 = &y + &k1 * (h * A21);
            let k2 = f(t + C2 * h, &y2);
            let y3 = &y + (&k1 * A31 + &k2 * A32) * h;
            let k3 = f(t + C3 * h, &y3);
            let y4 = &y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h;
            let k4 = f(t + C4 * h, &y4);
            let y5 = &y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h;
            let k5 = f(t + C5 * h, &y5);
            let y6 = &y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h;
            let t_new = if final_step { end } else { t + h };
            // Stages at a cut see the left limit of a discontinuous right-hand side.
            let t_stage = if final_step { left_of(end) } else { t_new };
            let k6 = f(t_stage, &y6);
            let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
            let k7 = f(t_stage, &y_new);
            stats.evaluations += 6;
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFinite { t });
            }
            let err = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
            let en = scaled_norm(&err, &y, &y_new, cfg);
            if en <= 1.0 {
                let ydiff = &y_new - &y;
                let bspl = &k1 * h - &ydiff;
                let r4 = &ydiff - &k7 * h - &bspl;
                let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
                segs.push(DenseSegment { t0: t, h: t_new - t, r: [y.clone(), ydiff, bspl, r4, r5] });
                stats.accepted += 1;
                stats.max_error_ratio = stats.max_error_ratio.max(en);
                t = t_new;
                y = y_new;
                k1 = k7;
                times.push(t);
                states.push(y.clone());
                let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
                fac = fac.clamp(0.2, 10.0);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                if !final_step {
                    h *= fac;
                    h_prev = Some(h);
                }
                last_rejected = false;
                if final_step {
                    break;
                }
            } else {
                stats.rejected += 1;
                last_rejected = true;
                h *= (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
    }
    Ok((times, states, segs, stats))
}

fn left_of(t: f64) -> f64 {
    t - t.abs().max(1.0) * f64::EPSILON
}

fn initial_step<F>(
    f: &F,
    t: f64,
    y: &DVector<f64>,
    f0: &DVector<f64>,
    span: f64,
    cfg: &IntegratorConfig,
    stats: &mut IntegrationStats,
) -> f64
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let d0 = scaled_norm(y, y, y, cfg);
    let d1 = scaled_norm(f0, y, y, cfg);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = y + f0 * h0;
    let f1 = f(t + h0, &y1);
    stats.evaluations += 1;
    let d2 = scaled_norm(&(&f1 - f0), y, y, cfg) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_dense_output() {
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let (times, states, segs, _) =
            integrate_fn(|_, x| -x, &x0, 0.0, 2.0, &[], &IntegratorConfig::default()).unwrap();
        assert_eq!(*times.last().unwrap(), 2.0);
        assert!((states.last().unwrap()[0] - (-2f64).exp()).abs() < 1e-8);
        for s in &segs {
            let tm = s.t0 + 0.37 * s.h;
            assert!((s.eval(tm)[0] - (-tm).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn error_shrinks_with_tolerance() {
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let rhs = |_: f64, x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0]]);
        let err = |tol: f64| {
            let cfg = IntegratorConfig { rtol: tol, atol: tol, ..Default::default() };
            let (_, st, _, _) = integrate_fn(rhs, &x0, 0.0, 10.0, &[], &cfg).unwrap();
            (st.last().unwrap()[0] - 10f64.cos()).abs()
        };
        let (e1, e2) = (err(1e-5), err(1e-8));
        assert!(e2 < e1 / 50.0, "{e1} {e2}");
    }

    #[test]
    fn breakpoints_are_hit_exactly() {
        let x0 = DVector::from_vec(vec![0.0]);
        let (times, states, _, _) = integrate_fn(
            |t, _| DVector::from_vec(vec![if t < 0.5 { 1.0 } else { -1.0 }]),
            &x0,
            0.0,
            1.0,
            &[0.5],
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(times.contains(&0.5));
        assert!(states.last().unwrap()[0].abs() < 1e-12);
    }
}
