//! Monte Carlo search for trajectories leaving the annulus.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PersidskiiSystem, QueryError, StabilityQuery};

use super::input::InputSignal;
use super::integrate::IntegratorConfig;
use super::monitor::monitor_annulus;
use super::{integrate, IntegrationError, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InputFamily {
    /// Cycles extremal constants `±γ₀eᵢ`, sinusoids of amplitude `γ₀` and
    /// piecewise-constant signals with `‖u‖ = γ₀`.
    Default,
    Fixed { signal: InputSignal },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalsifyConfig {
    pub samples: usize,
    pub seed: u64,
    pub inputs: InputFamily,
    /// Only the first `k` state coordinates receive input; `None` means all.
    #[serde(default)]
    pub input_channels: Option<usize>,
    pub integrator: IntegratorConfig,
    /// Violations with margin above `-band` are reported as inconclusive.
    pub band: f64,
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        let integrator = IntegratorConfig::default();
        Self {
            samples: 1000,
            seed: 0,
            inputs: InputFamily::Default,
            input_channels: None,
            band: 10.0 * integrator.rtol,
            integrator,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FalsifyError {
    #[error("at least one sample is required")]
    NoSamples,
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("input signal: {0}")]
    Input(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Pass,
    Inconclusive,
    Violation,
    IntegrationFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub index: usize,
    pub status: SampleStatus,
    pub margin: f64,
    /// Monitored norm at `T`: `‖y(T)‖` for output queries, `‖x(T)‖` otherwise.
    pub terminal_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub index: usize,
    pub x0: Vec<f64>,
    pub input: InputSignal,
    pub time: f64,
    pub state: Vec<f64>,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FalsificationReport {
    pub samples: usize,
    pub seed: u64,
    pub violations: usize,
    pub inconclusive: usize,
    pub integration_failures: usize,
    pub worst_margin: f64,
    pub worst_index: usize,
    pub terminal_norm_min: f64,
    pub terminal_norm_max: f64,
    pub witness: Option<Witness>,
}

/// Initial state uniform on the closed annulus `ε₁ ≤ ‖x‖ ≤ ε₂`.
pub fn sample_annulus<R: Rng>(rng: &mut R, n: usize, eps1: f64, eps2: f64) -> DVector<f64> {
    let dir = loop {
        let d = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let nd = d.norm();
        if nd > 1e-12 {
            break d / nd;
        }
    };
    let rho = (eps1 / eps2).powi(n as i32);
    let s: f64 = rng.random();
    let r = eps2 * (rho + s * (1.0 - rho)).powf(1.0 / n as f64);
    dir * r
}

fn random_direction<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    loop {
        for c in v.iter_mut().take(k) {
            *c = rng.sample(StandardNormal);
        }
        let nv = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if nv > 1e-12 {
            return v.into_iter().map(|c| c / nv).collect();
        }
    }
}

fn default_input<R: Rng>(rng: &mut R, i: usize, n: usize, k: usize, q: &StabilityQuery) -> InputSignal {
    let g = q.gamma0;
    match i % 3 {
        0 => {
            let mut value = vec![0.0; n];
            let axis = rng.random_range(0..k);
            value[axis] = if rng.random::<bool>() { g } else { -g };
            InputSignal::Constant { value }
        }
        1 => {
            let d = random_direction(rng, n, k);
            let w = rng.random_range(0.5..10.0) / q.horizon.max(1e-12);
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            InputSignal::Sinusoid {
                amplitude: d.iter().map(|c| g * c).collect(),
                omega: vec![w; n],
                phase: vec![ph; n],
            }
        }
        _ => {
            let pieces = 10;
            InputSignal::PiecewiseConstant {
                period: q.horizon / pieces as f64,
                values: (0..pieces).map(|_| random_direction(rng, n, k).iter().map(|c| g * c).collect()).collect(),
            }
        }
    }
}

/// The deterministic initial state and input of sample `i`.
pub fn sample_case(sys: &PersidskiiSystem, q: &StabilityQuery, cfg: &FalsifyConfig, i: usize) -> (DVector<f64>, InputSignal) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let n = sys.n();
    let x0 = sample_annulus(&mut rng, n, q.eps1, q.eps2);
    let k = cfg.input_channels.unwrap_or(n).clamp(1, n);
    let u = match &cfg.inputs {
        InputFamily::Default => default_input(&mut rng, i, n, k, q),
        InputFamily::Fixed { signal } => signal.clone(),
    };
    (x0, u)
}

fn terminal_norm(sys: &PersidskiiSystem, q: &StabilityQuery, tr: &Trajectory) -> f64 {
    match q.kind {
        crate::model::QueryKind::Oas => sys.output(tr.final_state()).norm(),
        _ => tr.final_state().norm(),
    }
}

/// Simulates `cfg.samples` cases in parallel and monitors each one.
pub fn falsify(sys: &PersidskiiSystem, q: &StabilityQuery, cfg: &FalsifyConfig) -> Result<FalsificationReport, FalsifyError> {
    if cfg.samples == 0 {
        return Err(FalsifyError::NoSamples);
    }
    q.validate()?;
    if let InputFamily::Fixed { signal } = &cfg.inputs {
        if signal.dim() != sys.n() {
            return Err(FalsifyError::Input(format!("dimension {} does not match n = {}", signal.dim(), sys.n())));
        }
        signal.check_bound(q.gamma0, q.horizon).map_err(FalsifyError::Input)?;
    }
    let run = |i: usize| -> (SampleOutcome, Option<Witness>) {
        let (x0, u) = sample_case(sys, q, cfg, i);
        let tr: Result<Trajectory, IntegrationError> = integrate(sys, &x0, &u, q.horizon, &cfg.integrator);
        let tr = match tr {
            Ok(t) => t,
            Err(_) => {
                let out = SampleOutcome { index: i, status: SampleStatus::IntegrationFailure, margin: f64::NAN, terminal_norm: f64::NAN };
                return (out, None);
            }
        };
        let v = monitor_annulus(&tr, q);
        let status = if v.worst_margin >= 0.0 {
            SampleStatus::Pass
        } else if v.worst_margin > -cfg.band {
            SampleStatus::Inconclusive
        } else {
            SampleStatus::Violation
        };
        let witness = (status == SampleStatus::Violation).then(|| {
            let viol = v.violation.clone().expect("negative margin carries a violation");
            Witness { index: i, x0: x0.iter().copied().collect(), input: u.clone(), time: viol.time, state: viol.state, margin: v.worst_margin }
        });
        (SampleOutcome { index: i, status, margin: v.worst_margin, terminal_norm: terminal_norm(sys, q, &tr) }, witness)
    };
    let results: Vec<(SampleOutcome, Option<Witness>)> = (0..cfg.samples).into_par_iter().map(run).collect();
    let count = |s: SampleStatus| results.iter().filter(|(o, _)| o.status == s).count();
    let finite = results.iter().filter(|(o, _)| o.margin.is_finite());
    let (worst_index, worst_margin) = finite
        .clone()
        .map(|(o, _)| (o.index, o.margin))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let norms = finite.map(|(o, _)| o.terminal_norm);
    let (lo, hi) = norms.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let witness = results
        .iter()
        .filter_map(|(_, w)| w.as_ref())
        .fold(None::<&Witness>, |best, w| match best {
            Some(b) if b.margin <= w.margin => Some(b),
            _ => Some(w),
        })
        .cloned();
    Ok(FalsificationReport {
        samples: cfg.samples,
        seed: cfg.seed,
        violations: count(SampleStatus::Violation),
        inconclusive: count(SampleStatus::Inconclusive),
        integration_failures: count(SampleStatus::IntegrationFailure),
        worst_margin,
        worst_index,
        terminal_norm_min: lo,
        terminal_norm_max: hi,
        witness,
    })
}
