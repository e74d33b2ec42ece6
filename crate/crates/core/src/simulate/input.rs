//! Exogenous input signals.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal {
    Zero { dim: usize },
    Constant { value: Vec<f64> },
    /// `uᵢ(t) = amplitudeᵢ · cos(omegaᵢ t + phaseᵢ)`.
    Sinusoid { amplitude: Vec<f64>, omega: Vec<f64>, phase: Vec<f64> },
    /// Value `k` on `[k·period, (k+1)·period)`, the last value held afterwards.
    PiecewiseConstant { period: f64, values: Vec<Vec<f64>> },
    /// Piecewise linear through `(times[k], values[k])`, clamped at the ends.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InputSignal {
    pub fn zero(dim: usize) -> Self {
        Self::Zero { dim }
    }

    /// `(3 cos t, sin t)`.
    pub fn example1() -> Self {
        Self::Sinusoid {
            amplitude: vec![3.0, 1.0],
            omega: vec![1.0, 1.0],
            phase: vec![0.0, -std::f64::consts::FRAC_PI_2],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } => *dim,
            Self::Constant { value } => value.len(),
            Self::Sinusoid { amplitude, .. } => amplitude.len(),
            Self::PiecewiseConstant { values, .. } | Self::Table { values, .. } => {
                values.first().map(|v| v.len()).unwrap_or(0)
            }
        }
    }

    pub fn check_shape(&self) -> Result<(), String> {
        let d = self.dim();
        match self {
            Self::Sinusoid { amplitude, omega, phase } => {
                if omega.len() != amplitude.len() || phase.len() != amplitude.len() {
                    return Err("sinusoid parameter lengths differ".into());
                }
            }
            Self::PiecewiseConstant { period, values } => {
                if !(*period > 0.0) || values.is_empty() {
                    return Err("piecewise-constant input needs a positive period and values".into());
                }
                if values.iter().any(|v| v.len() != d) {
                    return Err("piecewise-constant values have mixed lengths".into());
                }
            }
            Self::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() || times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("input table needs strictly increasing times matching the values".into());
                }
                if values.iter().any(|v| v.len() != d) {
                    return Err("input table values have mixed lengths".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Zero { dim } => DVector::zeros(*dim),
            Self::Constant { value } => DVector::from_column_slice(value),
            Self::Sinusoid { amplitude, omega, phase } => DVector::from_iterator(
                amplitude.len(),
                (0..amplitude.len()).map(|i| amplitude[i] * (omega[i] * t + phase[i]).cos()),
            ),
            Self::PiecewiseConstant { period, values } => {
                let k = ((t / period).floor().max(0.0) as usize).min(values.len() - 1);
                DVector::from_column_slice(&values[k])
            }
            Self::Table { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    return DVector::from_column_slice(&values[0]);
                }
                if k == times.len() {
                    return DVector::from_column_slice(&values[k - 1]);
                }
                let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                DVector::from_iterator(
                    values[k].len(),
                    values[k - 1].iter().zip(&values[k]).map(|(a, b)| a + w * (b - a)),
                )
            }
        }
    }

    /// Times in `(0, T)` where the signal is not smooth.
    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        match self {
            Self::PiecewiseConstant { period, values } => {
                (1..values.len()).map(|k| k as f64 * period).filter(|&t| t < horizon).collect()
            }
            Self::Table { times, .. } => times.iter().copied().filter(|&t| t > 0.0 && t < horizon).collect(),
            _ => Vec::new(),
        }
    }

    /// Largest `‖u(t)‖` over a uniform grid on `[0, T]` joined with the breakpoints.
    pub fn grid_sup_norm(&self, horizon: f64, points: usize) -> f64 {
        let mut ts: Vec<f64> = (0..=points).map(|k| horizon * k as f64 / points as f64).collect();
        for b in self.breakpoints(horizon) {
            ts.push(b);
            ts.push((b - 1e-12).max(0.0));
        }
        ts.into_iter().map(|t| self.eval(t).norm()).fold(0.0, f64::max)
    }

    /// Rejects signals whose norm exceeds `gamma0` on the verification grid.
    pub fn check_bound(&self, gamma0: f64, horizon: f64) -> Result<(), String> {
        self.check_shape()?;
        let sup = self.grid_sup_norm(horizon, 10_000);
        if sup > gamma0 + 1e-9 {
            return Err(format!("input norm reaches {sup:.6} above the bound {gamma0}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_input_is_bounded_by_three() {
        let u = InputSignal::example1();
        let v = u.eval(0.3);
        assert!((v[0] - 3.0 * 0.3f64.cos()).abs() < 1e-15);
        assert!((v[1] - 0.3f64.sin()).abs() < 1e-15);
        assert!((u.grid_sup_norm(1.0, 1000) - 3.0).abs() < 1e-12);
        assert!(u.check_bound(16.0, 1.0).is_ok());
        assert!(u.check_bound(2.9, 1.0).is_err());
    }

    #[test]
    fn piecewise_and_table() {
        let pc = InputSignal::PiecewiseConstant { period: 0.5, values: vec![vec![1.0], vec![-2.0]] };
        assert_eq!(pc.eval(0.49)[0], 1.0);
        assert_eq!(pc.eval(0.5)[0], -2.0);
        assert_eq!(pc.eval(9.0)[0], -2.0);
        assert_eq!(pc.breakpoints(1.0), vec![0.5]);
        let tb = InputSignal::Table { times: vec![0.0, 1.0], values: vec![vec![0.0], vec![2.0]] };
        assert!((tb.eval(0.25)[0] - 0.5).abs() < 1e-15);
        assert_eq!(tb.eval(5.0)[0], 2.0);
        assert!(InputSignal::Table { times: vec![1.0, 0.0], values: vec![vec![0.0], vec![0.0]] }.check_shape().is_err());
    }
}
