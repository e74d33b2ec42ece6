//! Componentwise nonlinearities, their antiderivatives and sector-integral bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg;

/// Absolute tolerance used when an antiderivative has to be computed numerically.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Piecewise-linear table, clamped to the end values outside its range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub nu: Vec<f64>,
    pub f: Vec<f64>,
}

impl Table {
    pub fn new(nu: Vec<f64>, f: Vec<f64>) -> Result<Self, String> {
        if nu.len() != f.len() || nu.len() < 2 {
            return Err("tabulated nonlinearity needs matching nu/f arrays of length >= 2".into());
        }
        if nu.windows(2).any(|w| w[1] <= w[0]) {
            return Err("tabulated nu samples must be strictly increasing".into());
        }
        if nu.iter().chain(f.iter()).any(|v| !v.is_finite()) {
            return Err("tabulated samples must be finite".into());
        }
        Ok(Self { nu, f })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nu.len();
        if x <= self.nu[0] {
            return self.f[0];
        }
        if x >= self.nu[n - 1] {
            return self.f[n - 1];
        }
        let i = self.nu.partition_point(|&v| v <= x) - 1;
        let (x0, x1) = (self.nu[i], self.nu[i + 1]);
        let w = (x - x0) / (x1 - x0);
        self.f[i] * (1.0 - w) + self.f[i + 1] * w
    }

    fn nondecreasing(&self) -> bool {
        self.f.windows(2).all(|w| w[1] >= w[0])
    }

    fn breakpoints_between(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.nu.iter().copied().filter(|&v| v > lo && v < hi).collect()
    }
}

/// A user function with declared growth properties.
#[derive(Clone)]
pub struct CustomFn {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub radially_unbounded: bool,
    pub integral_unbounded: bool,
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomFn({})", self.name)
    }
}

/// One scalar component `f(ν)` of a nonlinearity block.
#[derive(Clone, Debug)]
pub enum ScalarNonlinearity {
    Tanh,
    /// `(1 - e^{-ν}) / (1 + e^{-ν})`.
    BipolarSigmoid,
    /// `c1 ν + c3 ν³ + c5 ν⁵ + ...`, coefficients of odd powers in increasing order.
    OddPolynomial(Vec<f64>),
    Relu,
    Tabulated(Table),
    Custom(CustomFn),
}

impl ScalarNonlinearity {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Tanh => x.tanh(),
            Self::BipolarSigmoid => (0.5 * x).tanh(),
            Self::OddPolynomial(c) => {
                let x2 = x * x;
                let mut p = x;
                let mut s = 0.0;
                for ck in c {
                    s += ck * p;
                    p *= x2;
                }
                s
            }
            Self::Relu => x.max(0.0),
            Self::Tabulated(t) => t.eval(x),
            Self::Custom(c) => (c.f)(x),
        }
    }

    /// `∫₀^x f(s) ds`.
    pub fn integral(&self, x: f64) -> f64 {
        match self {
            Self::Tanh => log_cosh(x),
            Self::BipolarSigmoid => 2.0 * log_cosh(0.5 * x),
            Self::OddPolynomial(c) => {
                let x2 = x * x;
                let mut p = x2;
                let mut s = 0.0;
                for (i, ck) in c.iter().enumerate() {
                    s += ck * p / (2 * i + 2) as f64;
                    p *= x2;
                }
                s
            }
            Self::Relu => 0.5 * x.max(0.0).powi(2),
            Self::Tabulated(t) => {
                let mut inner = t.breakpoints_between(0.0, x);
                if x < 0.0 {
                    inner.reverse();
                }
                let mut pts = vec![0.0];
                pts.extend(inner);
                pts.push(x);
                pts.windows(2)
                    .map(|w| 0.5 * (t.eval(w[0]) + t.eval(w[1])) * (w[1] - w[0]))
                    .sum()
            }
            Self::Custom(c) => linalg::integrate(&|s| (c.f)(s), 0.0, x, QUADRATURE_TOL),
        }
    }

    /// `|f(ν)| → ∞` as `|ν| → ∞`.
    pub fn radially_unbounded(&self) -> bool {
        match self {
            Self::OddPolynomial(c) => leading(c) > 0.0,
            Self::Custom(c) => c.radially_unbounded,
            _ => false,
        }
    }

    /// `∫₀^ν f → +∞` as `|ν| → ∞`.
    pub fn integral_unbounded(&self) -> bool {
        match self {
            Self::Tanh | Self::BipolarSigmoid => true,
            Self::OddPolynomial(c) => leading(c) > 0.0,
            Self::Relu => false,
            Self::Tabulated(t) => t.f[0] < 0.0 && t.f[t.f.len() - 1] > 0.0,
            Self::Custom(c) => c.integral_unbounded,
        }
    }

    /// Closed-form antiderivative and growth flags.
    pub fn analytically_verified(&self) -> bool {
        !matches!(self, Self::Tabulated(_) | Self::Custom(_))
    }

    pub fn descriptor(&self) -> String {
        match self {
            Self::Tanh => "tanh".into(),
            Self::BipolarSigmoid => "bipolar_sigmoid".into(),
            Self::OddPolynomial(c) => format!(
                "poly:[{}]",
                c.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
            ),
            Self::Relu => "relu".into(),
            Self::Tabulated(_) => "tabulated".into(),
            Self::Custom(c) => format!("custom:{}", c.name),
        }
    }

    /// Built-in per-unit-Λ sector-integral bounds, when one is known.
    pub fn default_unit_bounds(&self) -> Option<UnitBounds> {
        match self {
            // 2 ln cosh ν ≤ ν²
            Self::Tanh => Some(UnitBounds { e0: 1.0, ..UnitBounds::default() }),
            // 4 ln cosh(ν/2) ≤ ν²/2
            Self::BipolarSigmoid => Some(UnitBounds { e0: 0.5, ..UnitBounds::default() }),
            Self::OddPolynomial(c) => {
                if c.is_empty() || c.iter().any(|v| *v < 0.0) {
                    return None;
                }
                let top = 2 * c.len() - 1;
                Some(UnitBounds {
                    k2: 1.0 / (top + 1) as f64,
                    e2: 0.5,
                    ..UnitBounds::default()
                })
            }
            Self::Relu => Some(UnitBounds { k2: 0.5, e2: 0.5, ..UnitBounds::default() }),
            Self::Tabulated(t) if t.nondecreasing() => {
                Some(UnitBounds { e2: 1.0, ..UnitBounds::default() })
            }
            _ => None,
        }
    }

    pub fn parse(name: &str) -> Result<Self, String> {
        let s = name.trim();
        match s {
            "tanh" => return Ok(Self::Tanh),
            "bipolar_sigmoid" | "sigmoid" => return Ok(Self::BipolarSigmoid),
            "relu" => return Ok(Self::Relu),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("poly:") {
            let coeffs: Vec<f64> = serde_json::from_str(rest)
                .map_err(|e| format!("bad polynomial coefficients {rest:?}: {e}"))?;
            if coeffs.is_empty() || coeffs.iter().any(|v| !v.is_finite()) {
                return Err("polynomial needs finite coefficients".into());
            }
            return Ok(Self::OddPolynomial(coeffs));
        }
        Err(format!(
            "unknown nonlinearity {s:?} (expected tanh, bipolar_sigmoid, relu, poly:[c1,c3,...] or a tabulated object)"
        ))
    }
}

fn leading(c: &[f64]) -> f64 {
    c.iter().rev().find(|v| **v != 0.0).copied().unwrap_or(0.0)
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Per-component coefficients, per unit of Λ, such that
/// `κ₀ν² + κ₁f² + 2κ₂νf ≤ 2∫₀^ν f ≤ η₀ν² + η₁f² + 2η₂νf`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitBounds {
    #[serde(default)]
    pub k0: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub e0: f64,
    #[serde(default)]
    pub e1: f64,
    #[serde(default)]
    pub e2: f64,
}

impl UnitBounds {
    pub fn lower(&self, nu: f64, f: f64) -> f64 {
        self.k0 * nu * nu + self.k1 * f * f + 2.0 * self.k2 * nu * f
    }

    pub fn upper(&self, nu: f64, f: f64) -> f64 {
        self.e0 * nu * nu + self.e1 * f * f + 2.0 * self.e2 * nu * f
    }
}

/// The nonlinearity of one block: `k` scalar components plus their bounds.
#[derive(Clone, Debug)]
pub struct NonlinearityFamily {
    pub components: Vec<ScalarNonlinearity>,
    pub unit_bounds: Vec<UnitBounds>,
    /// Accept `ν f(ν) ≥ 0` instead of `> 0` (needed for ReLU).
    pub relaxed_sector: bool,
}

impl NonlinearityFamily {
    /// Components with their built-in bounds.
    pub fn new(components: Vec<ScalarNonlinearity>) -> Result<Self, String> {
        let unit_bounds = components
            .iter()
            .map(|c| {
                c.default_unit_bounds().ok_or_else(|| {
                    format!("no built-in sector-integral bounds for {}; supply them", c.descriptor())
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let relaxed_sector = components.iter().any(|c| matches!(c, ScalarNonlinearity::Relu));
        Ok(Self { components, unit_bounds, relaxed_sector })
    }

    pub fn uniform(f: ScalarNonlinearity, k: usize) -> Result<Self, String> {
        Self::new(vec![f; k])
    }

    pub fn tanh(k: usize) -> Self {
        Self::uniform(ScalarNonlinearity::Tanh, k).expect("tanh has built-in bounds")
    }

    pub fn with_bounds(components: Vec<ScalarNonlinearity>, unit_bounds: Vec<UnitBounds>) -> Result<Self, String> {
        if components.len() != unit_bounds.len() {
            return Err("one bound record per component is required".into());
        }
        Ok(Self { components, unit_bounds, relaxed_sector: false })
    }

    pub fn width(&self) -> usize {
        self.components.len()
    }

    pub fn apply(&self, nu: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(nu.len(), nu.iter().zip(&self.components).map(|(v, c)| c.value(*v)))
    }

    pub fn radially_unbounded(&self) -> bool {
        !self.components.is_empty() && self.components.iter().all(|c| c.radially_unbounded())
    }

    pub fn integral_unbounded(&self) -> bool {
        !self.components.is_empty() && self.components.iter().all(|c| c.integral_unbounded())
    }
}

/// Sector-integral bound matrices for a whole system at given Λ.
///
/// Diagonal matrices are stored as vectors. `kappa1[i][j]` is the bound in the
/// inequality of block `i` that weighs `F_jᵀ(·)F_j`; `kappa3[i][s][z]` couples
/// `F_s` and `F_z` through `H_s(·)H_zᵀ` and is only meaningful for `s < z`.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorIntegralBounds {
    pub kappa0: Vec<DVector<f64>>,
    pub kappa1: Vec<Vec<DVector<f64>>>,
    pub kappa2: Vec<Vec<DVector<f64>>>,
    pub kappa3: Vec<Vec<Vec<DVector<f64>>>>,
    pub eta0: Vec<DVector<f64>>,
    pub eta1: Vec<Vec<DVector<f64>>>,
    pub eta2: Vec<Vec<DVector<f64>>>,
    pub eta3: Vec<Vec<Vec<DVector<f64>>>>,
}

/// Selects the κ (lower) or η (upper) coefficient set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundSet {
    Kappa,
    Eta,
}

impl SectorIntegralBounds {
    /// Bounds generated from the per-unit coefficients of each family.
    pub fn generate(families: &[&NonlinearityFamily], n: usize, lambdas: &[DVector<f64>]) -> Self {
        let m = families.len();
        let widths: Vec<usize> = families.iter().map(|f| f.width()).collect();
        let zeros_k = |j: usize| DVector::zeros(widths[j]);
        let pair = || -> Vec<Vec<DVector<f64>>> {
            (0..m).map(|_| (0..m).map(zeros_k).collect()).collect()
        };
        let triple = || -> Vec<Vec<Vec<DVector<f64>>>> {
            (0..m)
                .map(|_| (0..m).map(|_| (0..m).map(|_| DVector::zeros(n)).collect()).collect())
                .collect()
        };
        let mut b = Self {
            kappa0: (0..m).map(zeros_k).collect(),
            kappa1: pair(),
            kappa2: pair(),
            kappa3: triple(),
            eta0: (0..m).map(zeros_k).collect(),
            eta1: pair(),
            eta2: pair(),
            eta3: triple(),
        };
        for (j, fam) in families.iter().enumerate() {
            for (i, ub) in fam.unit_bounds.iter().enumerate() {
                let l = lambdas[j][i];
                b.kappa0[j][i] = l * ub.k0;
                b.kappa1[j][j][i] = l * ub.k1;
                b.kappa2[j][j][i] = l * ub.k2;
                b.eta0[j][i] = l * ub.e0;
                b.eta1[j][j][i] = l * ub.e1;
                b.eta2[j][j][i] = l * ub.e2;
            }
        }
        b
    }

    pub fn c0(&self, set: BoundSet) -> &Vec<DVector<f64>> {
        match set {
            BoundSet::Kappa => &self.kappa0,
            BoundSet::Eta => &self.eta0,
        }
    }

    /// `Σ_i (·)₁,ᵢⱼ`, summed over the integral index.
    pub fn sum1(&self, set: BoundSet, j: usize) -> DVector<f64> {
        let src = match set {
            BoundSet::Kappa => &self.kappa1,
            BoundSet::Eta => &self.eta1,
        };
        src.iter().fold(DVector::zeros(src[0][j].len()), |acc, row| acc + &row[j])
    }

    pub fn sum2(&self, set: BoundSet, j: usize) -> DVector<f64> {
        let src = match set {
            BoundSet::Kappa => &self.kappa2,
            BoundSet::Eta => &self.eta2,
        };
        src.iter().fold(DVector::zeros(src[0][j].len()), |acc, row| acc + &row[j])
    }

    pub fn sum3(&self, set: BoundSet, s: usize, z: usize) -> DVector<f64> {
        let src = match set {
            BoundSet::Kappa => &self.kappa3,
            BoundSet::Eta => &self.eta3,
        };
        src.iter().fold(DVector::zeros(src[0][s][z].len()), |acc, row| acc + &row[s][z])
    }

    /// `(lower, 2·1ᵀΛⱼ∫₀^{Hⱼx} fⱼ, upper)` for block `i` at the given
    /// arguments `nu[j] = Hⱼx` and values `f[j] = Fⱼ(Hⱼx)`.
    pub fn sandwich(
        &self,
        i: usize,
        nu: &[DVector<f64>],
        f: &[DVector<f64>],
        h: &[nalgebra::DMatrix<f64>],
        lambda_i: &DVector<f64>,
        fam_i: &NonlinearityFamily,
    ) -> (f64, f64, f64) {
        let m = nu.len();
        let mid: f64 = (0..lambda_i.len())
            .map(|c| 2.0 * lambda_i[c] * fam_i.components[c].integral(nu[i][c]))
            .sum();
        let side = |set: BoundSet| {
            let (c0, c1, c2, c3) = match set {
                BoundSet::Kappa => (&self.kappa0, &self.kappa1, &self.kappa2, &self.kappa3),
                BoundSet::Eta => (&self.eta0, &self.eta1, &self.eta2, &self.eta3),
            };
            let mut v = nu[i].dot(&c0[i].component_mul(&nu[i]));
            for j in 0..m {
                v += f[j].dot(&c1[i][j].component_mul(&f[j]));
                v += 2.0 * f[j].dot(&c2[i][j].component_mul(&nu[j]));
            }
            for s in 0..m {
                for z in (s + 1)..m {
                    let left = h[s].transpose() * &f[s];
                    let right = h[z].transpose() * &f[z];
                    v += 2.0 * left.dot(&c3[i][s][z].component_mul(&right));
                }
            }
            v
        };
        (side(BoundSet::Kappa), mid, side(BoundSet::Eta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antiderivatives_match_quadrature() {
        let fs = [
            ScalarNonlinearity::Tanh,
            ScalarNonlinearity::BipolarSigmoid,
            ScalarNonlinearity::OddPolynomial(vec![0.5, 1.0, 0.1]),
            ScalarNonlinearity::Relu,
            ScalarNonlinearity::Tabulated(Table::new(vec![-2.0, 0.0, 1.0, 3.0], vec![-1.0, 0.0, 2.0, 2.5]).unwrap()),
        ];
        for f in &fs {
            for &x in &[-4.0, -0.7, 0.0, 0.3, 2.0, 5.0] {
                let q = linalg::integrate(&|s| f.value(s), 0.0, x, 1e-12);
                assert!((f.integral(x) - q).abs() < 1e-8, "{} at {x}", f.descriptor());
            }
        }
    }

    #[test]
    fn log_cosh_is_stable_for_large_arguments() {
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert!((log_cosh(0.5) - 0.5f64.cosh().ln()).abs() < 1e-15);
    }

    #[test]
    fn default_bounds_sandwich_the_integral() {
        let fs = [
            ScalarNonlinearity::Tanh,
            ScalarNonlinearity::BipolarSigmoid,
            ScalarNonlinearity::OddPolynomial(vec![0.0, 1.0]),
            ScalarNonlinearity::OddPolynomial(vec![2.0, 0.3, 0.05]),
            ScalarNonlinearity::Relu,
        ];
        for f in &fs {
            let b = f.default_unit_bounds().unwrap();
            for i in -200..=200 {
                let nu = i as f64 * 0.05;
                let v = f.value(nu);
                let mid = 2.0 * f.integral(nu);
                assert!(b.lower(nu, v) <= mid + 1e-12, "{} lower at {nu}", f.descriptor());
                assert!(mid <= b.upper(nu, v) + 1e-12, "{} upper at {nu}", f.descriptor());
            }
        }
    }

    #[test]
    fn parse_descriptors() {
        assert!(matches!(ScalarNonlinearity::parse("tanh"), Ok(ScalarNonlinearity::Tanh)));
        match ScalarNonlinearity::parse("poly:[1, 0.5]").unwrap() {
            ScalarNonlinearity::OddPolynomial(c) => assert_eq!(c, vec![1.0, 0.5]),
            _ => panic!(),
        }
        assert!(ScalarNonlinearity::parse("softplus").is_err());
    }

    #[test]
    fn growth_flags() {
        assert!(!ScalarNonlinearity::Tanh.radially_unbounded());
        assert!(ScalarNonlinearity::Tanh.integral_unbounded());
        assert!(ScalarNonlinearity::OddPolynomial(vec![0.0, 1.0]).radially_unbounded());
        assert!(!ScalarNonlinearity::Relu.integral_unbounded());
    }
}
