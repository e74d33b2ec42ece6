//! Continuous-time recurrent networks `χ̇ = Aχ + W₀g(W₁χ + b₀) + u`, `y = C̃χ`.

mod checkpoint;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use checkpoint::{read_checkpoint, CtrnnJson, MatrixSource};

use crate::model::{NonlinearBlock, NonlinearityFamily, PersidskiiSystem, ScalarNonlinearity, SectorIntegralBounds};

#[derive(Debug, Error, PartialEq)]
pub enum RnnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("network has a nonzero bias; use augment_bias")]
    BiasPresent,
    #[error("network has no bias to augment")]
    NoBias,
    #[error("{0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug)]
pub struct Ctrnn {
    /// `n × n`
    pub a: DMatrix<f64>,
    /// `n × N`
    pub w0: DMatrix<f64>,
    /// `N × n`
    pub w1: DMatrix<f64>,
    pub b0: Option<DVector<f64>>,
    /// `p × n`
    pub c: DMatrix<f64>,
    pub activation: ScalarNonlinearity,
}

impl Ctrnn {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    /// Checks shapes; returns warnings such as `N < n`.
    pub fn validate(&self) -> Result<Vec<String>, RnnError> {
        let n = self.n();
        let big_n = self.hidden();
        if self.a.ncols() != n {
            return Err(RnnError::Dimension("A must be square".into()));
        }
        if self.w0.shape() != (n, big_n) {
            return Err(RnnError::Dimension(format!("W0 must be {n}×{big_n}")));
        }
        if self.w1.ncols() != n {
            return Err(RnnError::Dimension(format!("W1 must have {n} columns")));
        }
        if self.c.ncols() != n {
            return Err(RnnError::Dimension(format!("C must have {n} columns")));
        }
        if let Some(b) = &self.b0 {
            if b.len() != big_n {
                return Err(RnnError::Dimension(format!("b0 must have {big_n} entries")));
            }
        }
        let mut warn = Vec::new();
        if big_n < n {
            warn.push(format!("hidden width N = {big_n} is below the state dimension n = {n}"));
        }
        Ok(warn)
    }

    fn has_bias(&self) -> bool {
        self.b0.as_ref().map(|b| b.iter().any(|v| *v != 0.0)).unwrap_or(false)
    }

    /// Right-hand side of the network itself, bias included.
    pub fn rhs(&self, chi: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut arg = &self.w1 * chi;
        if let Some(b) = &self.b0 {
            arg += b;
        }
        let g = arg.map(|s| self.activation.value(s));
        &self.a * chi + &self.w0 * g + u
    }
}

/// `A₀ = A`, one block with `A₁ = W₀`, `H₁ = W₁`, `F₁ = g`, `C = C̃`.
pub fn ctrnn_to_persidskii(rnn: &Ctrnn) -> Result<PersidskiiSystem, RnnError> {
    rnn.validate()?;
    if rnn.has_bias() {
        return Err(RnnError::BiasPresent);
    }
    let family = NonlinearityFamily::uniform(rnn.activation.clone(), rnn.hidden()).map_err(RnnError::Checkpoint)?;
    let block = NonlinearBlock { a: rnn.w0.clone(), h: rnn.w1.clone(), family };
    Ok(PersidskiiSystem::new(rnn.a.clone(), vec![block], rnn.c.clone()))
}

/// State `ξ = [χ; η]` with `η̇ = 0`: `Ã = diag(A, 0)`,
/// `H̃ = [W₁ diag(b₀); W₁ diag(b₀)]`, `W̃₀ = diag(W₀, 0)`, `Ĉ = [C̃ 0]`.
///
/// With `η(0) = 1` the `χ` block follows the biased network exactly.
pub fn augment_bias(rnn: &Ctrnn) -> Result<PersidskiiSystem, RnnError> {
    rnn.validate()?;
    let b = rnn.b0.as_ref().ok_or(RnnError::NoBias)?;
    let (n, big_n, p) = (rnn.n(), rnn.hidden(), rnn.c.nrows());
    let dim = n + big_n;
    let mut a = DMatrix::zeros(dim, dim);
    a.view_mut((0, 0), (n, n)).copy_from(&rnn.a);
    let mut h_row = DMatrix::zeros(big_n, dim);
    h_row.view_mut((0, 0), (big_n, n)).copy_from(&rnn.w1);
    h_row.view_mut((0, n), (big_n, big_n)).copy_from(&DMatrix::from_diagonal(b));
    let mut h = DMatrix::zeros(2 * big_n, dim);
    h.view_mut((0, 0), (big_n, dim)).copy_from(&h_row);
    h.view_mut((big_n, 0), (big_n, dim)).copy_from(&h_row);
    let mut w0 = DMatrix::zeros(dim, 2 * big_n);
    w0.view_mut((0, 0), (n, big_n)).copy_from(&rnn.w0);
    let mut c = DMatrix::zeros(p, dim);
    c.view_mut((0, 0), (p, n)).copy_from(&rnn.c);
    let family = NonlinearityFamily::uniform(rnn.activation.clone(), 2 * big_n).map_err(RnnError::Checkpoint)?;
    Ok(PersidskiiSystem::new(a, vec![NonlinearBlock { a: w0, h, family }], c))
}

/// `ξ(0) = [χ₀; 1]`.
pub fn augmented_initial_state(rnn: &Ctrnn, chi0: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::from_element(rnn.n() + rnn.hidden(), 1.0);
    x.rows_mut(0, rnn.n()).copy_from(chi0);
    x
}

fn single_block_bounds(f: ScalarNonlinearity, lambda: &DVector<f64>) -> SectorIntegralBounds {
    let fam = NonlinearityFamily::uniform(f, lambda.len()).expect("built-in family");
    SectorIntegralBounds::generate(&[&fam], 0, std::slice::from_ref(lambda))
}

/// `η₀ = Λ`, everything else zero: `0 ≤ 2Λ ln cosh ν ≤ Λν²`.
pub fn tanh_bounds(lambda: &DVector<f64>) -> SectorIntegralBounds {
    single_block_bounds(ScalarNonlinearity::Tanh, lambda)
}

/// `η₀ = Λ/2`: `0 ≤ 4Λ ln cosh(ν/2) ≤ Λν²/2`.
pub fn bipolar_sigmoid_bounds(lambda: &DVector<f64>) -> SectorIntegralBounds {
    single_block_bounds(ScalarNonlinearity::BipolarSigmoid, lambda)
}

/// Which worked network to draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleId {
    /// `n = 2`, `A = diag(−2, −5)`, `C̃ = [−1.3 2.2]`.
    One,
    /// `n = 10`, `A = −diag(U[1, 5])`, `C̃` one row with entries `U[−2.5, 2.5]`.
    Two,
}

impl ExampleId {
    pub fn parse(id: u32) -> Result<Self, String> {
        match id {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => Err(format!("unknown example id {id} (expected 1 or 2)")),
        }
    }
}

/// Hidden width of both worked networks.
pub const EXAMPLE_HIDDEN: usize = 50;

/// Draws a tanh network with weights i.i.d. uniform on `[−1/√N, 1/√N]`.
pub fn random_example(id: ExampleId, seed: u64) -> Ctrnn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big_n = EXAMPLE_HIDDEN;
    let s = 1.0 / (big_n as f64).sqrt();
    let (a, c) = match id {
        ExampleId::One => (
            DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -5.0])),
            DMatrix::from_row_slice(1, 2, &[-1.3, 2.2]),
        ),
        ExampleId::Two => {
            let d = DVector::from_fn(10, |_, _| -rng.random_range(1.0..5.0));
            let c = DMatrix::from_fn(1, 10, |_, _| rng.random_range(-2.5..2.5));
            (DMatrix::from_diagonal(&d), c)
        }
    };
    let n = a.nrows();
    let w0 = DMatrix::from_fn(n, big_n, |_, _| rng.random_range(-s..s));
    let w1 = DMatrix::from_fn(big_n, n, |_, _| rng.random_range(-s..s));
    Ctrnn { a, w0, w1, b0: None, c, activation: ScalarNonlinearity::Tanh }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_system;

    fn tiny(b0: Option<Vec<f64>>) -> Ctrnn {
        Ctrnn {
            a: DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -3.0]),
            w0: DMatrix::from_row_slice(2, 3, &[0.5, -0.1, 0.3, 0.2, 0.4, -0.6]),
            w1: DMatrix::from_row_slice(3, 2, &[1.0, -0.5, 0.3, 0.8, -0.7, 0.2]),
            b0: b0.map(DVector::from_vec),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            activation: ScalarNonlinearity::Tanh,
        }
    }

    #[test]
    fn example1_has_width_fifty_and_keeps_output() {
        let net = random_example(ExampleId::One, 0);
        let sys = ctrnn_to_persidskii(&net).unwrap();
        assert_eq!(sys.widths(), vec![50]);
        assert_eq!(sys.p(), 1);
        assert_eq!(sys.c, DMatrix::from_row_slice(1, 2, &[-1.3, 2.2]));
        assert!(validate_system(&sys).is_admissible());
        let s = 1.0 / 50f64.sqrt();
        assert!(net.w0.iter().chain(net.w1.iter()).all(|v| v.abs() <= s));
    }

    #[test]
    fn scalar_identity_network() {
        let net = Ctrnn {
            a: DMatrix::from_element(1, 1, -2.0),
            w0: DMatrix::identity(1, 1),
            w1: DMatrix::identity(1, 1),
            b0: None,
            c: DMatrix::identity(1, 1),
            activation: ScalarNonlinearity::Tanh,
        };
        let sys = ctrnn_to_persidskii(&net).unwrap();
        let x = DVector::from_vec(vec![0.7]);
        let u = DVector::from_vec(vec![0.1]);
        assert!((sys.rhs(&x, &u)[0] - (-1.4 + 0.7f64.tanh() + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn bias_routes_to_augmentation() {
        assert_eq!(ctrnn_to_persidskii(&tiny(Some(vec![0.1, 0.0, 0.0]))).unwrap_err(), RnnError::BiasPresent);
        assert_eq!(augment_bias(&tiny(None)).unwrap_err(), RnnError::NoBias);
        let sys = augment_bias(&tiny(Some(vec![0.1, -0.2, 0.3]))).unwrap();
        assert_eq!(sys.n(), 5);
        assert_eq!(sys.a0.view((2, 2), (3, 3)).iter().filter(|v| **v != 0.0).count(), 0);
        assert_eq!(sys.widths(), vec![6]);
    }

    #[test]
    fn augmented_chi_block_matches_biased_network() {
        let net = tiny(Some(vec![0.1, -0.2, 0.3]));
        let sys = augment_bias(&net).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let chi = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let xi = augmented_initial_state(&net, &chi);
            let mut ut = DVector::zeros(5);
            ut.rows_mut(0, 2).copy_from(&u);
            let f = sys.rhs(&xi, &ut);
            assert!((f.rows(0, 2) - net.rhs(&chi, &u)).norm() < 1e-13);
            assert!(f.rows(2, 3).norm() == 0.0);
            assert!((sys.output(&xi) - &net.c * &chi).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_bias_matches_plain_conversion_with_zero_eta() {
        let plain = ctrnn_to_persidskii(&tiny(None)).unwrap();
        let aug = augment_bias(&tiny(Some(vec![0.0; 3]))).unwrap();
        let chi = DVector::from_vec(vec![0.3, -1.1]);
        let mut xi = DVector::zeros(5);
        xi.rows_mut(0, 2).copy_from(&chi);
        let u = DVector::from_vec(vec![0.2, 0.5]);
        let mut ut = DVector::zeros(5);
        ut.rows_mut(0, 2).copy_from(&u);
        assert!((aug.rhs(&xi, &ut).rows(0, 2) - plain.rhs(&chi, &u)).norm() < 1e-15);
    }

    #[test]
    fn tanh_bounds_match_coefficient_list() {
        let b = tanh_bounds(&DVector::from_element(50, 1.0));
        assert_eq!(b.eta0[0], DVector::from_element(50, 1.0));
        assert_eq!(b.kappa0[0], DVector::zeros(50));
        assert_eq!(b.eta1[0][0], DVector::zeros(50));
        assert_eq!(b.eta2[0][0], DVector::zeros(50));
        assert_eq!(b.kappa2[0][0], DVector::zeros(50));
        let z = tanh_bounds(&DVector::zeros(3));
        assert_eq!(z.eta0[0], DVector::zeros(3));
        let v: f64 = 2.0 * 2f64.cosh().ln();
        assert!((v - 2.650).abs() < 1e-3 && v <= 4.0);
        assert_eq!(bipolar_sigmoid_bounds(&DVector::from_element(2, 2.0)).eta0[0], DVector::from_element(2, 1.0));
    }

    #[test]
    fn example_two_draw_shapes() {
        let net = random_example(ExampleId::Two, 3);
        assert_eq!((net.n(), net.hidden(), net.c.nrows()), (10, 50, 1));
        assert!(net.a.diagonal().iter().all(|d| (-5.0..=-1.0).contains(d)));
        assert!(ExampleId::parse(3).is_err());
    }
}
