#![allow(dead_code)]

use annular::lmi::DecisionVars;
use annular::model::{NonlinearBlock, NonlinearityFamily, PersidskiiSystem, ScalarNonlinearity};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..=s))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize, s: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-s..=s))
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize, s: f64) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n, s);
    (&m + m.transpose()) * 0.5
}

pub fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * rng.random_range(0.05..1.0)
}

/// Random tanh or cubic family of width `k`.
pub fn random_family(rng: &mut ChaCha8Rng, k: usize) -> NonlinearityFamily {
    let comps = (0..k)
        .map(|_| {
            if rng.random_bool(0.5) {
                ScalarNonlinearity::Tanh
            } else {
                ScalarNonlinearity::OddPolynomial(vec![rng.random_range(0.0..1.0), rng.random_range(0.1..1.0)])
            }
        })
        .collect();
    NonlinearityFamily::new(comps).unwrap()
}

/// `n ≤ 4`, `M ≤ 2`, widths `≤ 3`, tanh/cubic components.
pub fn random_system(rng: &mut ChaCha8Rng) -> PersidskiiSystem {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=2);
    let blocks = (0..m)
        .map(|_| {
            let k = rng.random_range(1..=3);
            NonlinearBlock {
                a: uniform_matrix(rng, n, k, 1.0),
                h: uniform_matrix(rng, k, n, 1.0),
                family: random_family(rng, k),
            }
        })
        .collect();
    let p = rng.random_range(1..=n);
    PersidskiiSystem::new(uniform_matrix(rng, n, n, 2.0), blocks, uniform_matrix(rng, p, n, 1.0))
}

/// Every decision variable drawn at random, derived blocks included.
pub fn random_vars(rng: &mut ChaCha8Rng, sys: &PersidskiiSystem) -> DecisionVars {
    let mut v = DecisionVars::zeros(sys);
    let n = sys.n();
    v.p = symmetric(rng, n, 1.0);
    for l in v.lambda.iter_mut() {
        l.iter_mut().for_each(|e| *e = rng.random_range(0.0..1.0));
    }
    for u in v.upsilon0.iter_mut() {
        u.iter_mut().for_each(|e| *e = rng.random_range(-1.0..1.0));
    }
    for u in v.upsilon_pairs.iter_mut() {
        u.diag.iter_mut().for_each(|e| *e = rng.random_range(-1.0..1.0));
    }
    for o in v.omega.iter_mut() {
        let (r, c) = o.shape();
        *o = uniform_matrix(rng, r, c, 1.0);
    }
    v.gamma_mat = symmetric(rng, n, 1.0);
    v.psi = symmetric(rng, n, 1.0);
    v.xi0 = symmetric(rng, n, 1.0);
    for x in v.xi.iter_mut() {
        let k = x.nrows();
        *x = symmetric(rng, k, 1.0);
    }
    v.gamma = rng.random_range(0.1..2.0);
    v
}

/// `ẋ = −2x − tanh x + u`.
pub fn scalar_tanh() -> PersidskiiSystem {
    PersidskiiSystem::new(
        DMatrix::from_element(1, 1, -2.0),
        vec![NonlinearBlock {
            a: DMatrix::from_element(1, 1, -1.0),
            h: DMatrix::identity(1, 1),
            family: NonlinearityFamily::tanh(1),
        }],
        DMatrix::identity(1, 1),
    )
}

/// `ẋ = −3x + tanh x + u`, positive feedback.
pub fn scalar_tanh_positive() -> PersidskiiSystem {
    PersidskiiSystem::new(
        DMatrix::from_element(1, 1, -3.0),
        vec![NonlinearBlock {
            a: DMatrix::from_element(1, 1, 1.0),
            h: DMatrix::identity(1, 1),
            family: NonlinearityFamily::tanh(1),
        }],
        DMatrix::identity(1, 1),
    )
}

pub fn linear_2d() -> PersidskiiSystem {
    PersidskiiSystem::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -1.5]),
        vec![],
        DMatrix::identity(2, 2),
    )
}
