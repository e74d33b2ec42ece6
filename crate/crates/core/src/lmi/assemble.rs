//! The block matrix `Q` over `w = [ẋ; x; F₁; …; F_M; u]`.

use nalgebra::{DMatrix, DVector};

use crate::model::PersidskiiSystem;

use super::{DecisionVars, Side};

/// Offsets of the blocks of `w`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QLayout {
    pub n: usize,
    pub f_offsets: Vec<usize>,
    pub widths: Vec<usize>,
    pub u_offset: usize,
    pub dim: usize,
}

impl QLayout {
    pub fn new(sys: &PersidskiiSystem) -> Self {
        let n = sys.n();
        let widths = sys.widths();
        let mut f_offsets = Vec::with_capacity(widths.len());
        let mut off = 2 * n;
        for &k in &widths {
            f_offsets.push(off);
            off += k;
        }
        Self { n, f_offsets, widths, u_offset: off, dim: off + n }
    }

    /// Stacks `w` from its parts.
    pub fn stack(&self, xdot: &DVector<f64>, x: &DVector<f64>, f: &[DVector<f64>], u: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim);
        w.rows_mut(0, self.n).copy_from(xdot);
        w.rows_mut(self.n, self.n).copy_from(x);
        for (j, fj) in f.iter().enumerate() {
            w.rows_mut(self.f_offsets[j], self.widths[j]).copy_from(fj);
        }
        w.rows_mut(self.u_offset, self.n).copy_from(u);
        w
    }
}

fn put(q: &mut DMatrix<f64>, r: usize, c: usize, b: &DMatrix<f64>) {
    q.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
}

/// Assembles `Q̄` (upper side) or `Q̲` (lower side). With `remark1` the `P`
/// terms are written through the dynamics instead of through `ẋ`.
pub fn assemble_q(sys: &PersidskiiSystem, side: Side, v: &DecisionVars, remark1: bool) -> DMatrix<f64> {
    let lay = QLayout::new(sys);
    let n = lay.n;
    let m = sys.m();
    let a0 = &sys.a0;
    let mut q = DMatrix::zeros(lay.dim, lay.dim);
    let psi_t = v.psi.transpose();
    let gam_t = v.gamma_mat.transpose();

    put(&mut q, 0, 0, &(-(&v.psi) - &psi_t));
    let mut q12 = &psi_t * a0 - &v.gamma_mat;
    let mut q22 = &gam_t * a0 + a0.transpose() * &v.gamma_mat + &v.xi0;
    let mut q2u = gam_t.clone();
    if remark1 {
        q22 += &v.p * a0 + a0.transpose() * &v.p;
        q2u += &v.p;
    } else {
        q12 += &v.p;
    }
    put(&mut q, 0, n, &q12);
    put(&mut q, n, n, &q22);
    put(&mut q, 0, lay.u_offset, &psi_t);
    put(&mut q, n, lay.u_offset, &q2u);

    for (j, b) in sys.blocks.iter().enumerate() {
        let off = lay.f_offsets[j];
        let lam = DMatrix::from_diagonal(&v.lambda[j]);
        let om = &v.omega[j];
        let q1j = om + b.h.transpose() * &lam + &psi_t * &b.a;
        put(&mut q, 0, off, &q1j);
        let mut q2j = &gam_t * &b.a + b.h.transpose() * DMatrix::from_diagonal(&v.upsilon0[j]) - a0.transpose() * om;
        if remark1 {
            q2j += &v.p * &b.a;
        }
        put(&mut q, n, off, &q2j);
        let qjj = -(om.transpose() * &b.a) - b.a.transpose() * om + &v.xi[j];
        put(&mut q, off, off, &qjj);
        put(&mut q, off, lay.u_offset, &(-om.transpose()));
        for z in (j + 1)..m {
            let bz = &sys.blocks[z];
            let mut qsz = -(om.transpose() * &bz.a) - b.a.transpose() * &v.omega[z];
            if let Some(u) = v.upsilon_pair(j, z) {
                qsz += &b.h * DMatrix::from_diagonal(u) * bz.h.transpose();
            }
            put(&mut q, off, lay.f_offsets[z], &qsz);
        }
    }
    let g = match side {
        Side::Upper => -v.gamma,
        Side::Lower => v.gamma,
    };
    put(&mut q, lay.u_offset, lay.u_offset, &(DMatrix::identity(n, n) * g));

    // mirror the strict upper triangle of blocks
    for r in 0..lay.dim {
        for c in 0..r {
            q[(r, c)] = q[(c, r)];
        }
    }
    q
}
