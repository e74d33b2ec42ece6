//! Primal-dual interior-point engine (HKM direction, Mehrotra predictor-corrector,
//! infeasible start) for block-diagonal semidefinite programs in the form
//!
//! `max bᵀy  s.t.  Z = C - Σ yᵢAᵢ ⪰ 0`,
//!
//! with dense symmetric blocks plus one diagonal (linear) block.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::problem::{ConicProblem, EngineOutcome, FeasibilityEngine, SolverError};

#[derive(Clone, Debug)]
pub struct HkmEngine {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    /// Upper cap on the common margin.
    pub t_max: f64,
    /// Stop early once the margin is provably below this value.
    pub stop_below: Option<f64>,
}

impl Default for HkmEngine {
    fn default() -> Self {
        Self { max_iter: 120, gap_tol: 1e-9, feas_tol: 1e-9, t_max: 1.0, stop_below: Some(-1e-3) }
    }
}

pub(super) struct Block {
    pub(super) c: DMatrix<f64>,
    /// Per variable: full symmetric entry list.
    pub(super) a: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

pub(super) struct Sdp {
    pub(super) m: usize,
    pub(super) blocks: Vec<Block>,
    pub(super) lp_c: DVector<f64>,
    /// Per LP row: `(var, coeff)`.
    pub(super) lp_rows: Vec<Vec<(usize, f64)>>,
    pub(super) b: DVector<f64>,
}

fn full_entries(e: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(2 * e.len());
    for &(r, c, v) in e {
        out.push((r, c, v));
        if r != c {
            out.push((c, r, v));
        }
    }
    out
}

impl Sdp {
    pub(super) fn from_problem(p: &ConicProblem, t_max: f64) -> Self {
        let nv = p.n_vars();
        let m = nv + 1;
        let t = nv;
        let mut blocks = Vec::new();
        let mut lp_c = Vec::new();
        let mut lp_rows = Vec::new();
        for mc in &p.matrices {
            let d = mc.expr.dim();
            if d == 1 {
                let mut row: Vec<(usize, f64)> = mc
                    .expr
                    .terms
                    .iter()
                    .map(|(i, e)| (*i, -e.iter().map(|x| x.2).sum::<f64>()))
                    .collect();
                if mc.weight > 0.0 {
                    row.push((t, mc.weight));
                }
                lp_c.push(mc.expr.constant[(0, 0)] - mc.margin);
                lp_rows.push(row);
                continue;
            }
            let c = &mc.expr.constant - DMatrix::identity(d, d) * mc.margin;
            let mut a: Vec<(usize, Vec<(usize, usize, f64)>)> = mc
                .expr
                .terms
                .iter()
                .map(|(i, e)| (*i, full_entries(&e.iter().map(|&(r, c, v)| (r, c, -v)).collect::<Vec<_>>())))
                .collect();
            if mc.weight > 0.0 {
                a.push((t, (0..d).map(|k| (k, k, mc.weight)).collect()));
            }
            blocks.push(Block { c: crate::linalg::sym(&c), a });
        }
        for sc in &p.scalars {
            let mut row: Vec<(usize, f64)> = sc.expr.terms.iter().map(|(i, c)| (*i, -c)).collect();
            if sc.weight > 0.0 {
                row.push((t, sc.weight));
            }
            lp_c.push(sc.expr.constant - sc.margin);
            lp_rows.push(row);
        }
        let r = p.variable_bound;
        for i in 0..nv {
            lp_c.push(r);
            lp_rows.push(vec![(i, 1.0)]);
            lp_c.push(r);
            lp_rows.push(vec![(i, -1.0)]);
        }
        lp_c.push(t_max);
        lp_rows.push(vec![(t, 1.0)]);
        lp_c.push(r);
        lp_rows.push(vec![(t, -1.0)]);
        let mut b = DVector::zeros(m);
        b[t] = 1.0;
        Self { m, blocks, lp_c: DVector::from_vec(lp_c), lp_rows, b }
    }

    /// `Σ yᵢAᵢ` per block and for the LP part.
    fn adjoint(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mats = self
            .blocks
            .iter()
            .map(|bl| {
                let d = bl.c.nrows();
                let mut m = DMatrix::zeros(d, d);
                for (i, e) in &bl.a {
                    let yi = y[*i];
                    if yi != 0.0 {
                        for &(r, c, v) in e {
                            m[(r, c)] += yi * v;
                        }
                    }
                }
                m
            })
            .collect();
        let lp = DVector::from_iterator(
            self.lp_rows.len(),
            self.lp_rows.iter().map(|row| row.iter().map(|(i, a)| a * y[*i]).sum::<f64>()),
        );
        (mats, lp)
    }

    /// `⟨Aᵢ, Y⟩` for all `i`, given per-block matrices and LP values.
    fn apply(&self, ys: &[DMatrix<f64>], lp: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (bl, y) in self.blocks.iter().zip(ys) {
            for (i, e) in &bl.a {
                out[*i] += e.iter().map(|&(r, c, v)| v * y[(r, c)]).sum::<f64>();
            }
        }
        for (row, v) in self.lp_rows.iter().zip(lp.iter()) {
            for (i, a) in row {
                out[*i] += a * v;
            }
        }
        out
    }
}

/// Largest `α` with `X + αΔX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let linv = l.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(l.nrows(), l.ncols()));
    let s = &linv * dx * linv.transpose();
    let lmin = crate::linalg::lambda_min(&s);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(xi, d)| -xi / d)
        .fold(f64::INFINITY, f64::min)
}

fn chol(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(crate::linalg::sym(m))
}

impl FeasibilityEngine for HkmEngine {
    fn name(&self) -> String {
        "hkm-ipm".into()
    }

    fn solve(&self, problem: &ConicProblem) -> Result<EngineOutcome, SolverError> {
        let sdp = Sdp::from_problem(problem, self.t_max);
        self.run(&sdp)
    }
}

impl HkmEngine {
    fn run(&self, sdp: &Sdp) -> Result<EngineOutcome, SolverError> {
        let m = sdp.m;
        let nb = sdp.blocks.len();
        let nlp = sdp.lp_c.len();
        let total_dim: usize = sdp.blocks.iter().map(|b| b.c.nrows()).sum::<usize>() + nlp;

        // starting point
        let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut zs: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for bl in &sdp.blocks {
            let d = bl.c.nrows();
            let dn = (d as f64).sqrt();
            let mut amax: f64 = 0.0;
            let mut ratio: f64 = 0.0;
            for (i, e) in &bl.a {
                let norm = e.iter().map(|x| x.2 * x.2).sum::<f64>().sqrt();
                amax = amax.max(norm);
                ratio = ratio.max((1.0 + sdp.b[*i].abs()) / (1.0 + norm));
            }
            let xi = 10f64.max(dn).max(d as f64 * ratio);
            let eta = 10f64.max(dn).max(amax).max(bl.c.norm());
            xs.push(DMatrix::identity(d, d) * xi);
            zs.push(DMatrix::identity(d, d) * eta);
        }
        let mut x_lp = DVector::from_element(nlp, 0.0);
        let mut z_lp = DVector::from_element(nlp, 0.0);
        for r in 0..nlp {
            let amax = sdp.lp_rows[r].iter().map(|x| x.1.abs()).fold(0.0, f64::max);
            x_lp[r] = 10.0;
            z_lp[r] = 10f64.max(amax).max(sdp.lp_c[r].abs());
        }
        let mut y = DVector::zeros(m);
        let b_norm = sdp.b.norm();
        let c_norm = sdp.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>().sqrt().max(sdp.lp_c.norm());

        let mut status = "max iterations".to_string();
        let mut upper_bound = None;
        let mut iterations = 0;
        let mut stalls = 0;
        for it in 0..self.max_iter {
            iterations = it + 1;
            let (ay_m, ay_lp) = sdp.adjoint(&y);
            let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| &sdp.blocks[k].c - &zs[k] - &ay_m[k]).collect();
            let rd_lp = &sdp.lp_c - &z_lp - &ay_lp;
            let ax = sdp.apply(&xs, &x_lp);
            let rp = &sdp.b - &ax;
            let gap: f64 = (0..nb).map(|k| xs[k].dot(&zs[k])).sum::<f64>() + x_lp.dot(&z_lp);
            let mu = gap / total_dim as f64;
            let pobj: f64 = (0..nb).map(|k| sdp.blocks[k].c.dot(&xs[k])).sum::<f64>() + sdp.lp_c.dot(&x_lp);
            let dobj = sdp.b.dot(&y);
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_lp.norm_squared()).sqrt() / (1.0 + c_norm);
            let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            if pinf < 1e-6 {
                upper_bound = Some(pobj);
            }
            if pinf < self.feas_tol && dinf < self.feas_tol && relgap < self.gap_tol {
                status = "converged".into();
                break;
            }
            if let Some(th) = self.stop_below {
                if pinf < 1e-8 && dinf < 1e-8 && pobj < th {
                    status = "margin provably negative".into();
                    break;
                }
            }

            // factorizations
            let mut zinv = Vec::with_capacity(nb);
            let mut xl = Vec::with_capacity(nb);
            let mut zl = Vec::with_capacity(nb);
            for k in 0..nb {
                let cz = chol(&zs[k]).ok_or_else(|| SolverError::Numerical("Z lost definiteness".into()))?;
                let cx = chol(&xs[k]).ok_or_else(|| SolverError::Numerical("X lost definiteness".into()))?;
                zinv.push(crate::linalg::sym(&cz.inverse()));
                zl.push(cz.l());
                xl.push(cx.l());
            }

            // Schur complement
            let mut schur: DMatrix<f64> = DMatrix::zeros(m, m);
            for k in 0..nb {
                let bl = &sdp.blocks[k];
                let d = bl.c.nrows();
                let x = &xs[k];
                let zi = &zinv[k];
                for (ii, (i, ei)) in bl.a.iter().enumerate() {
                    // W = X Aᵢ Z⁻¹
                    let mut t = DMatrix::zeros(d, d);
                    let mut cols = vec![false; d];
                    for &(r, c, v) in ei {
                        let mut col = t.column_mut(c);
                        col.axpy(v, &x.column(r), 1.0);
                        cols[c] = true;
                    }
                    let mut w = DMatrix::zeros(d, d);
                    for (c, used) in cols.iter().enumerate() {
                        if *used {
                            let tc = t.column(c).into_owned();
                            let zr = zi.row(c).into_owned();
                            w.ger(1.0, &tc, &zr.transpose(), 1.0);
                        }
                    }
                    for (j, ej) in bl.a[ii..].iter() {
                        let v: f64 = ej.iter().map(|&(r, c, a)| a * w[(c, r)]).sum();
                        schur[(*i, *j)] += v;
                        if i != j {
                            schur[(*j, *i)] += v;
                        }
                    }
                }
            }
            for (r, row) in sdp.lp_rows.iter().enumerate() {
                let s = x_lp[r] / z_lp[r];
                for (i, a) in row {
                    for (j, b) in row {
                        schur[(*i, *j)] += a * b * s;
                    }
                }
            }
            let diag_max = (0..m).map(|i| schur[(i, i)].abs()).fold(0.0, f64::max);
            let mut reg = 0.0;
            let schur_chol = loop {
                let mut s = schur.clone();
                for i in 0..m {
                    s[(i, i)] += reg;
                }
                if let Some(c) = Cholesky::new(s) {
                    break c;
                }
                reg = if reg == 0.0 { 1e-14 * diag_max.max(1e-300) } else { reg * 100.0 };
                if reg > 1e-2 * diag_max.max(1.0) {
                    return Err(SolverError::Numerical("Schur complement is singular".into()));
                }
            };

            // X Rd Z⁻¹ part of the right-hand side
            let xrz: Vec<DMatrix<f64>> = (0..nb).map(|k| &xs[k] * &rd[k] * &zinv[k]).collect();
            let xrz_lp = x_lp.component_mul(&rd_lp).component_div(&z_lp);

            let direction = |sigma_mu: f64,
                             corr: Option<(&[DMatrix<f64>], &DVector<f64>)>|
             -> (DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>) {
                let mut g_m: Vec<DMatrix<f64>> = xrz.clone();
                let mut g_lp = xrz_lp.clone();
                for k in 0..nb {
                    g_m[k] -= &zinv[k] * sigma_mu;
                }
                g_lp -= z_lp.map(|z| sigma_mu / z);
                if let Some((cm, clp)) = corr {
                    for k in 0..nb {
                        g_m[k] += &cm[k];
                    }
                    g_lp += clp;
                }
                let rhs = &sdp.b + sdp.apply(&g_m, &g_lp);
                let dy = schur_chol.solve(&rhs);
                let (ady_m, ady_lp) = sdp.adjoint(&dy);
                let dz: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - &ady_m[k]).collect();
                let dz_lp = &rd_lp - &ady_lp;
                let dx: Vec<DMatrix<f64>> = (0..nb)
                    .map(|k| {
                        let mut d = &zinv[k] * sigma_mu - &xs[k] - &xs[k] * &dz[k] * &zinv[k];
                        if let Some((cm, _)) = corr {
                            d -= &cm[k];
                        }
                        crate::linalg::sym(&d)
                    })
                    .collect();
                let mut dx_lp = DVector::zeros(nlp);
                for r in 0..nlp {
                    dx_lp[r] = sigma_mu / z_lp[r] - x_lp[r] - x_lp[r] * dz_lp[r] / z_lp[r];
                    if let Some((_, clp)) = corr {
                        dx_lp[r] -= clp[r];
                    }
                }
                (dy, dx, dx_lp, dz, dz_lp)
            };
            let steps = |dx: &[DMatrix<f64>], dx_lp: &DVector<f64>, dz: &[DMatrix<f64>], dz_lp: &DVector<f64>| {
                let mut ap = max_step_lp(&x_lp, dx_lp);
                let mut ad = max_step_lp(&z_lp, dz_lp);
                for k in 0..nb {
                    ap = ap.min(max_step(&xl[k], &dx[k]));
                    ad = ad.min(max_step(&zl[k], &dz[k]));
                }
                (ap, ad)
            };

            // predictor
            let (_, dxa, dxa_lp, dza, dza_lp) = direction(0.0, None);
            let (apa, ada) = steps(&dxa, &dxa_lp, &dza, &dza_lp);
            let apa = apa.min(1.0);
            let ada = ada.min(1.0);
            let mut gap_aff = 0.0;
            for k in 0..nb {
                gap_aff += (&xs[k] + &dxa[k] * apa).dot(&(&zs[k] + &dza[k] * ada));
            }
            gap_aff += (&x_lp + &dxa_lp * apa).dot(&(&z_lp + &dza_lp * ada));
            let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

            // corrector
            let corr_m: Vec<DMatrix<f64>> = (0..nb).map(|k| &dxa[k] * &dza[k] * &zinv[k]).collect();
            let corr_lp = dxa_lp.component_mul(&dza_lp).component_div(&z_lp);
            let (dy, dx, dx_lp, dz, dz_lp) = direction(sigma * mu, Some((&corr_m, &corr_lp)));
            let (ap, ad) = steps(&dx, &dx_lp, &dz, &dz_lp);
            let tau = 0.9 + 0.09 * apa.min(ada);
            let ap = (tau * ap).min(1.0);
            let ad = (tau * ad).min(1.0);
            for k in 0..nb {
                xs[k] += &dx[k] * ap;
                zs[k] += &dz[k] * ad;
                xs[k] = crate::linalg::sym(&xs[k]);
                zs[k] = crate::linalg::sym(&zs[k]);
            }
            x_lp += &dx_lp * ap;
            z_lp += &dz_lp * ad;
            y += &dy * ad;
            if ap < 1e-8 && ad < 1e-8 {
                stalls += 1;
                if stalls >= 3 {
                    status = "stalled".into();
                    break;
                }
            } else {
                stalls = 0;
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(SolverError::Numerical("iterate diverged".into()));
            }
        }
        let t = y[m - 1];
        Ok(EngineOutcome {
            x: y.iter().take(m - 1).copied().collect(),
            t,
            upper_bound,
            iterations,
            status,
        })
    }
}
