//! Infeasible-start primal-dual path-following method for block-diagonal
//! SDPs in inequality form
//!
//! ```text
//! max  bᵀy   s.t.  Z_k = C_k − Σᵢ yᵢ A_ik ⪰ 0   for every block k
//! ```
//!
//! paired with the primal `min Σ⟨C_k, X_k⟩ s.t. Σ_k⟨A_ik, X_k⟩ = bᵢ, X_k ⪰ 0`.
//! Search directions are the HKM directions with a Mehrotra
//! predictor-corrector. Problems here are tiny (tens of unknowns, blocks of
//! order ≤ 20), so everything is dense.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub c: DMatrix<f64>,
    /// Sparse list of `(unknown index, A_ik)`; unknowns not listed have a
    /// zero coefficient in this block.
    pub a: Vec<(usize, DMatrix<f64>)>,
}

impl Block {
    pub fn order(&self) -> usize {
        self.c.nrows()
    }

    /// `C − Σ yᵢ Aᵢ`.
    pub fn slack(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut z = self.c.clone();
        for (i, a) in &self.a {
            z -= a * y[*i];
        }
        z
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConicProblem {
    pub blocks: Vec<Block>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    /// Final dual iterate; callers track their own best point through the monitor.
    #[cfg_attr(not(test), allow(dead_code))]
    pub y: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate monitor: sees every dual iterate `y`, returns `true` to stop.
pub(crate) trait Monitor {
    fn observe(&mut self, y: &DVector<f64>) -> bool;
}

impl<F: FnMut(&DVector<f64>) -> bool> Monitor for F {
    fn observe(&mut self, y: &DVector<f64>) -> bool {
        self(y)
    }
}

fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(A B) = Σ A_ij B_ji
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest `α` keeping `S + α·dS ⪰ 0`, given the Cholesky factor
/// of `S`. Returns `f64::INFINITY` when the direction never leaves the cone.
fn max_step(chol: &Cholesky<f64, Dyn>, ds: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let mut w = &linv * ds * linv.transpose();
    symmetrize(&mut w);
    let lmin = SymmetricEigen::new(w).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
}

pub(crate) fn solve(
    problem: &ConicProblem,
    settings: IpmSettings,
    monitor: &mut dyn Monitor,
) -> IpmOutcome {
    let m = problem.b.len();
    let blocks = &problem.blocks;
    let n_total: usize = blocks.iter().map(Block::order).sum();
    let b_norm = problem.b.norm();
    let c_norm = blocks
        .iter()
        .map(|bl| bl.c.norm_squared())
        .sum::<f64>()
        .sqrt();

    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
    let mut zs: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
    for bl in blocks {
        let n = bl.order();
        let sn = (n as f64).sqrt();
        let mut xi = 10f64.max(sn);
        let mut eta = 10f64.max(sn).max(bl.c.norm());
        for (i, a) in &bl.a {
            let an = a.norm();
            xi = xi.max(sn * (1.0 + problem.b[*i].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        xs.push(DMatrix::identity(n, n) * xi);
        zs.push(DMatrix::identity(n, n) * eta);
    }
    let mut y = DVector::zeros(m);

    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = 0;

    while iterations < settings.max_iter {
        // residuals
        let mut rp = problem.b.clone();
        let mut rd: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut pobj = 0.0;
        let mut xz = 0.0;
        for (k, bl) in blocks.iter().enumerate() {
            for (i, a) in &bl.a {
                rp[*i] -= trace_prod(a, &xs[k]);
            }
            let mut r = bl.slack(&y) - &zs[k];
            symmetrize(&mut r);
            rd.push(r);
            pobj += trace_prod(&bl.c, &xs[k]);
            xz += trace_prod(&xs[k], &zs[k]);
        }
        let dobj = problem.b.dot(&y);
        let mu = xz / n_total as f64;
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        if monitor.observe(&y) {
            break;
        }
        if gap < settings.gap_tol && pinf < settings.feas_tol && dinf < settings.feas_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let Some(zchol) = zs
            .iter()
            .map(|z| Cholesky::new(z.clone()))
            .collect::<Option<Vec<_>>>()
        else {
            break;
        };
        let Some(xchol) = xs
            .iter()
            .map(|x| Cholesky::new(x.clone()))
            .collect::<Option<Vec<_>>>()
        else {
            break;
        };
        let zinv: Vec<DMatrix<f64>> = zchol.iter().map(|c| c.inverse()).collect();

        // Schur complement M_ij = Σ_k tr(A_i X A_j Z⁻¹)
        let mut schur = DMatrix::zeros(m, m);
        for (k, bl) in blocks.iter().enumerate() {
            let xa: Vec<DMatrix<f64>> = bl.a.iter().map(|(_, a)| &xs[k] * a * &zinv[k]).collect();
            for (p, (i, ai)) in bl.a.iter().enumerate() {
                for (q, (j, _)) in bl.a.iter().enumerate().skip(p) {
                    let v = trace_prod(ai, &xa[q]);
                    schur[(*i, *j)] += v;
                    if p != q {
                        schur[(*j, *i)] += v;
                    }
                }
            }
        }
        symmetrize(&mut schur);
        let diag_max = schur.diagonal().amax().max(1e-300);
        let factor = match Cholesky::new(schur.clone()) {
            Some(c) => Some(c),
            None => {
                let mut reg = schur.clone();
                for i in 0..m {
                    reg[(i, i)] += 1e-11 * diag_max;
                }
                Cholesky::new(reg)
            }
        };
        let Some(factor) = factor else {
            break;
        };

        // 𝒜(X R_d Z⁻¹)
        let mut a_xrz = DVector::zeros(m);
        let xrz: Vec<DMatrix<f64>> = (0..blocks.len()).map(|k| &xs[k] * &rd[k] * &zinv[k]).collect();
        for (k, bl) in blocks.iter().enumerate() {
            for (i, a) in &bl.a {
                a_xrz[*i] += trace_prod(a, &xrz[k]);
            }
        }

        let direction = |g: &[DMatrix<f64>]| -> Direction {
            let mut rhs = &rp + &a_xrz;
            for (k, bl) in blocks.iter().enumerate() {
                for (i, a) in &bl.a {
                    rhs[*i] -= trace_prod(a, &g[k]);
                }
            }
            let dy = factor.solve(&rhs);
            let mut dz = Vec::with_capacity(blocks.len());
            let mut dx = Vec::with_capacity(blocks.len());
            for (k, bl) in blocks.iter().enumerate() {
                let mut d = rd[k].clone();
                for (i, a) in &bl.a {
                    d -= a * dy[*i];
                }
                let mut x = &g[k] - &xs[k] * &d * &zinv[k];
                symmetrize(&mut x);
                dz.push(d);
                dx.push(x);
            }
            Direction { dx, dy, dz }
        };
        let steps = |d: &Direction| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..blocks.len() {
                ap = ap.min(max_step(&xchol[k], &d.dx[k]));
                ad = ad.min(max_step(&zchol[k], &d.dz[k]));
            }
            (ap, ad)
        };

        // predictor
        let g_aff: Vec<DMatrix<f64>> = xs.iter().map(|x| -x).collect();
        let aff = direction(&g_aff);
        let (ap, ad) = steps(&aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut xz_aff = 0.0;
        for k in 0..blocks.len() {
            let xa = &xs[k] + &aff.dx[k] * ap;
            let za = &zs[k] + &aff.dz[k] * ad;
            xz_aff += trace_prod(&xa, &za);
        }
        let mu_aff = (xz_aff / n_total as f64).max(0.0);
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // corrector
        let g: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|k| &zinv[k] * (sigma * mu) - &xs[k] - &aff.dx[k] * &aff.dz[k] * &zinv[k])
            .collect();
        let dir = direction(&g);
        let (ap, ad) = steps(&dir);
        let ap = (0.98 * ap).min(1.0);
        let ad = (0.98 * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
            if stalled > 3 {
                break;
            }
        } else {
            stalled = 0;
        }

        for k in 0..blocks.len() {
            xs[k] += &dir.dx[k] * ap;
            zs[k] += &dir.dz[k] * ad;
            symmetrize(&mut xs[k]);
            symmetrize(&mut zs[k]);
        }
        y += &dir.dy * ad;
    }

    IpmOutcome { y, iterations, converged }
}
