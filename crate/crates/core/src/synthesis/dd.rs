//! Delay-dependent conditions built on the discretized functional
//!
//! ```text
//! V = xᵀPx + ∫_{t−h/r}^{t} ∫_θ^t ẋᵀRẋ ds dθ + ∫_{t−h/r}^{t} ζᵀQζ ds,
//! ζ(s) = [x(s); x(s − h/r); …; x(s − (r−1)h/r)]
//! ```
//!
//! over the extended vector `ξ = [ẋ; x(t); x(t − h/r); …; x(t − h)]`. The
//! closed loop is `S ξ = 0` with `S = [−I, A, 0, …, 0, A_d + BK]`, and the
//! projection form of the condition is `Γ + ⟨X S⟩ ≺ 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Gain, LinearModel};
use crate::sdp::{self, Assignment, LmiProblem, SolverOptions, SymMatrix, VarId};

/// Bisection bracket and resolution for delay maximization, seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySearch {
    pub h_min: f64,
    pub h_max: f64,
    pub tol: f64,
}

impl Default for DelaySearch {
    fn default() -> Self {
        Self { h_min: 1e-3, h_max: 5.0, tol: 1e-3 }
    }
}

/// How the projection slack `X` is shared across the models of a robust
/// condition. `P`, `Q`, `R` (the functional) are always common.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlackMode {
    /// One `X` for all models.
    #[default]
    Shared,
    /// One `X` per model.
    PerVertex,
}

/// Lyapunov-Krasovskii certificate of a delay-dependent condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DdCertificate {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r_mat: DMatrix<f64>,
    /// Slacks of order `(r+2)n × n`: a single entry when shared, one per
    /// model otherwise.
    pub x: Vec<DMatrix<f64>>,
    /// Delay partition count.
    pub r: usize,
    /// Delay at which the condition holds.
    pub h: f64,
    pub margin: f64,
    /// Interior-point iterations of the solve that produced it.
    pub iterations: usize,
}

/// Numeric `Γ(P, Q, R, h)` of order `(r+2)n`.
pub fn build_gamma(p: &SymMatrix, q: &SymMatrix, r_mat: &SymMatrix, h: f64, r: usize, n: usize) -> Result<SymMatrix> {
    if r == 0 || !(h > 0.0) {
        return Err(Error::InvalidParams(format!("need r ≥ 1 and h > 0 (r = {r}, h = {h})")));
    }
    if p.order() != n || r_mat.order() != n || q.order() != r * n {
        return Err(Error::Dimension(format!(
            "P {}, Q {}, R {} for n = {n}, r = {r}",
            p.order(),
            q.order(),
            r_mat.order()
        )));
    }
    let rf = r as f64;
    let order = (r + 2) * n;
    let mut g = DMatrix::zeros(order, order);
    let rm = r_mat.as_matrix();
    let mut add = |row: usize, col: usize, m: &DMatrix<f64>| {
        let mut v = g.view_mut((row * n, col * n), m.shape());
        v += m;
    };
    add(0, 0, &(rm * (h / rf)));
    add(0, 1, p.as_matrix());
    add(1, 0, p.as_matrix());
    add(1, 1, &(rm * (-rf / h)));
    add(2, 2, &(rm * (-rf / h)));
    add(1, 2, &(rm * (rf / h)));
    add(2, 1, &(rm * (rf / h)));
    {
        let mut v = g.view_mut((n, n), (r * n, r * n));
        v += q.as_matrix();
    }
    {
        let mut v = g.view_mut((2 * n, 2 * n), (r * n, r * n));
        v -= q.as_matrix();
    }
    SymMatrix::new(g)
}

/// `S = [−I, A, 0_{n×(r−1)n}, A_d + BK]`.
pub fn build_s(model: &LinearModel, gain: &Gain, r: usize) -> Result<DMatrix<f64>> {
    if r == 0 {
        return Err(Error::InvalidParams("r must be at least 1".into()));
    }
    let n = model.n();
    let mut s = DMatrix::zeros(n, (r + 2) * n);
    s.view_mut((0, 0), (n, n)).copy_from(&(-DMatrix::<f64>::identity(n, n)));
    s.view_mut((0, n), (n, n)).copy_from(&model.a);
    s.view_mut((0, (r + 1) * n), (n, n)).copy_from(&model.closed_loop_delayed(gain));
    Ok(s)
}

/// Variable handles of a delay-dependent LMI.
#[derive(Debug, Clone)]
pub struct DdVars {
    pub p: VarId,
    pub q: VarId,
    pub r: VarId,
    /// Slack variables of the analysis form (empty in the synthesis form).
    pub x: Vec<VarId>,
    /// Present in the synthesis form.
    pub k: Option<VarId>,
}

/// What is held fixed in `Γ + ⟨X·S(K)⟩ ≺ 0`.
#[derive(Debug, Clone, Copy)]
pub enum DdForm<'a> {
    /// Gain fixed, slack free.
    Analysis(&'a Gain, SlackMode),
    /// Slack fixed (one shared matrix or one per model), gain free.
    Synthesis(&'a [DMatrix<f64>]),
}

fn add_gamma_terms(prob: &LmiProblem, c: &mut sdp::LmiConstraint, v: &DdVars, h: f64, r: usize, n: usize) -> Result<()> {
    let rf = r as f64;
    let id = DMatrix::identity(n, n);
    c.add_scaled(prob, 0, v.r, h / rf)?;
    // P at (1,2)/(2,1)
    c.add_term(prob, 0, n, id.clone(), v.p, id.clone())?;
    c.add_scaled(prob, n, v.r, -rf / h)?;
    c.add_scaled(prob, 2 * n, v.r, -rf / h)?;
    c.add_term(prob, n, 2 * n, id.clone() * (rf / h), v.r, id.clone())?;
    let idq = DMatrix::identity(r * n, r * n);
    c.add_sym_term(prob, n, idq.clone(), v.q, idq.clone())?;
    c.add_sym_term(prob, 2 * n, -idq.clone(), v.q, idq)?;
    Ok(())
}

/// Assembles the delay-dependent condition at delay `h` for all `models`
/// with common `P, Q, R` and common slack/gain.
pub fn dd_problem(models: &[LinearModel], form: DdForm<'_>, r: usize, h: f64) -> Result<(LmiProblem, DdVars)> {
    if r == 0 || !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParams(format!("need r ≥ 1 and h > 0 (r = {r}, h = {h})")));
    }
    let first = models.first().ok_or_else(|| Error::Dimension("no models given".into()))?;
    let n = first.n();
    let m_in = first.m();
    if models.iter().any(|m| m.n() != n || m.m() != m_in) {
        return Err(Error::Dimension("inconsistent model dimensions".into()));
    }
    let order = (r + 2) * n;
    let mut prob = LmiProblem::new();
    let p = prob.symmetric("P", n, true)?;
    let q = prob.symmetric("Q", r * n, true)?;
    let rv = prob.symmetric("R", n, true)?;
    let mut vars = DdVars { p, q, r: rv, x: Vec::new(), k: None };
    match form {
        DdForm::Analysis(_, SlackMode::Shared) => vars.x.push(prob.rectangular("X", order, n)?),
        DdForm::Analysis(_, SlackMode::PerVertex) => {
            for i in 0..models.len() {
                vars.x.push(prob.rectangular(&format!("X[{i}]"), order, n)?);
            }
        }
        DdForm::Synthesis(xs) => {
            if xs.len() != 1 && xs.len() != models.len() {
                return Err(Error::Dimension(format!(
                    "{} slacks for {} models",
                    xs.len(),
                    models.len()
                )));
            }
            for x in xs {
                if x.shape() != (order, n) {
                    return Err(Error::Dimension(format!("slack {:?}, expected {:?}", x.shape(), (order, n))));
                }
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidParams("non-finite slack".into()));
                }
            }
            vars.k = Some(prob.rectangular("K", m_in, n)?);
        }
    }
    for (i, m) in models.iter().enumerate() {
        let mut c = prob.constraint(format!("dd[{i}]"), order);
        add_gamma_terms(&prob, &mut c, &vars, h, r, n)?;
        match form {
            DdForm::Analysis(gain, _) => {
                let s = build_s(m, gain, r)?;
                let x = vars.x[i.min(vars.x.len() - 1)];
                c.add_term(&prob, 0, 0, DMatrix::identity(order, order), x, s)?;
            }
            DdForm::Synthesis(xs) => {
                let x = &xs[i.min(xs.len() - 1)];
                let s0 = build_s(m, &Gain::zero(n), r)?;
                let xs = x * s0;
                c.add_constant(0, 0, &(&xs + xs.transpose()))?;
                c.add_term(&prob, 0, (r + 1) * n, x * &m.b, vars.k.unwrap(), DMatrix::identity(n, n))?;
            }
        }
        prob.add_constraint(c)?;
    }
    Ok((prob, vars))
}

/// Analysis LMI with `K` fixed; returns the certificate or `NoCertificate`.
pub fn dd_analysis_step(
    models: &[LinearModel],
    gain: &Gain,
    r: usize,
    h: f64,
    slack: SlackMode,
    opts: &SolverOptions,
) -> Result<DdCertificate> {
    if !gain.is_finite() {
        return Err(Error::InvalidParams("non-finite gain".into()));
    }
    let (prob, v) = dd_problem(models, DdForm::Analysis(gain, slack), r, h)?;
    let sol = sdp::solve_feasibility(&prob, opts)?;
    if !sol.is_certified() {
        return Err(Error::NoCertificate { margin: sol.margin });
    }
    let a = &sol.assignment;
    Ok(DdCertificate {
        p: a.get(v.p).clone(),
        q: a.get(v.q).clone(),
        r_mat: a.get(v.r).clone(),
        x: v.x.iter().map(|&id| a.get(id).clone()).collect(),
        r,
        h,
        margin: sol.margin,
        iterations: sol.iterations,
    })
}

/// Re-evaluates the analysis LMI of `(models, gain)` at a candidate
/// certificate; returns the measured margin (negative if it fails).
pub fn dd_check_certificate(models: &[LinearModel], gain: &Gain, cert: &DdCertificate) -> Result<f64> {
    let mode = if cert.x.len() == 1 { SlackMode::Shared } else { SlackMode::PerVertex };
    let (prob, v) = dd_problem(models, DdForm::Analysis(gain, mode), cert.r, cert.h)?;
    let mut a = Assignment::zeros(&prob);
    if v.x.len() != cert.x.len()
        || a.get(v.q).shape() != cert.q.shape()
        || v.x.iter().zip(&cert.x).any(|(&id, x)| a.get(id).shape() != x.shape())
    {
        return Err(Error::Dimension("certificate does not match the problem".into()));
    }
    a.set(v.p, cert.p.clone());
    a.set(v.q, cert.q.clone());
    a.set(v.r, cert.r_mat.clone());
    for (&id, x) in v.x.iter().zip(&cert.x) {
        a.set(id, x.clone());
    }
    Ok(sdp::measured_margin(&prob, &a))
}

/// Synthesis LMI with the slack fixed. The returned gain is re-checked on
/// the analysis LMI at the same `(P, Q, R, X)` before being returned.
pub fn dd_synthesis_step(
    models: &[LinearModel],
    x: &[DMatrix<f64>],
    r: usize,
    h: f64,
    opts: &SolverOptions,
) -> Result<(Gain, DdCertificate)> {
    let (prob, v) = dd_problem(models, DdForm::Synthesis(x), r, h)?;
    let sol = sdp::solve_feasibility(&prob, opts)?;
    if !sol.is_certified() {
        return Err(Error::NoCertificate { margin: sol.margin });
    }
    let a = &sol.assignment;
    let k = a.get(v.k.unwrap());
    let gain = Gain::new(k.row(0).iter().copied().collect());
    let cert = DdCertificate {
        p: a.get(v.p).clone(),
        q: a.get(v.q).clone(),
        r_mat: a.get(v.r).clone(),
        x: x.to_vec(),
        r,
        h,
        margin: sol.margin,
        iterations: sol.iterations,
    };
    let margin = dd_check_certificate(models, &gain, &cert)?;
    if margin < opts.feas_tol {
        return Err(Error::NoCertificate { margin });
    }
    Ok((gain, DdCertificate { margin, ..cert }))
}

/// Largest delay in the bracket at which the analysis LMI certifies the
/// closed loop, with the certificate found there. `None` when the lower
/// end of the bracket already fails.
pub fn dd_max_delay(
    models: &[LinearModel],
    gain: &Gain,
    r: usize,
    slack: SlackMode,
    search: &DelaySearch,
    opts: &SolverOptions,
) -> Result<Option<DdCertificate>> {
    let probe = |h: f64| -> Result<Option<DdCertificate>> {
        match dd_analysis_step(models, gain, r, h, slack, opts) {
            Ok(c) => Ok(Some(c)),
            Err(Error::NoCertificate { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let Some(lo_cert) = probe(search.h_min)? else {
        return Ok(None);
    };
    maximize_delay(search.h_min, lo_cert, search, probe).map(Some)
}

/// Bisection for the largest feasible `h` given a feasible `lo`. The
/// returned certificate is always one that was actually found.
pub(crate) fn maximize_delay<C, F>(lo: f64, lo_cert: C, search: &DelaySearch, mut probe: F) -> Result<C>
where
    F: FnMut(f64) -> Result<Option<C>>,
{
    let mut lo = lo;
    let mut best = lo_cert;
    let mut hi = search.h_max;
    if hi <= lo {
        return Ok(best);
    }
    if let Some(c) = probe(hi)? {
        return Ok(c);
    }
    while hi - lo > search.tol {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            Some(c) => {
                lo = mid;
                best = c;
            }
            None => hi = mid,
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, v: &[f64]) -> SymMatrix {
        SymMatrix::new(DMatrix::from_row_slice(n, n, v)).unwrap()
    }

    #[test]
    fn gamma_r1_scalar() {
        let one = sym(1, &[1.0]);
        let g = build_gamma(&one, &one, &one, 1.0, 1, 1).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, -2.0]);
        assert_eq!(g.as_matrix(), &expect);
    }

    #[test]
    fn gamma_r2_without_q() {
        let one = sym(1, &[1.0]);
        let q = SymMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let g = build_gamma(&one, &q, &one, 2.0, 2, 1).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        assert_eq!(g.as_matrix(), &expect);
    }

    #[test]
    fn gamma_dimension_errors() {
        let one = sym(1, &[1.0]);
        assert!(build_gamma(&one, &one, &one, 1.0, 2, 1).is_err());
        assert!(build_gamma(&one, &one, &one, 0.0, 1, 1).is_err());
    }

    #[test]
    fn s_layout() {
        let m = LinearModel::scalar(2.0, 3.0, 0.0, 1.0);
        let g = Gain::zero(1);
        assert_eq!(build_s(&m, &g, 1).unwrap(), DMatrix::from_row_slice(1, 3, &[-1.0, 2.0, 3.0]));
        assert_eq!(build_s(&m, &g, 2).unwrap(), DMatrix::from_row_slice(1, 4, &[-1.0, 2.0, 0.0, 3.0]));
    }

    #[test]
    fn lmi_assembly_matches_numeric_gamma() {
        // Γ + ⟨X S⟩ from the LMI builder equals the hand formula
        let m = LinearModel::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, -2.0]),
            DMatrix::from_row_slice(2, 2, &[0.1, -0.4, 0.0, 0.5]),
            DMatrix::from_row_slice(2, 1, &[1.0, -0.5]),
            1.0,
        )
        .unwrap();
        let gain = Gain::new(vec![0.3, -0.2]);
        for r in 1..=3 {
            let n = 2;
            let (prob, v) = dd_problem(std::slice::from_ref(&m), DdForm::Analysis(&gain, SlackMode::Shared), r, 0.7).unwrap();
            let mut a = Assignment::zeros(&prob);
            let pm = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
            let rm = DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 0.7]);
            let qm = DMatrix::from_fn(r * n, r * n, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 });
            let xm = DMatrix::from_fn((r + 2) * n, n, |i, j| (i as f64 - j as f64) * 0.13);
            a.set(v.p, pm.clone());
            a.set(v.q, qm.clone());
            a.set(v.r, rm.clone());
            a.set(v.x[0], xm.clone());
            let f = prob.constraints()[0].evaluate(&a);
            let gamma = build_gamma(
                &SymMatrix::new(pm.clone()).unwrap(),
                &SymMatrix::new(qm.clone()).unwrap(),
                &SymMatrix::new(rm.clone()).unwrap(),
                0.7,
                r,
                n,
            )
            .unwrap();
            let s = build_s(&m, &gain, r).unwrap();
            let xs = &xm * &s;
            let expect = gamma.as_matrix() + &xs + xs.transpose();
            assert!((&f - &expect).amax() < 1e-12, "r = {r}");

            // synthesis form with the same X and K gives the same matrix
            let (sprob, sv) = dd_problem(std::slice::from_ref(&m), DdForm::Synthesis(std::slice::from_ref(&xm)), r, 0.7).unwrap();
            let mut sa = Assignment::zeros(&sprob);
            sa.set(sv.p, pm.clone());
            sa.set(sv.q, qm);
            sa.set(sv.r, rm);
            sa.set(sv.k.unwrap(), gain.row(2));
            let fs = sprob.constraints()[0].evaluate(&sa);
            assert!((&fs - &expect).amax() < 1e-12, "synthesis r = {r}");
        }
    }

    #[test]
    fn pure_delay_scalar() {
        // ẋ = −x(t−h) is stable iff h < π/2
        let m = LinearModel::scalar(0.0, -1.0, 0.0, 1.0);
        let opts = SolverOptions::default();
        let one = std::slice::from_ref(&m);
        dd_analysis_step(one, &Gain::zero(1), 1, 1.4, SlackMode::Shared, &opts).unwrap();
        assert!(dd_analysis_step(one, &Gain::zero(1), 1, 1.6, SlackMode::Shared, &opts).is_err());
    }

    #[test]
    fn zero_slack_synthesis_fails() {
        let m = LinearModel::scalar(-1.0, 0.0, 1.0, 1.0);
        let x = [DMatrix::zeros(3, 1)];
        let r = dd_synthesis_step(std::slice::from_ref(&m), &x, 1, 0.5, &SolverOptions::default());
        assert!(matches!(r, Err(Error::NoCertificate { .. })));
    }

    #[test]
    fn bisection_finds_threshold() {
        let s = DelaySearch { h_min: 0.0, h_max: 5.0, tol: 1e-3 };
        let h = maximize_delay(0.0, 0.0, &s, |h| Ok((h <= 1.234).then_some(h))).unwrap();
        assert!(h <= 1.234 && h > 1.234 - 2e-3);
        let h = maximize_delay(0.0, 0.0, &s, |h| Ok(Some(h))).unwrap();
        assert_eq!(h, 5.0);
    }
}
