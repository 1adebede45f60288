//! Delay-independent analysis and state-feedback synthesis.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Equilibrium, Gain, LinearModel, NetworkParams, Polytope};
use crate::sdp::{self, LmiProblem, SolverOptions, VarId};

/// `P`, `Q` of the functional `xᵀPx + ∫ xᵀQx` with the achieved margin.
#[derive(Debug, Clone, PartialEq)]
pub struct IodCertificate {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub margin: f64,
    pub iterations: usize,
}

/// Shared synthesis variables of the robust design plus per-vertex
/// re-certifications of the resulting gain.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustIodCertificate {
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub margin: f64,
    pub vertices: Vec<IodCertificate>,
}

/// Synthesis result: gain, synthesis variables and the analysis
/// certificate of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IodSynthesis {
    pub gain: Gain,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub synthesis_margin: f64,
    pub certificate: IodCertificate,
}

fn check_models(models: &[LinearModel]) -> Result<usize> {
    let first = models
        .first()
        .ok_or_else(|| Error::Dimension("no models given".into()))?;
    let n = first.n();
    for m in models {
        if m.a.shape() != (n, n) || m.a_d.shape() != (n, n) || m.b.nrows() != n {
            return Err(Error::Dimension("inconsistent model dimensions".into()));
        }
    }
    Ok(n)
}

/// Builds `[[AᵀP + PA + Q, P·Ãd], [ÃdᵀP, −Q]] ≺ 0` for every model with
/// common `P`, `Q`; `Ãd = A_d + B·K`.
pub fn iod_analysis_problem(models: &[LinearModel], gain: &Gain) -> Result<(LmiProblem, VarId, VarId)> {
    let n = check_models(models)?;
    if !gain.is_finite() {
        return Err(Error::InvalidParams("non-finite gain".into()));
    }
    let mut prob = LmiProblem::new();
    let p = prob.symmetric("P", n, true)?;
    let q = prob.symmetric("Q", n, true)?;
    let id = DMatrix::identity(n, n);
    for (i, m) in models.iter().enumerate() {
        let a_cl = m.closed_loop_delayed(gain);
        let mut c = prob.constraint(format!("iod[{i}]"), 2 * n);
        c.add_term(&prob, 0, 0, id.clone(), p, m.a.clone())?;
        c.add_scaled(&prob, 0, q, 1.0)?;
        c.add_term(&prob, 0, n, id.clone(), p, a_cl)?;
        c.add_scaled(&prob, n, q, -1.0)?;
        prob.add_constraint(c)?;
    }
    Ok((prob, p, q))
}

/// Delay-independent stability test of `ẋ = A x + (A_d + BK) x(t−h)` with a
/// common functional over all `models`.
pub fn iod_analysis(models: &[LinearModel], gain: &Gain, opts: &SolverOptions) -> Result<IodCertificate> {
    let (prob, p, q) = iod_analysis_problem(models, gain)?;
    let sol = sdp::solve_feasibility(&prob, opts)?;
    if !sol.is_certified() {
        return Err(Error::NoCertificate { margin: sol.margin });
    }
    Ok(IodCertificate {
        p: sol.assignment.get(p).clone(),
        q: sol.assignment.get(q).clone(),
        margin: sol.margin,
        iterations: sol.iterations,
    })
}

/// Independent analysis of every polytope vertex (one functional each).
pub fn iod_recertify_vertices(poly: &Polytope, gain: &Gain, opts: &SolverOptions) -> Vec<Result<IodCertificate>> {
    poly.vertices
        .iter()
        .map(|v| iod_analysis(std::slice::from_ref(v), gain, opts))
        .collect()
}

fn synthesis_problem(models: &[LinearModel]) -> Result<(LmiProblem, VarId, VarId, VarId)> {
    let n = check_models(models)?;
    let m_in = models[0].m();
    if models.iter().any(|m| m.m() != m_in) {
        return Err(Error::Dimension("inconsistent input dimensions".into()));
    }
    let mut prob = LmiProblem::new();
    let r = prob.symmetric("R", n, true)?;
    let s = prob.symmetric("S", n, false)?;
    let z = prob.rectangular("Z", m_in, n)?;
    let id = DMatrix::identity(n, n);
    for (i, m) in models.iter().enumerate() {
        let mut c = prob.constraint(format!("iod-syn[{i}]"), 2 * n);
        c.add_term(&prob, 0, 0, m.a.clone(), r, id.clone())?;
        c.add_scaled(&prob, 0, s, 1.0)?;
        c.add_term(&prob, 0, n, m.a_d.clone(), r, id.clone())?;
        c.add_term(&prob, 0, n, m.b.clone(), z, id.clone())?;
        c.add_scaled(&prob, n, s, -1.0)?;
        prob.add_constraint(c)?;
    }
    Ok((prob, r, s, z))
}

const COND_LIMIT: f64 = 1e12;

fn synthesize_common(models: &[LinearModel], opts: &SolverOptions) -> Result<(Gain, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64)> {
    let (prob, r, s, z) = synthesis_problem(models)?;
    let sol = sdp::solve_feasibility(&prob, opts)?;
    if !sol.is_certified() {
        return Err(Error::NoCertificate { margin: sol.margin });
    }
    let r_val = sol.assignment.get(r).clone();
    let s_val = sol.assignment.get(s).clone();
    let z_val = sol.assignment.get(z).clone();
    let sv = r_val.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !(cond.is_finite() && cond <= COND_LIMIT) {
        return Err(Error::IllConditioned(cond));
    }
    let r_inv = r_val
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    let k = &z_val * r_inv;
    // S ≻ 0 follows from the (2,2) block; checked rather than imposed
    let s_min = sdp::min_eig(&sdp::SymMatrix::new(s_val.clone())?);
    if s_min <= 0.0 {
        return Err(Error::NoCertificate { margin: s_min });
    }
    let gain = Gain::new(k.row(0).iter().copied().collect());
    Ok((gain, r_val, s_val, z_val, sol.margin))
}

/// Delay-independent synthesis on a single model; the gain `K = Z R⁻¹` is
/// re-certified by [`iod_analysis`] before being returned.
pub fn iod_synthesize(model: &LinearModel, opts: &SolverOptions) -> Result<IodSynthesis> {
    if model.m() != 1 {
        return Err(Error::Dimension("single-input models only".into()));
    }
    let (gain, r, s, z, margin) = synthesize_common(std::slice::from_ref(model), opts)?;
    let certificate = iod_analysis(std::slice::from_ref(model), &gain, opts)?;
    Ok(IodSynthesis { gain, r, s, z, synthesis_margin: margin, certificate })
}

/// Quadratic stabilization of all eight vertices with shared `R`, `S`, `Z`.
/// Every vertex closed loop is re-certified independently.
pub fn iod_synthesize_robust(poly: &Polytope, opts: &SolverOptions) -> Result<(Gain, RobustIodCertificate)> {
    let (gain, r, s, z, margin) = synthesize_common(&poly.vertices, opts)?;
    let vertices = iod_recertify_vertices(poly, &gain, opts)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((gain, RobustIodCertificate { r, s, z, margin, vertices }))
}

/// Gain cancelling the delayed state term of the nominal model:
/// `k1 = −2N³/(R0³C³)`, `k2 = 2N²/(R0³C³)`.
pub fn iod_analytic_gain(params: &NetworkParams, eq: &Equilibrium) -> Gain {
    let n = params.n_sessions;
    let rc3 = (eq.r0 * params.capacity).powi(3);
    Gain::new(vec![-2.0 * n.powi(3) / rc3, 2.0 * n * n / rc3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{equilibrium, linearize, NetworkParams};

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn scalar_stable_delay_system_certified() {
        let m = LinearModel::scalar(-2.0, 0.5, 0.0, 1.0);
        let cert = iod_analysis(&[m], &Gain::zero(1), &opts()).unwrap();
        assert!(cert.margin > 0.0);
        // the hand witness P = Q = 1 is also valid
        let (prob, p, q) = iod_analysis_problem(&[LinearModel::scalar(-2.0, 0.5, 0.0, 1.0)], &Gain::zero(1)).unwrap();
        let mut asg = sdp::Assignment::zeros(&prob);
        asg.set(p, DMatrix::from_element(1, 1, 1.0));
        asg.set(q, DMatrix::from_element(1, 1, 1.0));
        let v = sdp::verify_assignment(&prob, &asg, 0.0);
        assert!(v.iter().all(|c| c.pass));
    }

    #[test]
    fn scalar_unstable_has_no_certificate() {
        let m = LinearModel::scalar(1.0, -0.5, 0.0, 1.0);
        assert!(matches!(
            iod_analysis(&[m], &Gain::zero(1), &opts()),
            Err(Error::NoCertificate { .. })
        ));
    }

    #[test]
    fn open_loop_tcp_model_is_iod_stable() {
        let eq = equilibrium(&NetworkParams::HOLLOT).unwrap();
        let m = linearize(&NetworkParams::HOLLOT, &eq);
        iod_analysis(&[m], &Gain::zero(2), &opts()).unwrap();
    }

    #[test]
    fn analytic_gain_cancels_delayed_term() {
        let p = NetworkParams::HOLLOT;
        let eq = crate::model::equilibrium_at_rtt(&p, 0.246).unwrap();
        let k = iod_analytic_gain(&p, &eq);
        assert!((k.k[0] + 5.503e-4).abs() < 5e-7, "{}", k.k[0]);
        assert!((k.k[1] - 9.171e-6).abs() < 5e-9, "{}", k.k[1]);
        let m = linearize(&p, &eq);
        let ad = m.closed_loop_delayed(&k);
        assert!(ad.amax() <= 1e-12 * m.a_d.amax());
        iod_analysis(&[m], &k, &opts()).unwrap();
    }

    #[test]
    fn synthesis_without_input_degenerates_to_analysis() {
        let m = LinearModel::scalar(-2.0, 0.5, 0.0, 1.0);
        let syn = iod_synthesize(&m, &opts()).unwrap();
        assert!(syn.certificate.margin > 0.0);
    }

    #[test]
    fn scalar_synthesis_stays_in_feasible_region() {
        // a = −2, a_d = 0, b = 1: closed loop −2x + K x(t−h) is IOD-stable
        // for |K| < 2; the returned gain must satisfy the analysis LMI
        let m = LinearModel::scalar(-2.0, 0.0, 1.0, 1.0);
        let syn = iod_synthesize(&m, &opts()).unwrap();
        assert!(syn.gain.k[0].abs() < 2.0, "{:?}", syn.gain);
    }

    #[test]
    fn nominal_tcp_synthesis_round_trip() {
        let eq = equilibrium(&NetworkParams::HOLLOT).unwrap();
        let m = linearize(&NetworkParams::HOLLOT, &eq);
        let syn = iod_synthesize(&m, &opts()).unwrap();
        assert!(syn.certificate.margin >= 1e-7);
    }
}
