//! Alternating synthesis/analysis relaxation of the bilinear
//! delay-dependent stabilization condition.

use nalgebra::DMatrix;

use super::dd::{dd_analysis_step, dd_synthesis_step, maximize_delay, DdCertificate, DelaySearch, SlackMode};
use super::iod::iod_analytic_gain;
use crate::error::{Error, Result};
use crate::model::{equilibrium, Gain, LinearModel, NetworkParams, Polytope};
use crate::sdp::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationOptions {
    pub search: DelaySearch,
    /// Stop once analysis improves on synthesis by less than this.
    pub h_tol: f64,
    pub max_iter: usize,
    pub slack: SlackMode,
    pub solver: SolverOptions,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self {
            search: DelaySearch::default(),
            h_tol: 1e-3,
            max_iter: 20,
            slack: SlackMode::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationStep {
    pub h_synthesis: f64,
    pub h_analysis: f64,
    pub gain: Gain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationReport {
    pub initial_gain: Gain,
    pub h_initial: f64,
    pub steps: Vec<RelaxationStep>,
    pub gain: Gain,
    pub h_m: f64,
    pub certificate: DdCertificate,
    pub converged: bool,
}

impl RelaxationReport {
    /// `h` values in the order they were reached.
    pub fn h_sequence(&self) -> Vec<f64> {
        std::iter::once(self.h_initial)
            .chain(self.steps.iter().flat_map(|s| [s.h_synthesis, s.h_analysis]))
            .collect()
    }
}

/// Runs the relaxation from `initial_gain`, bootstrapping the slack from an
/// analysis solve at `h0`.
///
/// Each iteration maximizes `h` over the synthesis LMI with the slack fixed
/// (yielding a gain), then over the analysis LMI with that gain fixed
/// (yielding a new slack). Both searches start from the delay already
/// certified, so the recorded `h` sequence cannot decrease.
pub fn dd_relaxation(
    models: &[LinearModel],
    initial_gain: &Gain,
    r: usize,
    h0: f64,
    opts: &RelaxationOptions,
) -> Result<RelaxationReport> {
    let solver = &opts.solver;
    let start = match dd_analysis_step(models, initial_gain, r, h0, opts.slack, solver) {
        Ok(c) => c,
        Err(Error::NoCertificate { .. }) => return Err(Error::NoStartingPoint),
        Err(e) => return Err(e),
    };

    let mut gain = initial_gain.clone();
    let mut cert = start;
    let mut steps = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let h_prev = cert.h;
        let slack: Vec<DMatrix<f64>> = cert.x.clone();

        // (1) synthesis with the slack fixed; the current gain is feasible
        // at h_prev with the current certificate
        let syn_start = (gain.clone(), cert.clone());
        let (k_new, syn_cert) = maximize_delay(h_prev, syn_start, &opts.search, |h| {
            match dd_synthesis_step(models, &slack, r, h, solver) {
                Ok(v) => Ok(Some(v)),
                Err(Error::NoCertificate { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        let h_syn = syn_cert.h;

        // (2) analysis with the new gain; (P, Q, R, slack) is feasible at h_syn
        let ana_cert = maximize_delay(h_syn, syn_cert, &opts.search, |h| {
            match dd_analysis_step(models, &k_new, r, h, opts.slack, solver) {
                Ok(c) => Ok(Some(c)),
                Err(Error::NoCertificate { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        let h_ana = ana_cert.h;

        steps.push(RelaxationStep { h_synthesis: h_syn, h_analysis: h_ana, gain: k_new.clone() });
        gain = k_new;
        cert = ana_cert;

        if h_ana - h_syn < opts.h_tol && h_syn - h_prev < opts.h_tol {
            converged = true;
            break;
        }
        if h_ana >= opts.search.h_max {
            converged = true;
            break;
        }
    }

    Ok(RelaxationReport {
        initial_gain: initial_gain.clone(),
        h_initial: h0,
        h_m: cert.h,
        gain,
        certificate: cert,
        steps,
        converged,
    })
}

/// Relaxation on a polytope, initialized with the cancelling gain at the
/// nominal operating point of `params` and a slack certified at
/// `R0_min / 2`.
pub fn dd_relaxation_polytope(
    params: &NetworkParams,
    poly: &Polytope,
    r: usize,
    opts: &RelaxationOptions,
) -> Result<RelaxationReport> {
    let eq = equilibrium(params)?;
    let k0 = iod_analytic_gain(params, &eq);
    dd_relaxation(&poly.vertices, &k0, r, poly.r0_min / 2.0, opts)
}
