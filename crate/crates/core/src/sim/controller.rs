use crate::error::{Error, Result};
use crate::model::{Equilibrium, Gain, NetworkParams};

/// Drop-probability law applied at the bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    /// `p = p0 + k1 (W − W0) + k2 (q − q0)`.
    StateFeedback { gain: Gain, p0: f64, w0: f64, q0: f64 },
    /// Velocity-form digital PI, `p(k) = p(k−1) + a δq(k) − b δq(k−1)`,
    /// sampled at `fs` Hz and held in between. `p0` seeds `p(−1)`.
    Pi { a: f64, b: f64, fs: f64, q0: f64, p0: f64 },
    Constant { p: f64 },
}

impl Controller {
    pub fn state_feedback(gain: Gain, params: &NetworkParams, eq: &Equilibrium) -> Self {
        Controller::StateFeedback { gain, p0: eq.p0, w0: eq.w0, q0: params.q_ref }
    }

    /// The reference PI tuning for the 60-flow benchmark link.
    pub fn reference_pi(params: &NetworkParams) -> Self {
        Controller::Pi { a: 1.822e-5, b: 1.816e-5, fs: 160.0, q0: params.q_ref, p0: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Controller::StateFeedback { gain, p0, w0, q0 } => {
                gain.k.len() == 2 && gain.is_finite() && p0.is_finite() && w0.is_finite() && q0.is_finite()
            }
            Controller::Pi { a, b, fs, q0, p0 } => {
                [a, b, q0, p0].iter().all(|v| v.is_finite()) && fs.is_finite() && *fs > 0.0
            }
            Controller::Constant { p } => p.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid controller {self:?}")))
        }
    }

    pub fn label(&self) -> String {
        match self {
            Controller::StateFeedback { gain, .. } => {
                format!("state-feedback k1={:e} k2={:e}", gain.k[0], gain.k[1])
            }
            Controller::Pi { a, b, fs, .. } => format!("pi a={a:e} b={b:e} fs={fs}"),
            Controller::Constant { p } => format!("constant p={p}"),
        }
    }
}

/// Per-run controller memory.
#[derive(Debug, Clone)]
pub(crate) struct ControllerState {
    ctrl: Controller,
    prev_dq: f64,
    prev_p: f64,
    next_sample: f64,
    samples: u64,
}

impl ControllerState {
    pub(crate) fn new(ctrl: &Controller) -> Self {
        let prev_p = match ctrl {
            Controller::Pi { p0, .. } => p0.clamp(0.0, 1.0),
            _ => 0.0,
        };
        Self { ctrl: ctrl.clone(), prev_dq: 0.0, prev_p, next_sample: 0.0, samples: 0 }
    }

    /// Output at time `t` for the measured `(w, q)`. Must be called with
    /// nondecreasing `t`.
    pub(crate) fn emit(&mut self, t: f64, w: f64, q: f64) -> f64 {
        match &self.ctrl {
            Controller::StateFeedback { gain, p0, w0, q0 } => {
                (p0 + gain.k[0] * (w - w0) + gain.k[1] * (q - q0)).clamp(0.0, 1.0)
            }
            Controller::Constant { p } => p.clamp(0.0, 1.0),
            Controller::Pi { a, b, fs, q0, .. } => {
                // tolerate rounding of the grid against the sample clock
                if t + 1e-9 >= self.next_sample {
                    let dq = q - q0;
                    let p = (self.prev_p + a * dq - b * self.prev_dq).clamp(0.0, 1.0);
                    self.prev_dq = dq;
                    self.prev_p = p;
                    self.samples += 1;
                    self.next_sample = self.samples as f64 / fs;
                }
                self.prev_p
            }
        }
    }

    /// Output the controller would emit on a constant history, without
    /// advancing its memory.
    pub(crate) fn preview(&self, w: f64, q: f64) -> f64 {
        self.clone().emit(0.0, w, q)
    }
}
