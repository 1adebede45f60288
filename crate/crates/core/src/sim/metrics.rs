use std::fmt;

use super::SimTrace;
use crate::error::{Error, Result};

/// Queue regulation figures of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `max q − q0`, zero if the queue never exceeds the target.
    pub overshoot: f64,
    /// Time after which `q` stays within `±5 %` of the target.
    pub settling: Option<f64>,
    /// Mean `|q − q0|` over the final tenth of the trace.
    pub steady_state_error: f64,
    /// Settling time counted from the end of the last disturbance.
    pub recovery: Option<f64>,
}

const BAND: f64 = 0.05;

/// Earliest time from which every sample of `q` stays within the band,
/// with linear interpolation of the last exit. `None` if the final sample
/// is outside.
pub(crate) fn settling_time(t: &[f64], q: &[f64], q0: f64) -> Option<f64> {
    let tol = BAND * q0;
    let outside = |v: f64| (v - q0).abs() > tol;
    match q.iter().rposition(|&v| outside(v)) {
        None => Some(t.first().copied().unwrap_or(0.0)),
        Some(i) if i + 1 == q.len() => None,
        Some(i) => {
            let (e0, e1) = ((q[i] - q0).abs(), (q[i + 1] - q0).abs());
            let frac = if e0 > e1 { ((e0 - tol) / (e0 - e1)).clamp(0.0, 1.0) } else { 1.0 };
            Some(t[i] + frac * (t[i + 1] - t[i]))
        }
    }
}

/// Regulation metrics of `trace` about the target `q0`.
pub fn compute_metrics(trace: &SimTrace, q0: f64) -> Result<Metrics> {
    let n = trace.t.len();
    if n == 0 {
        return Err(Error::Simulation("empty trace".into()));
    }
    let q_max = trace.q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let overshoot = (q_max - q0).max(0.0);
    let settling = settling_time(&trace.t, &trace.q, q0).map(|s| s - trace.t[0]);
    let tail = (n / 10).max(1);
    let steady_state_error = trace.q[n - tail..].iter().map(|v| (v - q0).abs()).sum::<f64>() / tail as f64;
    let recovery = trace.scenario.last_disturbance_end().and_then(|t_off| {
        let start = trace.t.iter().position(|&t| t >= t_off)?;
        settling_time(&trace.t[start..], &trace.q[start..], q0).map(|s| (s - t_off).max(0.0))
    });
    Ok(Metrics { overshoot, settling, steady_state_error, recovery })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.6}"))
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "overshoot_pkts={:.6}", self.overshoot)?;
        writeln!(f, "settling_s={}", opt(self.settling))?;
        writeln!(f, "steady_state_error_pkts={:.6}", self.steady_state_error)?;
        writeln!(f, "recovery_s={}", opt(self.recovery))
    }
}
