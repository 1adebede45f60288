//! Run configuration, read from TOML. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcpaqm::model::NetworkParams;
use tcpaqm::synthesis::SlackMode;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Iod,
    IodRobust,
    Dd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Iod => "iod",
            Method::IodRobust => "iod-robust",
            Method::Dd => "dd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Slack {
    Shared,
    PerVertex,
}

impl From<Slack> for SlackMode {
    fn from(s: Slack) -> Self {
        match s {
            Slack::Shared => SlackMode::Shared,
            Slack::PerVertex => SlackMode::PerVertex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Nominal,
    Fig1,
    Fig2,
    Fig3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    StateFeedback,
    Pi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    pub n_sessions: f64,
    pub capacity: f64,
    pub prop_delay: f64,
    pub q_ref: f64,
    pub buffer: f64,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        let p = NetworkParams::HOLLOT;
        Self { n_sessions: p.n_sessions, capacity: p.capacity, prop_delay: p.prop_delay, q_ref: p.q_ref, buffer: p.buffer }
    }
}

impl NetworkBlock {
    pub fn params(&self) -> NetworkParams {
        NetworkParams {
            n_sessions: self.n_sessions,
            capacity: self.capacity,
            prop_delay: self.prop_delay,
            q_ref: self.q_ref,
            buffer: self.buffer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyBlock {
    pub r0_min: f64,
    pub r0_max: f64,
}

impl Default for UncertaintyBlock {
    fn default() -> Self {
        Self { r0_min: 0.1, r0_max: 0.45 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisBlock {
    pub method: Method,
    pub r: usize,
    pub slack: Slack,
    pub feas_tol: f64,
    pub h_tol: f64,
    pub bisection_tol: f64,
    pub max_iter: usize,
    pub solver_max_iter: usize,
    /// Gain analyzed by the `analyze` verb.
    pub gain: Option<[f64; 2]>,
}

impl Default for SynthesisBlock {
    fn default() -> Self {
        Self {
            method: Method::Dd,
            r: 1,
            slack: Slack::Shared,
            feas_tol: 1e-7,
            h_tol: 1e-3,
            bisection_tol: 1e-3,
            max_iter: 20,
            solver_max_iter: 500,
            gain: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub scenario: ScenarioKind,
    pub controller: ControllerKind,
    pub dt: f64,
    /// Overrides the scenario's own horizon when set.
    pub horizon: Option<f64>,
    /// State-feedback gain; synthesized from the synthesis block if absent.
    pub gain: Option<[f64; 2]>,
    /// Cross-traffic rate for `fig3`; the largest buffer-safe rate if absent.
    pub cross_rate: Option<f64>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Fig1,
            controller: ControllerKind::StateFeedback,
            dt: 1e-3,
            horizon: None,
            gain: None,
            cross_rate: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkBlock,
    pub uncertainty: UncertaintyBlock,
    pub synthesis: SynthesisBlock,
    pub simulation: SimulationBlock,
    pub output: OutputBlock,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.network
            .params()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let u = &self.uncertainty;
        if !(u.r0_min > 0.0 && u.r0_min <= u.r0_max && u.r0_max.is_finite()) {
            return Err(CliError::Config(format!("RTT interval [{}, {}] is invalid", u.r0_min, u.r0_max)));
        }
        let s = &self.synthesis;
        let tols = [s.feas_tol, s.h_tol, s.bisection_tol, self.simulation.dt];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(CliError::Config("tolerances and the time step must be positive".into()));
        }
        if s.r == 0 || s.max_iter == 0 || s.solver_max_iter == 0 {
            return Err(CliError::Config("r and iteration caps must be at least 1".into()));
        }
        for g in [s.gain, self.simulation.gain].into_iter().flatten() {
            if !g.iter().all(|v| v.is_finite()) {
                return Err(CliError::Config("gains must be finite".into()));
            }
        }
        if let Some(h) = self.simulation.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::Config("simulation horizon must be positive".into()));
            }
        }
        if let Some(rate) = self.simulation.cross_rate {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(CliError::Config("cross-traffic rate must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Canonical serialization, the input of the config hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
