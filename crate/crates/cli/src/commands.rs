use tcpaqm::model::{build_polytope, linearize, Equilibrium, Gain, LinearModel, NetworkParams, Polytope};
use tcpaqm::sdp::SolverOptions;
use tcpaqm::sim::{self, Controller, InitialHistory, Scenario, SimTrace};
use tcpaqm::stability::{converged_spectrum, OracleOptions};
use tcpaqm::synthesis::{
    dd_analysis_step, dd_max_delay, dd_relaxation_polytope, iod_recertify_vertices, iod_synthesize,
    iod_synthesize_robust, DelaySearch, RelaxationOptions,
};

use crate::config::{ControllerKind, Method, RunConfig, ScenarioKind};
use crate::record::{fmt_f, ResultRecord};
use crate::{CliError, Format, Output, Target};

fn solver(cfg: &RunConfig) -> SolverOptions {
    SolverOptions { feas_tol: cfg.synthesis.feas_tol, max_iter: cfg.synthesis.solver_max_iter, ..SolverOptions::default() }
}

fn search(cfg: &RunConfig) -> DelaySearch {
    DelaySearch { tol: cfg.synthesis.bisection_tol, ..DelaySearch::default() }
}

fn relaxation(cfg: &RunConfig) -> RelaxationOptions {
    RelaxationOptions {
        search: search(cfg),
        h_tol: cfg.synthesis.h_tol,
        max_iter: cfg.synthesis.max_iter,
        slack: cfg.synthesis.slack.into(),
        solver: solver(cfg),
    }
}

fn polytope(cfg: &RunConfig) -> Result<Polytope, CliError> {
    Ok(build_polytope(&cfg.network.params(), cfg.uncertainty.r0_min, cfg.uncertainty.r0_max)?)
}

fn matrix_text(m: &tcpaqm::nalgebra::DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(","))
        .collect();
    format!("[{}]", rows.join(";"))
}

/// One spectral check of a closed loop at a given delay.
#[derive(Debug, Clone)]
pub struct OracleVerdict {
    pub label: String,
    pub h: f64,
    pub abscissa: f64,
    pub stable: bool,
}

pub fn oracle_check(label: &str, model: &LinearModel, gain: &Gain, h: f64) -> Result<OracleVerdict, CliError> {
    let opts = OracleOptions::default();
    let rep = converged_spectrum(&model.a, &model.closed_loop_delayed(gain), h, &opts)?;
    Ok(OracleVerdict { label: label.to_string(), h, abscissa: rep.abscissa, stable: rep.abscissa < -opts.margin })
}

fn push_oracle(rec: &mut ResultRecord, prefix: &str, verdicts: &[OracleVerdict]) {
    rec.push(format!("{prefix}.checks"), verdicts.len());
    rec.push(format!("{prefix}.all_stable"), verdicts.iter().all(|v| v.stable));
    for (i, v) in verdicts.iter().enumerate() {
        rec.push(format!("{prefix}[{i}].at"), &v.label);
        rec.push_f(format!("{prefix}[{i}].h_s"), v.h);
        rec.push_f(format!("{prefix}[{i}].abscissa"), v.abscissa);
    }
}

fn rtt_samples(cfg: &RunConfig) -> [f64; 3] {
    let u = &cfg.uncertainty;
    [u.r0_min, 0.5 * (u.r0_min + u.r0_max), u.r0_max]
}

/// A gain together with what certifies it.
#[derive(Debug, Clone)]
pub struct Design {
    pub method: Method,
    pub gain: Gain,
    pub margins: Vec<f64>,
    pub iterations: usize,
    /// Certified delay for the delay-dependent route.
    pub h_m: Option<f64>,
    pub r: Option<usize>,
    pub h_sequence: Vec<f64>,
    pub converged: Option<bool>,
    pub oracle: Vec<OracleVerdict>,
}

impl Design {
    fn push(&self, rec: &mut ResultRecord) {
        rec.push("method", self.method.as_str());
        rec.push_f("gain.k1", self.gain.k[0]);
        rec.push_f("gain.k2", self.gain.k[1]);
        if let Some(r) = self.r {
            rec.push("certificate.r", r);
        }
        rec.push_opt("certificate.h_m_s", self.h_m);
        rec.push("certificate.count", self.margins.len());
        for (i, m) in self.margins.iter().enumerate() {
            rec.push_f(format!("certificate[{i}].margin"), *m);
        }
        rec.push("certificate.solver_iterations", self.iterations);
        if let Some(c) = self.converged {
            rec.push("relaxation.converged", c);
            let seq: Vec<String> = self.h_sequence.iter().map(|h| fmt_f(*h)).collect();
            rec.push("relaxation.h_sequence", seq.join(","));
        }
        push_oracle(rec, "oracle", &self.oracle);
    }

    fn require_oracle(self) -> Result<Self, CliError> {
        if let Some(bad) = self.oracle.iter().find(|v| !v.stable) {
            return Err(CliError::Unverified(format!(
                "oracle reports abscissa {:e} at {} (h = {})",
                bad.abscissa, bad.label, bad.h
            )));
        }
        Ok(self)
    }
}

/// Runs the configured synthesis route and cross-checks the result.
pub fn design(cfg: &RunConfig) -> Result<Design, CliError> {
    let params = cfg.network.params();
    let opts = solver(cfg);
    let d = match cfg.synthesis.method {
        Method::Iod => {
            let eq = tcpaqm::model::equilibrium(&params)?;
            let model = linearize(&params, &eq);
            let syn = iod_synthesize(&model, &opts)?;
            let mut oracle = Vec::new();
            for h in [0.0, eq.r0, 1.0, 5.0] {
                oracle.push(oracle_check(&format!("R0={}", fmt_f(eq.r0)), &model, &syn.gain, h)?);
            }
            Design {
                method: Method::Iod,
                margins: vec![syn.certificate.margin],
                iterations: syn.certificate.iterations,
                gain: syn.gain,
                h_m: None,
                r: None,
                h_sequence: Vec::new(),
                converged: None,
                oracle,
            }
        }
        Method::IodRobust => {
            let poly = polytope(cfg)?;
            let (gain, cert) = iod_synthesize_robust(&poly, &opts)?;
            let mut oracle = Vec::new();
            for r0 in rtt_samples(cfg) {
                let m = poly.model_at(r0);
                for h in [r0, 1.0, 5.0] {
                    oracle.push(oracle_check(&format!("R0={}", fmt_f(r0)), &m, &gain, h)?);
                }
            }
            Design {
                method: Method::IodRobust,
                margins: cert.vertices.iter().map(|c| c.margin).collect(),
                iterations: cert.vertices.iter().map(|c| c.iterations).sum(),
                gain,
                h_m: None,
                r: None,
                h_sequence: Vec::new(),
                converged: None,
                oracle,
            }
        }
        Method::Dd => {
            let poly = polytope(cfg)?;
            let rep = dd_relaxation_polytope(&params, &poly, cfg.synthesis.r, &relaxation(cfg))?;
            let h = rep.h_m;
            let mut oracle = Vec::new();
            for r0 in rtt_samples(cfg) {
                oracle.push(oracle_check(&format!("R0={}", fmt_f(r0)), &poly.model_at(r0), &rep.gain, h)?);
            }
            for (i, v) in poly.vertices.iter().enumerate() {
                oracle.push(oracle_check(&format!("vertex{i}"), v, &rep.gain, h)?);
            }
            Design {
                method: Method::Dd,
                margins: vec![rep.certificate.margin],
                iterations: rep.certificate.iterations,
                h_sequence: rep.h_sequence(),
                converged: Some(rep.converged),
                gain: rep.gain,
                h_m: Some(h),
                r: Some(cfg.synthesis.r),
                oracle,
            }
        }
    };
    d.require_oracle()
}

/// Certifies a given gain on the configured polytope: per-vertex IOD
/// analysis, the largest DD-certified delay, and oracle checks at the
/// sampled RTTs (at their own delay and at the certified delay).
pub fn verify_gain(cfg: &RunConfig, gain: &Gain) -> Result<Design, CliError> {
    let poly = polytope(cfg)?;
    let opts = solver(cfg);
    let iod: Vec<_> = iod_recertify_vertices(&poly, gain, &opts);
    let iod_ok = iod.iter().all(|c| c.is_ok());
    let dd = dd_max_delay(&poly.vertices, gain, cfg.synthesis.r, cfg.synthesis.slack.into(), &search(cfg), &opts)?;
    let mut oracle = Vec::new();
    for r0 in rtt_samples(cfg) {
        oracle.push(oracle_check(&format!("R0={}", fmt_f(r0)), &poly.model_at(r0), gain, r0)?);
    }
    if let Some(c) = &dd {
        for (i, v) in poly.vertices.iter().enumerate() {
            oracle.push(oracle_check(&format!("vertex{i}"), v, gain, c.h)?);
        }
    }
    let (method, margins, iterations) = match (&dd, iod_ok) {
        (_, true) => (
            Method::IodRobust,
            iod.iter().map(|c| c.as_ref().map(|c| c.margin).unwrap_or(f64::NAN)).collect(),
            iod.iter().map(|c| c.as_ref().map(|c| c.iterations).unwrap_or(0)).sum(),
        ),
        (Some(c), false) => (Method::Dd, vec![c.margin], c.iterations),
        (None, false) => {
            return Err(CliError::Unverified("gain fails every vertex condition at the smallest delay".into()));
        }
    };
    Design {
        method,
        gain: gain.clone(),
        margins,
        iterations,
        h_m: dd.as_ref().map(|c| c.h),
        r: Some(cfg.synthesis.r),
        h_sequence: Vec::new(),
        converged: None,
        oracle,
    }
    .require_oracle()
}

pub fn equilibrium(cfg: &RunConfig) -> Result<Output, CliError> {
    let params = cfg.network.params();
    let eq = tcpaqm::model::equilibrium(&params)?;
    let m = linearize(&params, &eq);
    let mut rec = ResultRecord::new("equilibrium", &cfg.canonical(), cfg.seed);
    rec.push_f("equilibrium.w0_pkts", eq.w0);
    rec.push_f("equilibrium.p0", eq.p0);
    rec.push_f("equilibrium.r0_s", eq.r0);
    rec.push("model.a", matrix_text(&m.a));
    rec.push("model.a_d", matrix_text(&m.a_d));
    rec.push("model.b", matrix_text(&m.b));
    rec.push_f("model.h_s", m.h);
    Ok(record_output(rec, "equilibrium.txt"))
}

fn record_output(rec: ResultRecord, name: &str) -> Output {
    let text = rec.to_string();
    Output { stdout: text.clone(), files: vec![(name.to_string(), text)] }
}

pub fn synth(cfg: &RunConfig) -> Result<Output, CliError> {
    let d = design(cfg)?;
    let mut rec = ResultRecord::new("synth", &cfg.canonical(), cfg.seed);
    rec.push_f("interval.r0_min_s", cfg.uncertainty.r0_min);
    rec.push_f("interval.r0_max_s", cfg.uncertainty.r0_max);
    d.push(&mut rec);
    Ok(record_output(rec, "synth.txt"))
}

pub fn analyze(cfg: &RunConfig) -> Result<Output, CliError> {
    let k = cfg
        .synthesis
        .gain
        .ok_or_else(|| CliError::Config("analyze needs synthesis.gain".into()))?;
    let d = verify_gain(cfg, &Gain::new(k.to_vec()))?;
    let mut rec = ResultRecord::new("analyze", &cfg.canonical(), cfg.seed);
    rec.push_f("interval.r0_min_s", cfg.uncertainty.r0_min);
    rec.push_f("interval.r0_max_s", cfg.uncertainty.r0_max);
    d.push(&mut rec);
    Ok(record_output(rec, "analyze.txt"))
}

fn scenario(cfg: &RunConfig, controller: &Controller) -> Result<(Scenario, InitialHistory, Option<f64>), CliError> {
    let params = cfg.network.params();
    let sim_cfg = &cfg.simulation;
    let mut rate_used = None;
    let (mut sc, hist) = match sim_cfg.scenario {
        ScenarioKind::Nominal => {
            let eq = tcpaqm::model::equilibrium(&params)?;
            (Scenario::nominal(60.0), InitialHistory::at_equilibrium(&params, &eq))
        }
        ScenarioKind::Fig1 => (Scenario::fig1(), InitialHistory::EMPTY),
        ScenarioKind::Fig2 => (Scenario::fig2(), InitialHistory::EMPTY),
        ScenarioKind::Fig3 => {
            let base = Scenario::fig3(0.0);
            let rate = match sim_cfg.cross_rate {
                Some(r) => r,
                None => sim::largest_safe_cross_rate(&params, controller, 40.0, 45.0, base.horizon, sim_cfg.dt, &InitialHistory::EMPTY)?,
            };
            rate_used = Some(rate);
            (Scenario::fig3(rate), InitialHistory::EMPTY)
        }
    };
    if let Some(h) = sim_cfg.horizon {
        sc.horizon = h;
    }
    Ok((sc, hist, rate_used))
}

fn simulate_with(cfg: &RunConfig, controller: &Controller) -> Result<(SimTrace, sim::Metrics, Option<f64>), CliError> {
    let (sc, hist, rate) = scenario(cfg, controller)?;
    let tr = sim::simulate_nonlinear(&cfg.network.params(), controller, &sc, cfg.simulation.dt, &hist)?;
    let m = sim::compute_metrics(&tr, cfg.network.q_ref)?;
    Ok((tr, m, rate))
}

fn push_metrics(rec: &mut ResultRecord, prefix: &str, m: &sim::Metrics) {
    rec.push_f(format!("{prefix}.overshoot_pkts"), m.overshoot);
    rec.push_opt(format!("{prefix}.settling_s"), m.settling);
    rec.push_f(format!("{prefix}.steady_state_error_pkts"), m.steady_state_error);
    rec.push_opt(format!("{prefix}.recovery_s"), m.recovery);
}

fn sf_controller(params: &NetworkParams, eq: &Equilibrium, gain: &Gain) -> Controller {
    Controller::state_feedback(gain.clone(), params, eq)
}

pub fn simulate(cfg: &RunConfig, format: Format) -> Result<Output, CliError> {
    let params = cfg.network.params();
    let eq = tcpaqm::model::equilibrium(&params)?;
    let mut rec = ResultRecord::new("simulate", &cfg.canonical(), cfg.seed);
    let controller = match cfg.simulation.controller {
        ControllerKind::Pi => {
            rec.push("controller", "pi");
            Controller::reference_pi(&params)
        }
        ControllerKind::StateFeedback => {
            let d = match cfg.simulation.gain {
                Some(k) => verify_gain(cfg, &Gain::new(k.to_vec()))?,
                None => design(cfg)?,
            };
            rec.push("controller", "state-feedback");
            d.push(&mut rec);
            sf_controller(&params, &eq, &d.gain)
        }
    };
    let (tr, m, rate) = simulate_with(cfg, &controller)?;
    push_scenario(&mut rec, cfg, rate);
    push_metrics(&mut rec, "metrics", &m);
    let csv = tr.to_csv();
    let stdout = match format {
        Format::Csv => csv.clone(),
        Format::Summary => rec.to_string(),
    };
    Ok(Output { stdout, files: vec![("trace.csv".into(), csv), ("metrics.txt".into(), m.to_string()), ("simulate.txt".into(), rec.to_string())] })
}

fn push_scenario(rec: &mut ResultRecord, cfg: &RunConfig, rate: Option<f64>) {
    let name = match cfg.simulation.scenario {
        ScenarioKind::Nominal => "nominal",
        ScenarioKind::Fig1 => "fig1",
        ScenarioKind::Fig2 => "fig2",
        ScenarioKind::Fig3 => "fig3",
    };
    rec.push("scenario", name);
    rec.push_f("scenario.dt_s", cfg.simulation.dt);
    if let Some(r) = rate {
        rec.push_f("scenario.cross_rate_pkts_per_s", r);
        if cfg.simulation.cross_rate.is_none() {
            rec.push(
                "scenario.cross_rate_note",
                "burst magnitude is ambiguous in the source; using the largest rate <= C/2 keeping the queue below the buffer",
            );
        }
    }
}

/// Published robust IOD gains with their RTT intervals.
pub const TABLE1: [(f64, f64, [f64; 2]); 2] = [(0.1, 0.4, [-0.3709e-3, 0.0062e-3]), (0.15, 0.83, [-0.4729e-4, 0.0079e-4])];

/// Published robust DD gains: `(r, R0_min, R0_max, K, h_m)`.
pub const TABLE2: [(usize, f64, f64, [f64; 2], f64); 4] = [
    (1, 0.1, 0.45, [-0.589e-3, 0.0244e-3], 0.56),
    (1, 0.1, 0.5, [-0.321e-3, 0.0204e-3], 0.48),
    (2, 0.1, 0.45, [-0.575e-3, 0.0240e-3], 0.62),
    (2, 0.1, 0.5, [-0.272e-3, 0.0193e-3], 0.52),
];

fn with_interval(cfg: &RunConfig, lo: f64, hi: f64) -> RunConfig {
    let mut c = cfg.clone();
    c.uncertainty.r0_min = lo;
    c.uncertainty.r0_max = hi;
    c
}

fn table1(cfg: &RunConfig) -> Result<Output, CliError> {
    let mut rec = ResultRecord::new("reproduce-table1", &cfg.canonical(), cfg.seed);
    let opts = solver(cfg);
    for (row, (lo, hi, k)) in TABLE1.iter().enumerate() {
        let c = with_interval(cfg, *lo, *hi);
        let poly = polytope(&c)?;
        let pre = format!("row{row}");
        rec.push_f(format!("{pre}.r0_min_s"), *lo);
        rec.push_f(format!("{pre}.r0_max_s"), *hi);
        rec.push_f(format!("{pre}.reference.k1"), k[0]);
        rec.push_f(format!("{pre}.reference.k2"), k[1]);
        let checks = iod_recertify_vertices(&poly, &Gain::new(k.to_vec()), &opts);
        rec.push(format!("{pre}.reference.vertices_certified"), checks.iter().filter(|c| c.is_ok()).count());
        for (i, ch) in checks.iter().enumerate() {
            match ch {
                Ok(cert) => rec.push_f(format!("{pre}.reference.vertex{i}.margin"), cert.margin),
                Err(e) => rec.push(format!("{pre}.reference.vertex{i}.margin"), format!("failed ({e})")),
            }
        }
        let mut c2 = c.clone();
        c2.synthesis.method = Method::IodRobust;
        match design(&c2) {
            Ok(d) => {
                rec.push(format!("{pre}.ours.status"), "certified");
                rec.push_f(format!("{pre}.ours.k1"), d.gain.k[0]);
                rec.push_f(format!("{pre}.ours.k2"), d.gain.k[1]);
                let min_margin = d.margins.iter().copied().fold(f64::INFINITY, f64::min);
                rec.push_f(format!("{pre}.ours.min_vertex_margin"), min_margin);
                push_oracle(&mut rec, &format!("{pre}.ours.oracle"), &d.oracle);
            }
            Err(e) => rec.push(format!("{pre}.ours.status"), format!("failed ({e})")),
        }
    }
    Ok(record_output(rec, "table1.txt"))
}

fn table2(cfg: &RunConfig) -> Result<Output, CliError> {
    let mut rec = ResultRecord::new("reproduce-table2", &cfg.canonical(), cfg.seed);
    let opts = solver(cfg);
    for (row, (r, lo, hi, k, h_ref)) in TABLE2.iter().enumerate() {
        let mut c = with_interval(cfg, *lo, *hi);
        c.synthesis.r = *r;
        c.synthesis.method = Method::Dd;
        let poly = polytope(&c)?;
        let gain = Gain::new(k.to_vec());
        let pre = format!("row{row}");
        rec.push(format!("{pre}.r"), r);
        rec.push_f(format!("{pre}.r0_min_s"), *lo);
        rec.push_f(format!("{pre}.r0_max_s"), *hi);
        rec.push_f(format!("{pre}.reference.k1"), k[0]);
        rec.push_f(format!("{pre}.reference.k2"), k[1]);
        rec.push_f(format!("{pre}.reference.h_m_s"), *h_ref);
        let at = dd_analysis_step(&poly.vertices, &gain, *r, h_ref - 0.01, c.synthesis.slack.into(), &opts);
        match at {
            Ok(cert) => rec.push(format!("{pre}.reference.certified_at_h_minus_0.01"), format!("yes (margin {})", fmt_f(cert.margin))),
            Err(tcpaqm::Error::NoCertificate { margin }) => {
                rec.push(format!("{pre}.reference.certified_at_h_minus_0.01"), format!("no (best margin {})", fmt_f(margin)))
            }
            Err(e) => return Err(e.into()),
        }
        let hmax = dd_max_delay(&poly.vertices, &gain, *r, c.synthesis.slack.into(), &search(&c), &opts)?;
        rec.push_opt(format!("{pre}.reference.dd_max_delay_s"), hmax.map(|c| c.h));
        match design(&c) {
            Ok(d) => {
                let h = d.h_m.unwrap_or(0.0);
                rec.push(format!("{pre}.ours.status"), "certified");
                rec.push_f(format!("{pre}.ours.k1"), d.gain.k[0]);
                rec.push_f(format!("{pre}.ours.k2"), d.gain.k[1]);
                rec.push_f(format!("{pre}.ours.h_m_s"), h);
                rec.push_f(format!("{pre}.ours.ratio_to_reference"), h / h_ref);
                rec.push(format!("{pre}.ours.meets_0.9_reference"), h >= 0.9 * h_ref);
                push_oracle(&mut rec, &format!("{pre}.ours.oracle"), &d.oracle);
            }
            Err(e) => rec.push(format!("{pre}.ours.status"), format!("failed ({e})")),
        }
    }
    Ok(record_output(rec, "table2.txt"))
}

/// The first published DD gain, used for the figure scenarios.
pub fn figure_gain() -> Gain {
    Gain::new(TABLE2[0].3.to_vec())
}

fn figure(cfg: &RunConfig, target: Target) -> Result<Output, CliError> {
    let params = cfg.network.params();
    let eq = tcpaqm::model::equilibrium(&params)?;
    let mut c = with_interval(cfg, TABLE2[0].1, TABLE2[0].2);
    c.synthesis.r = TABLE2[0].0;
    let (name, kind) = match target {
        Target::Fig1 => ("fig1", ScenarioKind::Fig1),
        Target::Fig2 => ("fig2", ScenarioKind::Fig2),
        _ => ("fig3", ScenarioKind::Fig3),
    };
    c.simulation.scenario = kind;
    let gain = c.simulation.gain.map(|k| Gain::new(k.to_vec())).unwrap_or_else(figure_gain);
    let d = verify_gain(&c, &gain)?;
    let mut rec = ResultRecord::new(&format!("reproduce-{name}"), &c.canonical(), c.seed);
    d.push(&mut rec);
    let sf = sf_controller(&params, &eq, &gain);
    let (tr, m, rate) = simulate_with(&c, &sf)?;
    push_scenario(&mut rec, &c, rate);
    push_metrics(&mut rec, "k", &m);
    let mut files = vec![(format!("{name}_k.csv"), tr.to_csv())];
    if target == Target::Fig1 {
        let (tr_pi, m_pi, _) = simulate_with(&c, &Controller::reference_pi(&params))?;
        push_metrics(&mut rec, "pi", &m_pi);
        let faster = matches!((m.settling, m_pi.settling), (Some(a), Some(b)) if a < b) || (m.settling.is_some() && m_pi.settling.is_none());
        rec.push("comparison.k_settles_faster", faster);
        rec.push("comparison.k_smaller_overshoot", m.overshoot < m_pi.overshoot);
        files.push((format!("{name}_pi.csv"), tr_pi.to_csv()));
    }
    let text = rec.to_string();
    files.push((format!("{name}_metrics.txt"), text.clone()));
    Ok(Output { stdout: text, files })
}

pub fn reproduce(cfg: &RunConfig, target: Target) -> Result<Output, CliError> {
    match target {
        Target::Table1 => table1(cfg),
        Target::Table2 => table2(cfg),
        Target::Fig1 | Target::Fig2 | Target::Fig3 => figure(cfg, target),
    }
}

