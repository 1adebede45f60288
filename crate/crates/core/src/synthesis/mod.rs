//! LMI conditions for the closed loop `ẋ = A x + (A_d + BK) x(t − h)` and
//! the synthesis routes built on them.

mod dd;
mod iod;
mod relaxation;

pub use dd::{
    build_gamma, build_s, dd_analysis_step, dd_check_certificate, dd_max_delay, dd_problem,
    dd_synthesis_step, DdCertificate, DdForm, DdVars, DelaySearch, SlackMode,
};
pub use iod::{
    iod_analysis, iod_analysis_problem, iod_analytic_gain, iod_recertify_vertices, iod_synthesize,
    iod_synthesize_robust, IodCertificate, IodSynthesis, RobustIodCertificate,
};
pub use relaxation::{dd_relaxation, dd_relaxation_polytope, RelaxationOptions, RelaxationReport, RelaxationStep};
