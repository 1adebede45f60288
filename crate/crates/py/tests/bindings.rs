use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyModule>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "tcpaqm_py").unwrap();
        tcpaqm_py::register(&m).unwrap();
        f(py, &m);
    });
}

#[test]
fn equilibrium_of_the_benchmark() {
    with_module(|_py, m| {
        let params = m.getattr("NetworkParams").unwrap().call0().unwrap();
        let eq = m.getattr("equilibrium").unwrap().call1((&params,)).unwrap();
        let r0: f64 = eq.getattr("r0").unwrap().extract().unwrap();
        let w0: f64 = eq.getattr("w0").unwrap().extract().unwrap();
        assert!((r0 - 0.2466667).abs() < 1e-6);
        assert!((w0 - 15.4167).abs() < 1e-3);
    });
}

#[test]
fn robust_synthesis_and_recheck() {
    with_module(|_py, m| {
        let params = m.getattr("NetworkParams").unwrap().call0().unwrap();
        let poly = m.getattr("build_polytope").unwrap().call1((&params, 0.1, 0.4)).unwrap();
        let (k, margins): (Vec<f64>, Vec<f64>) =
            m.getattr("iod_synthesize_robust").unwrap().call1((&poly,)).unwrap().extract().unwrap();
        assert_eq!(margins.len(), 8);
        assert!(margins.iter().all(|&g| g >= 1e-7));
        let verts = poly.getattr("vertices").unwrap();
        let margin: f64 = m.getattr("iod_analysis").unwrap().call1((verts, k)).unwrap().extract().unwrap();
        assert!(margin >= 1e-7);
    });
}

#[test]
fn uncertifiable_gain_raises() {
    with_module(|py, m| {
        let params = m.getattr("NetworkParams").unwrap().call0().unwrap();
        let eq = m.getattr("equilibrium").unwrap().call1((&params,)).unwrap();
        let lin = m.getattr("linearize").unwrap().call1((&params, &eq)).unwrap();
        let err = m.getattr("iod_analysis").unwrap().call1((vec![lin], vec![0.5, 0.5])).unwrap_err();
        let cls = m.getattr("NoCertificateError").unwrap();
        assert!(err.get_type(py).is(&cls), "{err}");
    });
}

#[test]
fn invalid_params_raise_value_error() {
    with_module(|py, m| {
        let kwargs = PyDict::new(py);
        kwargs.set_item("q_ref", 900.0).unwrap();
        let err = m.getattr("NetworkParams").unwrap().call((), Some(&kwargs)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}

#[test]
fn spectral_abscissa_of_a_scalar_system() {
    with_module(|_py, m| {
        // ẋ = −x(t−h) is stable iff h < π/2
        let a = vec![vec![0.0]];
        let ad = vec![vec![-1.0]];
        let s: f64 = m.getattr("spectral_abscissa").unwrap().call1((a.clone(), ad.clone(), 1.0)).unwrap().extract().unwrap();
        assert!(s < 0.0);
        let hc: f64 = m.getattr("critical_delay").unwrap().call1((a, ad, 0.1, 3.0)).unwrap().extract().unwrap();
        assert!((hc - std::f64::consts::FRAC_PI_2).abs() < 1e-3, "{hc}");
    });
}
