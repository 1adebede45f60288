use proptest::prelude::*;
use tcpaqm::model::{build_polytope, equilibrium, linearize, NetworkParams, Polytope};
use tcpaqm::synthesis::iod_analytic_gain;

fn params() -> impl Strategy<Value = NetworkParams> {
    (5.0..400.0f64, 500.0..20_000.0f64, 0.01..0.5f64, 10.0..400.0f64).prop_map(|(n, c, tp, q)| NetworkParams {
        n_sessions: n,
        capacity: c,
        prop_delay: tp,
        q_ref: q,
        buffer: 800.0,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equilibrium_balances_the_fluid_equations(p in params()) {
        if let Ok(eq) = equilibrium(&p) {
            // Ẇ = 1/R − W² p / (2R) = 0 and q̇ = N W / R − C = 0
            prop_assert!((1.0 - eq.w0 * eq.w0 * eq.p0 / 2.0).abs() < 1e-12);
            prop_assert!((p.n_sessions * eq.w0 / eq.r0 - p.capacity).abs() < 1e-9 * p.capacity);
            prop_assert!(eq.p0 > 0.0 && eq.p0 <= 1.0);
        }
    }

    #[test]
    fn analytic_gain_cancels_delayed_feedback(p in params()) {
        if let Ok(eq) = equilibrium(&p) {
            let m = linearize(&p, &eq);
            let cl = m.closed_loop_delayed(&iod_analytic_gain(&p, &eq));
            prop_assert!(cl.amax() <= 1e-10 * m.a_d.amax());
        }
    }

    #[test]
    fn polytope_covers_every_rtt_in_the_interval(lo in 0.05..0.5f64, width in 0.0..0.8f64, t in 0.0..=1.0f64) {
        let hi = lo + width;
        let poly = build_polytope(&NetworkParams::HOLLOT, lo, hi).unwrap();
        let r0 = lo + t * width;
        let rho = Polytope::rho_point(r0);
        prop_assert!(poly.contains_rho(rho));
        let w = poly.convex_weights(rho);
        prop_assert!(w.iter().all(|&x| x >= -1e-12));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // the convex combination of vertices reproduces the exact model
        let exact = poly.model_at(r0);
        let mut a = exact.a.clone() * 0.0;
        for (wi, v) in w.iter().zip(&poly.vertices) {
            a += &v.a * *wi;
        }
        prop_assert!((a - &exact.a).amax() <= 1e-9 * exact.a.amax());
    }
}
