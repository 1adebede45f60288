//! TCP fluid model: operating point, delay state-space linearization and
//! the polytopic embedding of the round-trip-time uncertainty.
//!
//! State ordering is `x = [δW, δq]`, input is `u = δp`, and the delayed
//! linear model reads
//!
//! ```text
//! ẋ(t) = A x(t) + A_d x(t − h) + B u(t − h),   h = R0
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Physical description of the bottleneck link and its TCP load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    /// Number of long-lived TCP sessions.
    pub n_sessions: f64,
    /// Link capacity, packets per second.
    pub capacity: f64,
    /// Propagation delay, seconds.
    pub prop_delay: f64,
    /// Target queue length, packets.
    pub q_ref: f64,
    /// Queue capacity, packets.
    pub buffer: f64,
}

impl NetworkParams {
    /// The classic single-bottleneck setting: 60 flows on a 15 Mb/s link
    /// (3750 packets/s of 500 bytes), 200 ms propagation delay, 175 packet
    /// target in an 800 packet buffer.
    pub const HOLLOT: NetworkParams = NetworkParams {
        n_sessions: 60.0,
        capacity: 3750.0,
        prop_delay: 0.2,
        q_ref: 175.0,
        buffer: 800.0,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.n_sessions,
            self.capacity,
            self.prop_delay,
            self.q_ref,
            self.buffer,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite network parameter".into()));
        }
        if self.n_sessions <= 0.0 || self.capacity <= 0.0 {
            return Err(Error::InvalidParams(
                "session count and capacity must be positive".into(),
            ));
        }
        if self.prop_delay < 0.0 || self.q_ref < 0.0 {
            return Err(Error::InvalidParams(
                "propagation delay and target queue must be non-negative".into(),
            ));
        }
        if self.q_ref >= self.buffer {
            return Err(Error::InvalidParams(
                "target queue must be below the buffer size".into(),
            ));
        }
        Ok(())
    }
}

/// Operating point of the fluid model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    /// Congestion window, packets.
    pub w0: f64,
    /// Drop probability.
    pub p0: f64,
    /// Round-trip time, seconds.
    pub r0: f64,
}

/// Solves `Ẇ = 0`, `q̇ = 0` for the operating point at the target queue.
pub fn equilibrium(params: &NetworkParams) -> Result<Equilibrium> {
    params.validate()?;
    let r0 = params.q_ref / params.capacity + params.prop_delay;
    let w0 = r0 * params.capacity / params.n_sessions;
    let p0 = 2.0 / (w0 * w0);
    if !(p0.is_finite() && p0 <= 1.0) {
        return Err(Error::InfeasibleOperatingPoint { w0, p0 });
    }
    Ok(Equilibrium { w0, p0, r0 })
}

/// Equilibrium evaluated at an externally fixed round-trip time, with the
/// window and drop probability recomputed from it. Used to reproduce
/// fixtures that were published with a rounded `R0`.
pub fn equilibrium_at_rtt(params: &NetworkParams, r0: f64) -> Result<Equilibrium> {
    params.validate()?;
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::InvalidParams(format!("round-trip time {r0} must be positive")));
    }
    let w0 = r0 * params.capacity / params.n_sessions;
    let p0 = 2.0 / (w0 * w0);
    if p0 > 1.0 {
        return Err(Error::InfeasibleOperatingPoint { w0, p0 });
    }
    Ok(Equilibrium { w0, p0, r0 })
}

/// The triple `(A, A_d, B)` of a constant-delay linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub a_d: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Nominal delay, seconds.
    pub h: f64,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, a_d: DMatrix<f64>, b: DMatrix<f64>, h: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || a_d.shape() != (n, n) || b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "A {:?}, A_d {:?}, B {:?}",
                a.shape(),
                a_d.shape(),
                b.shape()
            )));
        }
        let finite = a.iter().chain(a_d.iter()).chain(b.iter()).all(|v| v.is_finite());
        if !finite || !h.is_finite() || h < 0.0 {
            return Err(Error::InvalidParams("non-finite linear model".into()));
        }
        Ok(Self { a, a_d, b, h })
    }

    /// Scalar system `ẋ = a x + a_d x(t−h) + b u(t−h)`.
    pub fn scalar(a: f64, a_d: f64, b: f64, h: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, a),
            a_d: DMatrix::from_element(1, 1, a_d),
            b: DMatrix::from_element(1, 1, b),
            h,
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Closed-loop delayed matrix `A_d + B K`.
    pub fn closed_loop_delayed(&self, gain: &Gain) -> DMatrix<f64> {
        &self.a_d + &self.b * gain.row(self.n())
    }
}

/// Memoryless state feedback `u = K x`, `K = [k1 k2 ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub k: Vec<f64>,
}

impl Gain {
    pub fn new(k: Vec<f64>) -> Self {
        Self { k }
    }

    pub fn zero(n: usize) -> Self {
        Self { k: vec![0.0; n] }
    }

    /// Gain as a 1×n matrix. A gain shorter than `n` is zero-padded.
    pub fn row(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(1, n, |_, j| self.k.get(j).copied().unwrap_or(0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.k.iter().all(|v| v.is_finite())
    }

    pub fn apply(&self, x: &DVector<f64>) -> f64 {
        self.k.iter().zip(x.iter()).map(|(k, x)| k * x).sum()
    }
}

/// Linearization around `eq`, delay `h = R0`.
pub fn linearize(params: &NetworkParams, eq: &Equilibrium) -> LinearModel {
    let n = params.n_sessions;
    let c = params.capacity;
    let r0 = eq.r0;
    let r2c = r0 * r0 * c;
    LinearModel {
        a: DMatrix::from_row_slice(2, 2, &[-n / r2c, -1.0 / r2c, n / r0, -1.0 / r0]),
        a_d: DMatrix::from_row_slice(2, 2, &[-n / r2c, 1.0 / r2c, 0.0, 0.0]),
        b: DMatrix::from_row_slice(2, 1, &[-c * c * r0 / (2.0 * n * n), 0.0]),
        h: r0,
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        // relative slack for values computed as 1/R and 1/R²
        let slack = 1e-12 * (1.0 + self.lo.abs().max(self.hi.abs()));
        v >= self.lo - slack && v <= self.hi + slack
    }

    fn at(&self, high: bool) -> f64 {
        if high {
            self.hi
        } else {
            self.lo
        }
    }

    /// Position of `v` inside the interval in `[0, 1]`.
    fn fraction(&self, v: f64) -> f64 {
        if self.hi > self.lo {
            ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Affine generators of the RTT-dependent matrices:
/// `A = ρ1·A0 + ρ2·A1`, `A_d = ρ2·A_d0`, `B = ρ3·B0` with
/// `ρ1 = 1/R0`, `ρ2 = 1/R0²`, `ρ3 = R0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generators {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a_d0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
}

impl Generators {
    pub fn new(params: &NetworkParams) -> Self {
        let n = params.n_sessions;
        let c = params.capacity;
        Self {
            a0: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, n, -1.0]),
            a1: DMatrix::from_row_slice(2, 2, &[-n / c, -1.0 / c, 0.0, 0.0]),
            a_d0: DMatrix::from_row_slice(2, 2, &[-n / c, 1.0 / c, 0.0, 0.0]),
            b0: DMatrix::from_row_slice(2, 1, &[-c * c / (2.0 * n * n), 0.0]),
        }
    }

    /// Evaluates the generators at `(ρ1, ρ2, ρ3)`; the model delay is `h`.
    pub fn evaluate(&self, rho: [f64; 3], h: f64) -> LinearModel {
        LinearModel {
            a: &self.a0 * rho[0] + &self.a1 * rho[1],
            a_d: &self.a_d0 * rho[1],
            b: &self.b0 * rho[2],
            h,
        }
    }
}

/// Eight-vertex polytope covering `{(A, A_d, B)(R0) : R0 ∈ [R0_min, R0_max]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    /// Vertices in binary order: index bit 2 selects ρ1 high, bit 1 ρ2 high,
    /// bit 0 ρ3 high.
    pub vertices: Vec<LinearModel>,
    pub r0_min: f64,
    pub r0_max: f64,
    pub rho_bounds: [Interval; 3],
    pub generators: Generators,
}

impl Polytope {
    pub fn rho_point(r0: f64) -> [f64; 3] {
        [1.0 / r0, 1.0 / (r0 * r0), r0]
    }

    pub fn contains_rho(&self, rho: [f64; 3]) -> bool {
        self.rho_bounds.iter().zip(rho).all(|(iv, v)| iv.contains(v))
    }

    /// Corner `(ρ1, ρ2, ρ3)` of vertex `idx`.
    pub fn corner(&self, idx: usize) -> [f64; 3] {
        [
            self.rho_bounds[0].at(idx & 4 != 0),
            self.rho_bounds[1].at(idx & 2 != 0),
            self.rho_bounds[2].at(idx & 1 != 0),
        ]
    }

    /// Multilinear interpolation weights of `rho` over the eight corners.
    /// The weights are non-negative, sum to one, and reproduce `rho`.
    pub fn convex_weights(&self, rho: [f64; 3]) -> [f64; 8] {
        let f = [
            self.rho_bounds[0].fraction(rho[0]),
            self.rho_bounds[1].fraction(rho[1]),
            self.rho_bounds[2].fraction(rho[2]),
        ];
        let mut w = [0.0; 8];
        for (idx, wi) in w.iter_mut().enumerate() {
            let pick = |bit: usize, fr: f64| if idx & bit != 0 { fr } else { 1.0 - fr };
            *wi = pick(4, f[0]) * pick(2, f[1]) * pick(1, f[2]);
        }
        w
    }

    /// Model at an arbitrary RTT inside the interval, using the exact
    /// nonlinear dependence on `R0`.
    pub fn model_at(&self, r0: f64) -> LinearModel {
        self.generators.evaluate(Self::rho_point(r0), r0)
    }
}

pub fn build_polytope(params: &NetworkParams, r0_min: f64, r0_max: f64) -> Result<Polytope> {
    params.validate()?;
    if !(r0_min.is_finite() && r0_max.is_finite() && r0_min > 0.0 && r0_min <= r0_max) {
        return Err(Error::InvalidParams(format!(
            "invalid RTT interval [{r0_min}, {r0_max}]"
        )));
    }
    let rho_bounds = [
        Interval { lo: 1.0 / r0_max, hi: 1.0 / r0_min },
        Interval { lo: 1.0 / (r0_max * r0_max), hi: 1.0 / (r0_min * r0_min) },
        Interval { lo: r0_min, hi: r0_max },
    ];
    let generators = Generators::new(params);
    let mut poly = Polytope {
        vertices: Vec::with_capacity(8),
        r0_min,
        r0_max,
        rho_bounds,
        generators,
    };
    // delay attached to each vertex is the upper RTT bound
    poly.vertices = (0..8)
        .map(|i| poly.generators.evaluate(poly.corner(i), r0_max))
        .collect();
    Ok(poly)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn hollot_equilibrium_unrounded() {
        let eq = equilibrium(&NetworkParams::HOLLOT).unwrap();
        assert!(rel(eq.r0, 0.246_666_666_666_666_7) < 1e-12);
        assert!(rel(eq.w0, 15.416_666_666_666_666) < 1e-12);
        assert!((eq.p0 - 0.008415).abs() < 1e-6);
    }

    #[test]
    fn zero_queue_reduces_to_propagation_delay() {
        let p = NetworkParams { n_sessions: 50.0, capacity: 100.0, prop_delay: 1.0, q_ref: 0.0, buffer: 10.0 };
        let eq = equilibrium(&p).unwrap();
        assert_eq!(eq.r0, 1.0);
        assert_eq!(eq.w0, 2.0);
        assert_eq!(eq.p0, 0.5);

        let p = NetworkParams { q_ref: 0.0, ..NetworkParams::HOLLOT };
        let eq = equilibrium(&p).unwrap();
        assert!(rel(eq.r0, 0.2) < 1e-14);
        assert!(rel(eq.w0, 12.5) < 1e-14);
        assert!(rel(eq.p0, 0.0128) < 1e-14);
    }

    #[test]
    fn rejects_drop_probability_above_one() {
        let p = NetworkParams { n_sessions: 1000.0, capacity: 100.0, prop_delay: 0.1, q_ref: 0.0, buffer: 10.0 };
        assert!(matches!(equilibrium(&p), Err(Error::InfeasibleOperatingPoint { .. })));
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = [
            NetworkParams { q_ref: 900.0, ..NetworkParams::HOLLOT },
            NetworkParams { n_sessions: 0.0, ..NetworkParams::HOLLOT },
            NetworkParams { capacity: f64::NAN, ..NetworkParams::HOLLOT },
            NetworkParams { prop_delay: -0.1, ..NetworkParams::HOLLOT },
        ];
        for p in bad {
            assert!(matches!(equilibrium(&p), Err(Error::InvalidParams(_))), "{p:?}");
        }
    }

    #[test]
    fn linearization_structure() {
        let eq = equilibrium(&NetworkParams::HOLLOT).unwrap();
        let m = linearize(&NetworkParams::HOLLOT, &eq);
        assert_eq!(m.a_d[(1, 0)], 0.0);
        assert_eq!(m.a_d[(1, 1)], 0.0);
        assert_eq!(m.b[(1, 0)], 0.0);
        assert_eq!(m.h, eq.r0);
    }

    #[test]
    fn input_matrix_at_rounded_rtt() {
        let eq = equilibrium_at_rtt(&NetworkParams::HOLLOT, 0.246).unwrap();
        let m = linearize(&NetworkParams::HOLLOT, &eq);
        // -3750² · 0.246 / 7200
        assert!((m.b[(0, 0)] + 480.46875).abs() < 1e-9);
    }

    #[test]
    fn polytope_corner_evaluation() {
        let poly = build_polytope(&NetworkParams::HOLLOT, 0.1, 0.4).unwrap();
        // ρ1 high, ρ2 high, ρ3 high → (10, 100, 0.4)
        let v = &poly.vertices[7];
        for (c, e) in poly.corner(7).iter().zip([10.0, 100.0, 0.4]) {
            assert!((c - e).abs() < 1e-12);
        }
        assert!((v.a[(0, 0)] + 1.6).abs() < 1e-12);
        assert!((v.a[(0, 1)] + 100.0 / 3750.0).abs() < 1e-12);
        assert!((v.a[(1, 0)] - 600.0).abs() < 1e-12);
        assert!((v.a[(1, 1)] + 10.0).abs() < 1e-12);
        for (c, e) in poly.corner(0).iter().zip([2.5, 6.25, 0.1]) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_polytope_matches_linearization() {
        let eq = equilibrium(&NetworkParams::HOLLOT).unwrap();
        let nominal = linearize(&NetworkParams::HOLLOT, &eq);
        let poly = build_polytope(&NetworkParams::HOLLOT, eq.r0, eq.r0).unwrap();
        for v in &poly.vertices {
            for (x, y) in v.a.iter().chain(v.a_d.iter()).chain(v.b.iter()).zip(
                nominal.a.iter().chain(nominal.a_d.iter()).chain(nominal.b.iter()),
            ) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn polytope_rejects_bad_interval() {
        assert!(build_polytope(&NetworkParams::HOLLOT, 0.4, 0.1).is_err());
        assert!(build_polytope(&NetworkParams::HOLLOT, 0.0, 0.1).is_err());
    }

    #[test]
    fn gain_row_pads() {
        let g = Gain::new(vec![1.0]);
        assert_eq!(g.row(2), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }
}
