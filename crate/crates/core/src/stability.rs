//! Characteristic roots of `ẋ = A x(t) + Ãd x(t − h)` by Chebyshev
//! collocation of the infinitesimal generator of the solution semigroup.
//!
//! The state on `[−h, 0]` is represented by its values at the Chebyshev
//! extremal nodes `θ_j = (h/2)(cos(jπ/N) − 1)`. Derivative rows use the
//! collocation differentiation matrix; the row at `θ = 0` carries the
//! dynamics `A u(0) + Ãd u(−h)`. The rightmost eigenvalues of this matrix
//! converge spectrally to the rightmost characteristic roots.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Approximate roots, sorted by descending real part.
    pub roots: Vec<Complex<f64>>,
    /// Largest real part.
    pub abscissa: f64,
    /// Number of collocation nodes.
    pub order: usize,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Stable means abscissa `< −margin`.
    pub margin: f64,
    pub start_order: usize,
    pub max_order: usize,
    /// Refinement stops once the abscissa moves less than this.
    pub refine_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { margin: 1e-6, start_order: 16, max_order: 256, refine_tol: 1e-8 }
    }
}

/// Chebyshev differentiation matrix on the `N + 1` extremal nodes of
/// `[−1, 1]`, `x_j = cos(jπ/N)`.
pub(crate) fn cheb_diff(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<f64> = (0..=n)
        .map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect();
    let c = |j: usize| if j == 0 || j == n { 2.0 } else { 1.0 };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                d[(i, j)] = c(i) / c(j) * sign / (x[i] - x[j]);
            }
        }
        // negative-sum trick for the diagonal
        let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    (x, d)
}

fn check(a: &DMatrix<f64>, a_d: &DMatrix<f64>, h: f64) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n || a_d.shape() != (n, n) || n == 0 {
        return Err(Error::Dimension(format!("A {:?}, Ãd {:?}", a.shape(), a_d.shape())));
    }
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::InvalidParams(format!("delay {h} must be non-negative")));
    }
    Ok(n)
}

fn sorted_report(mut roots: Vec<Complex<f64>>, order: usize, h: f64) -> SpectrumReport {
    roots.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let abscissa = roots.first().map_or(f64::NEG_INFINITY, |r| r.re);
    SpectrumReport { roots, abscissa, order, h }
}

/// Approximate spectrum with `order` collocation nodes (`order ≥ 8`). For
/// `h = 0` the roots are the eigenvalues of `A + Ãd`.
pub fn char_spectrum(a: &DMatrix<f64>, a_d: &DMatrix<f64>, h: f64, order: usize) -> Result<SpectrumReport> {
    let n = check(a, a_d, h)?;
    if order < 8 {
        return Err(Error::InvalidParams(format!("collocation order {order} below 8")));
    }
    if h == 0.0 {
        let roots = (a + a_d).complex_eigenvalues().iter().copied().collect();
        return Ok(sorted_report(roots, order, h));
    }
    let nn = order - 1;
    let (_, d) = cheb_diff(nn);
    let scale = 2.0 / h;
    let dim = (nn + 1) * n;
    let mut gen = DMatrix::zeros(dim, dim);
    gen.view_mut((0, 0), (n, n)).copy_from(a);
    {
        let mut v = gen.view_mut((0, nn * n), (n, n));
        v += a_d;
    }
    for i in 1..=nn {
        for j in 0..=nn {
            let w = scale * d[(i, j)];
            if w != 0.0 {
                for k in 0..n {
                    gen[(i * n + k, j * n + k)] = w;
                }
            }
        }
    }
    let roots = gen.complex_eigenvalues().iter().copied().collect();
    Ok(sorted_report(roots, order, h))
}

/// Spectrum refined by doubling the node count until the abscissa settles.
pub fn converged_spectrum(a: &DMatrix<f64>, a_d: &DMatrix<f64>, h: f64, opts: &OracleOptions) -> Result<SpectrumReport> {
    check(a, a_d, h)?;
    let mut order = opts.start_order.max(8);
    let mut prev = char_spectrum(a, a_d, h, order)?;
    if h == 0.0 {
        return Ok(prev);
    }
    while order * 2 <= opts.max_order {
        order *= 2;
        let next = char_spectrum(a, a_d, h, order)?;
        if (next.abscissa - prev.abscissa).abs() < opts.refine_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::OracleInconclusive(format!(
        "abscissa not settled at {} nodes (last {:e})",
        prev.order, prev.abscissa
    )))
}

/// `true` when the refined abscissa is below `−margin`.
pub fn is_stable(a: &DMatrix<f64>, a_d: &DMatrix<f64>, h: f64, opts: &OracleOptions) -> Result<bool> {
    Ok(converged_spectrum(a, a_d, h, opts)?.abscissa < -opts.margin)
}

/// Smallest destabilizing delay inside `[lo, hi]`, by bisection on
/// [`is_stable`] to `1e−4` s.
pub fn critical_delay(a: &DMatrix<f64>, a_d: &DMatrix<f64>, lo: f64, hi: f64, opts: &OracleOptions) -> Result<f64> {
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidBracket(format!("[{lo}, {hi}]")));
    }
    if !is_stable(a, a_d, lo, opts)? {
        return Err(Error::InvalidBracket(format!("unstable at lower end {lo}")));
    }
    if is_stable(a, a_d, hi, opts)? {
        return Err(Error::InvalidBracket(format!("stable at upper end {hi}")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if is_stable(a, a_d, mid, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn differentiation_matrix_is_exact_on_polynomials() {
        let (x, d) = cheb_diff(6);
        let f: Vec<f64> = x.iter().map(|v| v.powi(3) - 2.0 * v).collect();
        for i in 0..x.len() {
            let df: f64 = (0..x.len()).map(|j| d[(i, j)] * f[j]).sum();
            assert!((df - (3.0 * x[i] * x[i] - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn delay_free_abscissa() {
        for h in [0.0, 0.5, 3.0] {
            let rep = converged_spectrum(&s(-2.0), &s(0.0), h, &OracleOptions::default()).unwrap();
            assert!((rep.abscissa + 2.0).abs() < 1e-8, "h = {h}: {}", rep.abscissa);
        }
    }

    #[test]
    fn pure_delay_boundary() {
        let o = OracleOptions::default();
        assert!(is_stable(&s(0.0), &s(-1.0), 1.5, &o).unwrap());
        assert!(!is_stable(&s(0.0), &s(-1.0), 1.6, &o).unwrap());
    }

    #[test]
    fn zero_delay_matches_sum_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let ad = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, 0.4]);
        let rep = char_spectrum(&a, &ad, 0.0, 8).unwrap();
        let mut ev: Vec<f64> = (&a + &ad).complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        assert!((rep.abscissa - ev[0]).abs() < 1e-12);
    }

    #[test]
    fn rejects_low_order_and_bad_bracket() {
        assert!(char_spectrum(&s(-1.0), &s(0.0), 1.0, 4).is_err());
        let o = OracleOptions::default();
        // IOD-stable: no destabilizing delay in the bracket
        assert!(matches!(critical_delay(&s(-2.0), &s(0.5), 0.0, 10.0, &o), Err(Error::InvalidBracket(_))));
    }
}
