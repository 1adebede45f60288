//! Dense LMI feasibility engine.
//!
//! A problem is a set of matrix decision variables plus affine
//! symmetric-matrix constraints `F_k(x) ≺ 0`. [`solve_feasibility`]
//! maximizes a uniform margin `t` subject to
//!
//! ```text
//! F_k(x) + t·I ⪯ 0          for every constraint k
//! V ⪰ I                     for every variable flagged positive-definite
//! t ≤ margin_cap,  |xᵢ| ≤ var_bound
//! ```
//!
//! and reports `CertifiedFeasible` when the margin measured by an
//! eigenvalue re-evaluation of the returned assignment reaches
//! `feas_tol`. The engine never claims infeasibility; failing to reach the
//! tolerance is reported as `NoCertificate`.

mod ipm;

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense symmetric matrix. Symmetry is enforced on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Accepts `m` if it is square and symmetric to a relative `1e-10`,
    /// then averages it with its transpose.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{:?} is not square", m.shape())));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 * (1.0 + m.amax()) {
            return Err(Error::NonSymmetric(format!("asymmetry {asym:e}")));
        }
        Ok(Self((&m + m.transpose()) * 0.5))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(m: &SymMatrix) -> f64 {
    if m.order() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.0.clone()).eigenvalues.min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig(m: &SymMatrix) -> f64 {
    if m.order() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(m.0.clone()).eigenvalues.max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric,
    Rectangular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVariable {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: VarKind,
    /// Variable must be positive definite; normalized to `V ⪰ I`.
    pub positive_definite: bool,
}

impl MatrixVariable {
    /// Number of scalar unknowns.
    pub fn dim(&self) -> usize {
        match self.kind {
            VarKind::Symmetric => self.rows * (self.rows + 1) / 2,
            VarKind::Rectangular => self.rows * self.cols,
        }
    }

    /// Basis matrix of scalar coordinate `j`.
    fn basis(&self, j: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.rows, self.cols);
        match self.kind {
            VarKind::Symmetric => {
                let (r, c) = sym_index(self.rows, j);
                e[(r, c)] = 1.0;
                e[(c, r)] = 1.0;
            }
            VarKind::Rectangular => {
                e[(j / self.cols, j % self.cols)] = 1.0;
            }
        }
        e
    }

    fn assemble(&self, coords: &[f64]) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.rows, self.cols);
        for (j, &x) in coords.iter().enumerate() {
            match self.kind {
                VarKind::Symmetric => {
                    let (r, c) = sym_index(self.rows, j);
                    v[(r, c)] = x;
                    v[(c, r)] = x;
                }
                VarKind::Rectangular => v[(j / self.cols, j % self.cols)] = x,
            }
        }
        v
    }

    fn coords(&self, value: &DMatrix<f64>) -> Vec<f64> {
        (0..self.dim())
            .map(|j| match self.kind {
                VarKind::Symmetric => {
                    let (r, c) = sym_index(self.rows, j);
                    0.5 * (value[(r, c)] + value[(c, r)])
                }
                VarKind::Rectangular => value[(j / self.cols, j % self.cols)],
            })
            .collect()
    }
}

/// Row-major upper-triangle enumeration: (0,0), (0,1), …, (0,n−1), (1,1), …
fn sym_index(n: usize, mut j: usize) -> (usize, usize) {
    for r in 0..n {
        let len = n - r;
        if j < len {
            return (r, r + j);
        }
        j -= len;
    }
    unreachable!("symmetric coordinate out of range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone)]
struct PlacedTerm {
    row: usize,
    col: usize,
    left: DMatrix<f64>,
    var: VarId,
    right: DMatrix<f64>,
    /// Symmetric piece on a diagonal block: contributes `sym(L V R)`
    /// instead of `⟨L V R⟩`.
    diagonal: bool,
}

/// Affine symmetric-matrix function `F(x) = F₀ + Σ (placed terms)` with
/// the sense `F(x) ≺ 0`.
///
/// [`add_term`](Self::add_term) places `M = L·V·R` at offset `(row, col)`
/// and `Mᵀ` at `(col, row)`, summing where the two overlap; on a diagonal
/// placement this gives `⟨M⟩ = M + Mᵀ`. [`add_sym_term`](Self::add_sym_term) adds a symmetric
/// piece (such as `±Q` or `(h/r)·R`) as-is.
#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub name: String,
    order: usize,
    constant: DMatrix<f64>,
    terms: Vec<PlacedTerm>,
}

impl LmiConstraint {
    pub fn new(name: impl Into<String>, order: usize) -> Self {
        Self {
            name: name.into(),
            order,
            constant: DMatrix::zeros(order, order),
            terms: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn check_fit(&self, row: usize, col: usize, shape: (usize, usize)) -> Result<()> {
        if row + shape.0 > self.order || col + shape.1 > self.order {
            return Err(Error::Dimension(format!(
                "{}: block {:?} at ({row}, {col}) exceeds order {}",
                self.name, shape, self.order
            )));
        }
        Ok(())
    }

    /// Places `M` at `(row, col)` and `Mᵀ` mirrored; a square diagonal
    /// placement requires `M` symmetric and adds it once.
    pub fn add_constant(&mut self, row: usize, col: usize, m: &DMatrix<f64>) -> Result<()> {
        self.check_fit(row, col, m.shape())?;
        if row == col && m.is_square() {
            let s = SymMatrix::new(m.clone())
                .map_err(|_| Error::NonSymmetric(format!("{}: diagonal constant", self.name)))?;
            let mut view = self.constant.view_mut((row, col), m.shape());
            view += s.as_matrix();
        } else {
            let mut view = self.constant.view_mut((row, col), m.shape());
            view += m;
            let mut view = self.constant.view_mut((col, row), (m.ncols(), m.nrows()));
            view += m.transpose();
        }
        Ok(())
    }

    fn push_term(
        &mut self,
        problem: &LmiProblem,
        row: usize,
        col: usize,
        left: DMatrix<f64>,
        var: VarId,
        right: DMatrix<f64>,
        diagonal: bool,
    ) -> Result<()> {
        let v = problem
            .vars
            .get(var.0)
            .ok_or_else(|| Error::Dimension(format!("unknown variable {var:?}")))?;
        if left.ncols() != v.rows || right.nrows() != v.cols {
            return Err(Error::Dimension(format!(
                "{}: term {}×{} · {} ({}×{}) · {}×{}",
                self.name,
                left.nrows(),
                left.ncols(),
                v.name,
                v.rows,
                v.cols,
                right.nrows(),
                right.ncols()
            )));
        }
        let shape = (left.nrows(), right.ncols());
        self.check_fit(row, col, shape)?;
        if diagonal && (row != col || shape.0 != shape.1) {
            return Err(Error::Dimension(format!(
                "{}: symmetric term must sit on a square diagonal block",
                self.name
            )));
        }
        self.terms.push(PlacedTerm { row, col, left, var, right, diagonal });
        Ok(())
    }

    /// Adds `L·V·R` at `(row, col)` mirrored (see type docs).
    pub fn add_term(
        &mut self,
        problem: &LmiProblem,
        row: usize,
        col: usize,
        left: DMatrix<f64>,
        var: VarId,
        right: DMatrix<f64>,
    ) -> Result<()> {
        self.push_term(problem, row, col, left, var, right, false)
    }

    /// Adds the symmetric part of `L·V·R` on the diagonal block at `offset`.
    pub fn add_sym_term(
        &mut self,
        problem: &LmiProblem,
        offset: usize,
        left: DMatrix<f64>,
        var: VarId,
        right: DMatrix<f64>,
    ) -> Result<()> {
        self.push_term(problem, offset, offset, left, var, right, true)
    }

    /// Adds `scale · V` on the diagonal at `offset` (V square).
    pub fn add_scaled(&mut self, problem: &LmiProblem, offset: usize, var: VarId, scale: f64) -> Result<()> {
        let v = problem
            .vars
            .get(var.0)
            .ok_or_else(|| Error::Dimension(format!("unknown variable {var:?}")))?;
        let (r, c) = (v.rows, v.cols);
        self.add_sym_term(problem, offset, DMatrix::identity(r, r) * scale, var, DMatrix::identity(c, c))
    }

    fn place(&self, out: &mut DMatrix<f64>, t: &PlacedTerm, value: &DMatrix<f64>) {
        let m = &t.left * value * &t.right;
        if t.diagonal {
            let mut view = out.view_mut((t.row, t.col), m.shape());
            view += (&m + m.transpose()) * 0.5;
        } else {
            {
                let mut view = out.view_mut((t.row, t.col), m.shape());
                view += &m;
            }
            let mut view = out.view_mut((t.col, t.row), (m.ncols(), m.nrows()));
            view += m.transpose();
        }
    }

    /// `F(x)` at a full assignment.
    pub fn evaluate(&self, assignment: &Assignment) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for t in &self.terms {
            self.place(&mut f, t, &assignment.values[t.var.0]);
        }
        f
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    /// Multiplies the constant and every coefficient map by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut c = self.clone();
        c.constant *= alpha;
        for t in &mut c.terms {
            t.left *= alpha;
        }
        c
    }
}

/// Values for every variable of a problem, indexed by [`VarId`].
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub values: Vec<DMatrix<f64>>,
}

impl Assignment {
    pub fn get(&self, id: VarId) -> &DMatrix<f64> {
        &self.values[id.0]
    }

    /// All-zero assignment for `problem`.
    pub fn zeros(problem: &LmiProblem) -> Self {
        Self {
            values: problem.vars.iter().map(|v| DMatrix::zeros(v.rows, v.cols)).collect(),
        }
    }

    pub fn set(&mut self, id: VarId, value: DMatrix<f64>) {
        self.values[id.0] = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    CertifiedFeasible,
    NoCertificate,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::CertifiedFeasible => "certified-feasible",
            Status::NoCertificate => "no-certificate",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: Status,
    pub assignment: Assignment,
    /// Measured margin `min_k −λ_max(F_k(x))`.
    pub margin: f64,
    pub iterations: usize,
    /// Whether the interior-point iteration met its gap tolerance.
    pub converged: bool,
}

impl SdpSolution {
    pub fn is_certified(&self) -> bool {
        self.status == Status::CertifiedFeasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Minimum measured margin for a certificate.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Upper bound on the margin; keeps homogeneous problems bounded.
    pub margin_cap: f64,
    /// Box bound on every scalar unknown.
    pub var_bound: f64,
    /// Relative duality gap / residual tolerance of the interior-point loop.
    pub ipm_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            max_iter: 500,
            margin_cap: 1.0,
            var_bound: 1e6,
            ipm_tol: 1e-9,
        }
    }
}

/// Variables and constraints of an LMI feasibility problem.
#[derive(Debug, Clone, Default)]
pub struct LmiProblem {
    vars: Vec<MatrixVariable>,
    constraints: Vec<LmiConstraint>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, var: MatrixVariable) -> Result<VarId> {
        if var.rows == 0 || var.cols == 0 {
            return Err(Error::Dimension(format!("variable {} is empty", var.name)));
        }
        if var.kind == VarKind::Symmetric && var.rows != var.cols {
            return Err(Error::Dimension(format!("symmetric variable {} is not square", var.name)));
        }
        if var.positive_definite && var.kind != VarKind::Symmetric {
            return Err(Error::Dimension(format!(
                "positive-definite variable {} must be symmetric",
                var.name
            )));
        }
        self.vars.push(var);
        Ok(VarId(self.vars.len() - 1))
    }

    /// Symmetric variable; `pd` requests positive definiteness.
    pub fn symmetric(&mut self, name: &str, n: usize, pd: bool) -> Result<VarId> {
        self.add_var(MatrixVariable {
            name: name.into(),
            rows: n,
            cols: n,
            kind: VarKind::Symmetric,
            positive_definite: pd,
        })
    }

    pub fn rectangular(&mut self, name: &str, rows: usize, cols: usize) -> Result<VarId> {
        self.add_var(MatrixVariable {
            name: name.into(),
            rows,
            cols,
            kind: VarKind::Rectangular,
            positive_definite: false,
        })
    }

    /// Starts a constraint of the given order; push it back with
    /// [`add_constraint`](Self::add_constraint).
    pub fn constraint(&self, name: impl Into<String>, order: usize) -> LmiConstraint {
        LmiConstraint::new(name, order)
    }

    pub fn add_constraint(&mut self, c: LmiConstraint) -> Result<()> {
        for t in &c.terms {
            if t.var.0 >= self.vars.len() {
                return Err(Error::Dimension(format!("{}: unknown variable", c.name)));
            }
        }
        self.constraints.push(c);
        Ok(())
    }

    pub fn vars(&self) -> &[MatrixVariable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[LmiConstraint] {
        &self.constraints
    }

    pub fn var(&self, id: VarId) -> &MatrixVariable {
        &self.vars[id.0]
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.vars.len() + 1);
        let mut acc = 0;
        for v in &self.vars {
            off.push(acc);
            acc += v.dim();
        }
        off.push(acc);
        off
    }

    /// Total number of scalar unknowns.
    pub fn n_scalars(&self) -> usize {
        self.vars.iter().map(MatrixVariable::dim).sum()
    }

    fn assignment_from(&self, x: &[f64]) -> Assignment {
        let off = self.offsets();
        Assignment {
            values: self
                .vars
                .iter()
                .enumerate()
                .map(|(i, v)| v.assemble(&x[off[i]..off[i + 1]]))
                .collect(),
        }
    }

    /// Flattens an assignment into scalar coordinates.
    pub fn flatten(&self, a: &Assignment) -> Vec<f64> {
        self.vars
            .iter()
            .zip(&a.values)
            .flat_map(|(v, val)| v.coords(val))
            .collect()
    }

    /// Coefficient matrices `(global index, F_j)` of one constraint.
    fn coefficient_maps(&self, c: &LmiConstraint, off: &[usize]) -> Vec<(usize, DMatrix<f64>)> {
        let mut maps: Vec<(usize, DMatrix<f64>)> = Vec::new();
        let mut used: Vec<usize> = c.terms.iter().map(|t| t.var.0).collect();
        used.sort_unstable();
        used.dedup();
        for vi in used {
            let var = &self.vars[vi];
            for j in 0..var.dim() {
                let e = var.basis(j);
                let mut f = DMatrix::zeros(c.order, c.order);
                for t in c.terms.iter().filter(|t| t.var.0 == vi) {
                    c.place(&mut f, t, &e);
                }
                if f.amax() > 0.0 {
                    maps.push((off[vi] + j, f));
                }
            }
        }
        maps
    }
}

/// Per-constraint outcome of [`verify_assignment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintVerdict {
    pub name: String,
    pub max_eig: f64,
    pub pass: bool,
}

/// Re-evaluates every constraint at `assignment` and checks
/// `λ_max(F_k(x)) ≤ −tol`; positive-definite variables are checked for
/// `λ_min(V) > 0` and reported as extra entries named after the variable.
pub fn verify_assignment(problem: &LmiProblem, assignment: &Assignment, tol: f64) -> Vec<ConstraintVerdict> {
    let mut out: Vec<ConstraintVerdict> = problem
        .constraints
        .iter()
        .map(|c| {
            let f = c.evaluate(assignment);
            let lmax = max_eig(&SymMatrix((&f + f.transpose()) * 0.5));
            ConstraintVerdict {
                name: c.name.clone(),
                max_eig: lmax,
                pass: lmax <= -tol,
            }
        })
        .collect();
    for (i, v) in problem.vars.iter().enumerate() {
        if v.positive_definite {
            let val = &assignment.values[i];
            let lmax = -min_eig(&SymMatrix((val + val.transpose()) * 0.5));
            out.push(ConstraintVerdict {
                name: format!("{} ≻ 0", v.name),
                max_eig: lmax,
                pass: lmax < 0.0,
            });
        }
    }
    out
}

/// Measured margin of an assignment: `min_k −λ_max(F_k(x))`, or `−∞` if a
/// positive-definite variable is not.
pub fn measured_margin(problem: &LmiProblem, assignment: &Assignment) -> f64 {
    let mut margin = f64::INFINITY;
    for c in &problem.constraints {
        let f = c.evaluate(assignment);
        margin = margin.min(-max_eig(&SymMatrix((&f + f.transpose()) * 0.5)));
    }
    for (i, v) in problem.vars.iter().enumerate() {
        if v.positive_definite {
            let val = &assignment.values[i];
            if min_eig(&SymMatrix((val + val.transpose()) * 0.5)) <= 0.0 {
                return f64::NEG_INFINITY;
            }
        }
    }
    margin
}

/// Maximizes the uniform negativity margin of `problem` (see module docs).
pub fn solve_feasibility(problem: &LmiProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    for c in &problem.constraints {
        if !c.constant.iter().all(|v| v.is_finite()) || c.terms.iter().any(|t| {
            !(t.left.iter().all(|v| v.is_finite()) && t.right.iter().all(|v| v.is_finite()))
        }) {
            return Err(Error::InvalidParams(format!("{}: non-finite coefficient", c.name)));
        }
        let asym = (&c.constant - c.constant.transpose()).amax();
        if asym > 1e-12 * (1.0 + c.constant.amax()) {
            return Err(Error::NonSymmetric(c.name.clone()));
        }
    }
    if problem.constraints.is_empty() {
        return Err(Error::Dimension("problem has no constraints".into()));
    }

    let off = problem.offsets();
    let n = *off.last().unwrap_or(&0);
    let t_idx = n;
    let mut blocks = Vec::new();

    // F_k(x) + t·I ⪯ 0  ⇔  −F₀ − Σ xᵢFᵢ − t·I ⪰ 0
    for c in &problem.constraints {
        let mut a = problem.coefficient_maps(c, &off);
        a.push((t_idx, DMatrix::identity(c.order, c.order)));
        blocks.push(ipm::Block { c: -&c.constant, a });
    }
    // V − I ⪰ 0
    for (vi, var) in problem.vars.iter().enumerate() {
        if var.positive_definite {
            let a = (0..var.dim()).map(|j| (off[vi] + j, -var.basis(j))).collect();
            blocks.push(ipm::Block { c: -DMatrix::identity(var.rows, var.rows), a });
        }
    }
    // t ≤ cap
    blocks.push(ipm::Block {
        c: DMatrix::from_element(1, 1, opts.margin_cap),
        a: vec![(t_idx, DMatrix::from_element(1, 1, 1.0))],
    });
    // |xᵢ| ≤ bound
    for i in 0..n {
        for s in [1.0, -1.0] {
            blocks.push(ipm::Block {
                c: DMatrix::from_element(1, 1, opts.var_bound),
                a: vec![(i, DMatrix::from_element(1, 1, s))],
            });
        }
    }
    let mut b = DVector::zeros(n + 1);
    b[t_idx] = 1.0;
    let conic = ipm::ConicProblem { blocks, b };

    let mut best_margin = f64::NEG_INFINITY;
    let mut best_x: Vec<f64> = vec![0.0; n];
    let cap = opts.margin_cap;
    let mut monitor = |y: &DVector<f64>| -> bool {
        let x = &y.as_slice()[..n];
        let asg = problem.assignment_from(x);
        let m = measured_margin(problem, &asg);
        if m > best_margin {
            best_margin = m;
            best_x = x.to_vec();
        }
        // the cap is the best attainable value; nothing left to improve
        best_margin >= cap * (1.0 - 1e-9)
    };
    let settings = ipm::IpmSettings {
        max_iter: opts.max_iter,
        gap_tol: opts.ipm_tol,
        feas_tol: opts.ipm_tol,
    };
    let outcome = ipm::solve(&conic, settings, &mut monitor);

    let assignment = problem.assignment_from(&best_x);
    let status = if best_margin >= opts.feas_tol {
        Status::CertifiedFeasible
    } else {
        Status::NoCertificate
    };
    Ok(SdpSolution {
        status,
        assignment,
        margin: best_margin,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn min_eig_examples() {
        assert!((min_eig(&SymMatrix::identity(3)) - 1.0).abs() < 1e-14);
        assert!((min_eig(&SymMatrix::from_diagonal(&[-1.0, 2.0])) + 1.0).abs() < 1e-14);
        let swap = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((min_eig(&swap) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmatrix_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NonSymmetric(_))));
    }

    #[test]
    fn one_dimensional_interval() {
        // diag(x − 1, −x) ≺ 0 ⇔ 0 < x < 1; best margin 0.5 at x = 0.5
        let mut p = LmiProblem::new();
        let x = p.rectangular("x", 1, 1).unwrap();
        let mut c = p.constraint("interval", 2);
        c.add_constant(0, 0, &scalar(-1.0)).unwrap();
        c.add_sym_term(&p, 0, scalar(1.0), x, scalar(1.0)).unwrap();
        c.add_sym_term(&p, 1, scalar(-1.0), x, scalar(1.0)).unwrap();
        p.add_constraint(c).unwrap();
        let sol = solve_feasibility(&p, &SolverOptions::default()).unwrap();
        assert!(sol.is_certified());
        let xv = sol.assignment.get(x)[(0, 0)];
        assert!((xv - 0.5).abs() < 1e-5, "x = {xv}");
        assert!((sol.margin - 0.5).abs() < 1e-6);
    }

    #[test]
    fn normalized_positive_definite_variable() {
        let mut p = LmiProblem::new();
        let pv = p.symmetric("P", 2, true).unwrap();
        let mut c = p.constraint("-P", 2);
        c.add_scaled(&p, 0, pv, -1.0).unwrap();
        p.add_constraint(c).unwrap();
        let sol = solve_feasibility(&p, &SolverOptions::default()).unwrap();
        assert!(sol.is_certified());
        assert!(sol.margin >= 1.0 - 1e-9);
    }

    #[test]
    fn unstable_scalar_iod_has_no_certificate() {
        // [[2P+Q, 0.5P], [0.5P, −Q]] ≺ 0 with P, Q ≻ 0 is infeasible
        let mut p = LmiProblem::new();
        let pv = p.symmetric("P", 1, true).unwrap();
        let qv = p.symmetric("Q", 1, true).unwrap();
        let mut c = p.constraint("iod", 2);
        c.add_scaled(&p, 0, pv, 2.0).unwrap();
        c.add_scaled(&p, 0, qv, 1.0).unwrap();
        c.add_term(&p, 0, 1, scalar(0.5), pv, scalar(1.0)).unwrap();
        c.add_scaled(&p, 1, qv, -1.0).unwrap();
        p.add_constraint(c).unwrap();
        let sol = solve_feasibility(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::NoCertificate);
        assert!(sol.margin < 0.0);
    }

    #[test]
    fn zero_assignment_fails_identity_constant() {
        let mut p = LmiProblem::new();
        let x = p.rectangular("x", 1, 1).unwrap();
        let mut c = p.constraint("id", 2);
        c.add_constant(0, 0, &DMatrix::identity(2, 2)).unwrap();
        c.add_term(&p, 0, 1, scalar(1.0), x, scalar(0.0)).unwrap();
        p.add_constraint(c).unwrap();
        let v = verify_assignment(&p, &Assignment::zeros(&p), 1e-9);
        assert_eq!(v.len(), 1);
        assert!(!v[0].pass);
        assert!((v[0].max_eig - 1.0).abs() < 1e-14);
    }

    #[test]
    fn term_dimension_mismatch() {
        let mut p = LmiProblem::new();
        let x = p.symmetric("X", 2, false).unwrap();
        let mut c = p.constraint("bad", 2);
        assert!(c.add_term(&p, 0, 0, scalar(1.0), x, scalar(1.0)).is_err());
        assert!(c.add_constant(1, 1, &DMatrix::identity(2, 2)).is_err());
        assert!(p.rectangular("empty", 0, 1).is_err());
        assert!(p.add_var(MatrixVariable {
            name: "S".into(),
            rows: 2,
            cols: 3,
            kind: VarKind::Symmetric,
            positive_definite: false,
        })
        .is_err());
    }

    #[test]
    fn asymmetric_diagonal_constant_rejected() {
        let mut c = LmiConstraint::new("c", 2);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(c.add_constant(0, 0, &m), Err(Error::NonSymmetric(_))));
    }

    #[test]
    fn symmetric_coordinates_roundtrip() {
        let v = MatrixVariable {
            name: "Q".into(),
            rows: 3,
            cols: 3,
            kind: VarKind::Symmetric,
            positive_definite: false,
        };
        let coords: Vec<f64> = (0..v.dim()).map(|i| i as f64 + 1.0).collect();
        let m = v.assemble(&coords);
        assert_eq!(m, m.transpose());
        assert_eq!(v.coords(&m), coords);
    }

    #[test]
    fn lyapunov_for_hurwitz_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 10.0, 0.0, -2.0]);
        let mut p = LmiProblem::new();
        let pv = p.symmetric("P", 2, true).unwrap();
        let mut c = p.constraint("lyap", 2);
        c.add_term(&p, 0, 0, DMatrix::identity(2, 2), pv, a.clone()).unwrap();
        p.add_constraint(c).unwrap();
        let sol = solve_feasibility(&p, &SolverOptions::default()).unwrap();
        assert!(sol.is_certified(), "margin {}", sol.margin);
        let ver = verify_assignment(&p, &sol.assignment, sol.margin / 2.0);
        assert!(ver.iter().all(|v| v.pass));
    }
}
