//! Dense convex solver for quadratic programs with second-order cone rows.
//!
//! ```text
//! minimize    ½ xᵀ H x + fᵀ x + c
//! subject to  A_eq x = b_eq
//!             lb ≤ x ≤ ub
//!             ‖F_k x + g_k‖₂ ≤ a_kᵀ x + b_k      (soc_rows)
//!             c_kᵀ x ≥ d_k                       (lin_rows)
//! ```
//!
//! Equalities are eliminated up front by Gauss-Jordan reduction (the MPC
//! programs have one equality row per predicted state, and the remaining
//! free variables are the inputs). The reduced problem is solved with a
//! primal-dual interior point method using Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps. Everything is deterministic: the
//! pivot order and iteration sequence depend only on the program data.

mod elim;
mod fixture;
mod ipm;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use fixture::{read_fixture, write_fixture};

/// `‖F x + g‖₂ ≤ aᵀ x + b`
#[derive(Debug, Clone, PartialEq)]
pub struct SocRow {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DVector<f64>,
    pub b: f64,
}

impl SocRow {
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        ((&self.f * x + &self.g).norm() - self.a.dot(x) - self.b).max(0.0)
    }
}

/// `cᵀ x ≥ d`
#[derive(Debug, Clone, PartialEq)]
pub struct LinRow {
    pub c: DVector<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    pub n: usize,
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    /// Constant added to the objective; does not affect the minimizer.
    pub cost_offset: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub soc_rows: Vec<SocRow>,
    pub lin_rows: Vec<LinRow>,
}

impl ConeProgram {
    /// Unconstrained program with zero cost in `n` variables.
    pub fn new(n: usize) -> Self {
        ConeProgram {
            n,
            h: DMatrix::zeros(n, n),
            f: DVector::zeros(n),
            cost_offset: 0.0,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
            soc_rows: Vec::new(),
            lin_rows: Vec::new(),
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x) + self.cost_offset
    }

    pub fn n_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn set_equalities(&mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
    }

    /// Checks dimensions, finiteness and symmetry / positive semidefiniteness of `H`.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.n;
        if self.h.shape() != (n, n) || self.f.len() != n || self.lb.len() != n || self.ub.len() != n {
            return Err(format!("cost or bound dimensions do not match n = {n}"));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err("equality dimensions are inconsistent".into());
        }
        for (k, r) in self.soc_rows.iter().enumerate() {
            if r.f.ncols() != n || r.f.nrows() != r.g.len() || r.a.len() != n {
                return Err(format!("cone row {k} has inconsistent dimensions"));
            }
        }
        for (k, r) in self.lin_rows.iter().enumerate() {
            if r.c.len() != n {
                return Err(format!("linear row {k} has length {} (expected {n})", r.c.len()));
            }
        }
        let finite = self.h.iter().chain(self.f.iter()).chain(self.a_eq.iter()).chain(self.b_eq.iter());
        if !finite.into_iter().all(|v| v.is_finite()) {
            return Err("cost or equality data are not finite".into());
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-9 * (1.0 + self.h.amax()) {
            return Err(format!("cost matrix is not symmetric (max asymmetry {asym:e})"));
        }
        if n > 0 {
            let min_eig = self.h.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-9 * (1.0 + self.h.amax()) {
                return Err(format!("cost matrix is not positive semidefinite (min eigenvalue {min_eig:e})"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIter,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative primal/dual residual target of the interior point iteration.
    pub feas_tol: f64,
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// Acceptance thresholds for declaring a point optimal.
    pub primal_accept: f64,
    pub stationarity_accept: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 100,
            feas_tol: 1e-10,
            gap_tol: 1e-10,
            primal_accept: 1e-6,
            stationarity_accept: 1e-5,
        }
    }
}

/// Lagrange multipliers in the sign convention of
/// `∇ = Hx + f + A_eqᵀ ν + u - l - Σ c_k λ_k - Σ (a_k t_k + F_kᵀ w_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    pub eq: DVector<f64>,
    pub upper: DVector<f64>,
    pub lower: DVector<f64>,
    pub lin: DVector<f64>,
    /// One `(t, w)` pair per cone row, stacked as `[t, w...]`.
    pub soc: Vec<DVector<f64>>,
}

impl Duals {
    pub fn zeros(p: &ConeProgram) -> Self {
        Duals {
            eq: DVector::zeros(p.n_eq()),
            upper: DVector::zeros(p.n),
            lower: DVector::zeros(p.n),
            lin: DVector::zeros(p.lin_rows.len()),
            soc: p.soc_rows.iter().map(|r| DVector::zeros(r.g.len() + 1)).collect(),
        }
    }
}

/// Infinity-norm KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Residuals {
    pub equality: f64,
    pub bounds: f64,
    pub cone: f64,
    pub linear: f64,
    pub stationarity: f64,
    /// Sum of slack × multiplier products.
    pub complementarity: f64,
}

impl Residuals {
    pub fn primal(&self) -> f64 {
        self.equality.max(self.bounds).max(self.cone).max(self.linear)
    }
}

/// KKT residuals of `x` with the given multipliers (all zero when `None`).
pub fn kkt_residuals(p: &ConeProgram, x: &DVector<f64>, duals: Option<&Duals>) -> Residuals {
    let equality = if p.n_eq() > 0 { (&p.a_eq * x - &p.b_eq).amax() } else { 0.0 };
    let mut bounds = 0.0f64;
    for i in 0..p.n {
        bounds = bounds.max(p.lb[i] - x[i]).max(x[i] - p.ub[i]);
    }
    let cone = p.soc_rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
    let linear = p.lin_rows.iter().map(|r| (r.d - r.c.dot(x)).max(0.0)).fold(0.0, f64::max);

    let zeros;
    let d = match duals {
        Some(d) => d,
        None => {
            zeros = Duals::zeros(p);
            &zeros
        }
    };
    let mut grad = &p.h * x + &p.f;
    if p.n_eq() > 0 {
        grad += p.a_eq.tr_mul(&d.eq);
    }
    grad += &d.upper;
    grad -= &d.lower;
    let mut comp = 0.0;
    for i in 0..p.n {
        if d.upper[i] != 0.0 {
            comp += (p.ub[i] - x[i]) * d.upper[i];
        }
        if d.lower[i] != 0.0 {
            comp += (x[i] - p.lb[i]) * d.lower[i];
        }
    }
    for (r, &l) in p.lin_rows.iter().zip(d.lin.iter()) {
        grad.axpy(-l, &r.c, 1.0);
        comp += (r.c.dot(x) - r.d) * l;
    }
    for (r, w) in p.soc_rows.iter().zip(&d.soc) {
        let t = w[0];
        let wv = w.rows(1, w.len() - 1);
        grad.axpy(-t, &r.a, 1.0);
        grad -= r.f.tr_mul(&wv);
        let s0 = r.a.dot(x) + r.b;
        let s1 = &r.f * x + &r.g;
        comp += s0 * t + s1.dot(&wv);
    }
    Residuals { equality, bounds, cone, linear, stationarity: grad.amax(), complementarity: comp }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub duals: Duals,
    pub status: Status,
    pub iterations: usize,
    pub solve_time: f64,
    pub objective: f64,
    pub kkt: Residuals,
}

/// Inequalities in the standard form `G x + s = h`, `s ∈ R₊ˡ × Q × … × Q`.
struct StandardForm {
    g: DMatrix<f64>,
    h: DVector<f64>,
    n_orthant: usize,
    soc_dims: Vec<usize>,
    upper_idx: Vec<usize>,
    lower_idx: Vec<usize>,
}

fn standard_form(p: &ConeProgram) -> StandardForm {
    let n = p.n;
    let upper_idx: Vec<usize> = (0..n).filter(|&i| p.ub[i].is_finite()).collect();
    let lower_idx: Vec<usize> = (0..n).filter(|&i| p.lb[i].is_finite()).collect();
    let n_orthant = upper_idx.len() + lower_idx.len() + p.lin_rows.len();
    let soc_dims: Vec<usize> = p.soc_rows.iter().map(|r| r.g.len() + 1).collect();
    let m = n_orthant + soc_dims.iter().sum::<usize>();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    let mut row = 0;
    for &i in &upper_idx {
        g[(row, i)] = 1.0;
        h[row] = p.ub[i];
        row += 1;
    }
    for &i in &lower_idx {
        g[(row, i)] = -1.0;
        h[row] = -p.lb[i];
        row += 1;
    }
    for r in &p.lin_rows {
        g.row_mut(row).copy_from(&(-r.c.transpose()));
        h[row] = -r.d;
        row += 1;
    }
    for r in &p.soc_rows {
        g.row_mut(row).copy_from(&(-r.a.transpose()));
        h[row] = r.b;
        row += 1;
        let k = r.g.len();
        g.rows_mut(row, k).copy_from(&(-&r.f));
        h.rows_mut(row, k).copy_from(&r.g);
        row += k;
    }
    StandardForm { g, h, n_orthant, soc_dims, upper_idx, lower_idx }
}

fn unpack_duals(p: &ConeProgram, sf: &StandardForm, z: &DVector<f64>, eq: DVector<f64>) -> Duals {
    let mut d = Duals::zeros(p);
    d.eq = eq;
    let mut row = 0;
    for &i in &sf.upper_idx {
        d.upper[i] = z[row];
        row += 1;
    }
    for &i in &sf.lower_idx {
        d.lower[i] = z[row];
        row += 1;
    }
    for k in 0..p.lin_rows.len() {
        d.lin[k] = z[row];
        row += 1;
    }
    for (k, &dim) in sf.soc_dims.iter().enumerate() {
        d.soc[k] = z.rows(row, dim).into_owned();
        row += dim;
    }
    d
}

fn failed(p: &ConeProgram, status: Status, iterations: usize, start: Instant) -> Solution {
    let x = DVector::zeros(p.n);
    let duals = Duals::zeros(p);
    let kkt = kkt_residuals(p, &x, Some(&duals));
    Solution {
        objective: p.objective(&x),
        x,
        duals,
        status,
        iterations,
        solve_time: start.elapsed().as_secs_f64(),
        kkt,
    }
}

/// Solves `p`. Infeasibility and non-convergence are reported through
/// [`Solution::status`], never as a panic or error.
pub fn solve(p: &ConeProgram, cfg: &SolverConfig) -> Solution {
    let start = Instant::now();
    if let Err(msg) = p.validate() {
        log::warn!("rejecting malformed cone program: {msg}");
        return failed(p, Status::Infeasible, 0, start);
    }
    if (0..p.n).any(|i| p.lb[i] > p.ub[i]) {
        return failed(p, Status::Infeasible, 0, start);
    }
    let sf = standard_form(p);

    let reduction = match elim::eliminate(&p.a_eq, &p.b_eq) {
        Some(r) => r,
        None => return failed(p, Status::Infeasible, 0, start),
    };
    let (p_red, q_red, g_red, h_red) = reduction.reduce(&p.h, &p.f, &sf.g, &sf.h);
    let cones = ipm::Cones { n_orthant: sf.n_orthant, soc_dims: sf.soc_dims.clone() };
    let out = ipm::solve(&p_red, &q_red, &g_red, &h_red, &cones, cfg);

    let x = reduction.expand(&out.x);
    let mut grad = &p.h * &x + &p.f;
    if sf.g.nrows() > 0 {
        grad += sf.g.tr_mul(&out.z);
    }
    let nu = reduction.equality_duals(&grad);
    let duals = unpack_duals(p, &sf, &out.z, nu);
    let kkt = kkt_residuals(p, &x, Some(&duals));

    let mut status = out.status;
    if status == Status::Optimal
        && (kkt.primal() > cfg.primal_accept || kkt.stationarity > cfg.stationarity_accept)
    {
        log::debug!("interior point converged but KKT acceptance failed: {kkt:?}");
        status = Status::MaxIter;
    }
    Solution {
        objective: p.objective(&x),
        x,
        duals,
        status,
        iterations: out.iterations,
        solve_time: start.elapsed().as_secs_f64(),
        kkt,
    }
}
