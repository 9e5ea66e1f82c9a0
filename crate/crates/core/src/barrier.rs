//! High-order control barrier functions for linear systems `ż = A z + B u`.
//!
//! Every chain member is a quadratic form, since `L_f` of a quadratic under
//! linear dynamics is again quadratic. The sampled-data compensation term
//! bounds how much the final chain condition can degrade while the input is
//! held constant for one sampling period.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `z ↦ zᵀ Π z + πᵀ z + c`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub pi: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub c: f64,
}

/// `z ↦ M z + o`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub m: DMatrix<f64>,
    pub o: DVector<f64>,
}

impl AffineMap {
    pub fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.m * z + &self.o
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.m.iter().chain(self.o.iter()).all(|v| v.abs() <= tol)
    }
}

impl QuadraticForm {
    /// Symmetrizes `pi`.
    pub fn new(pi: DMatrix<f64>, lin: DVector<f64>, c: f64) -> Self {
        let pi = (&pi + pi.transpose()) * 0.5;
        QuadraticForm { pi, lin, c }
    }

    pub fn zero(n: usize) -> Self {
        QuadraticForm { pi: DMatrix::zeros(n, n), lin: DVector::zeros(n), c: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.pi * z)) + self.lin.dot(z) + self.c
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.pi * z * 2.0 + &self.lin
    }

    /// `a·self + b·other`
    pub fn combine(&self, a: f64, other: &QuadraticForm, b: f64) -> QuadraticForm {
        QuadraticForm {
            pi: &self.pi * a + &other.pi * b,
            lin: &self.lin * a + &other.lin * b,
            c: self.c * a + other.c * b,
        }
    }

    /// Lie derivative along `ż = A z`.
    pub fn lie_f(&self, a: &DMatrix<f64>) -> QuadraticForm {
        let pa = &self.pi * a;
        QuadraticForm { pi: &pa + pa.transpose(), lin: a.tr_mul(&self.lin), c: 0.0 }
    }

    /// Lie derivative along the input directions: `u ↦ (2BᵀΠz + Bᵀπ)·u`.
    pub fn lie_g(&self, b: &DMatrix<f64>) -> AffineMap {
        AffineMap { m: b.tr_mul(&self.pi) * 2.0, o: b.tr_mul(&self.lin) }
    }
}

/// `h₀ … h_{ρ−1}` with linear class-K gains `α_i(x) = p_i x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierChain {
    pub h: Vec<QuadraticForm>,
    pub gains: Vec<f64>,
    /// `L_f h_{ρ−1}`
    pub lf_row: QuadraticForm,
    /// `L_g h_{ρ−1}`
    pub lg_row: AffineMap,
    pub rho: usize,
}

impl BarrierChain {
    pub fn values(&self, z: &DVector<f64>) -> Vec<f64> {
        self.h.iter().map(|h| h.value(z)).collect()
    }

    pub fn last_gain(&self) -> f64 {
        self.gains[self.rho - 1]
    }

    /// `H(z, u) = L_f h_{ρ−1}(z) + L_g h_{ρ−1}(z) u + p_ρ h_{ρ−1}(z)`
    pub fn big_h(&self, z: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.lf_row.value(z) + self.lg_row.eval(z).dot(u) + self.last_gain() * self.h[self.rho - 1].value(z)
    }

    /// `H` without the input term, as a single quadratic form.
    fn drift_form(&self) -> QuadraticForm {
        self.lf_row.combine(1.0, &self.h[self.rho - 1], self.last_gain())
    }
}

fn lg_vanishes(h: &QuadraticForm, b_c: &DMatrix<f64>) -> bool {
    let tol = 1e-10 * (1.0 + h.pi.amax() + h.lin.amax());
    h.lie_g(b_c).is_zero(tol)
}

fn check_dims(h0: &QuadraticForm, a_c: &DMatrix<f64>, b_c: &DMatrix<f64>) -> Result<()> {
    let n = h0.dim();
    if a_c.shape() != (n, n) || b_c.nrows() != n {
        return Err(Error::Config(format!(
            "dynamics dimensions {:?}/{:?} do not match a barrier on {n} states",
            a_c.shape(),
            b_c.shape()
        )));
    }
    Ok(())
}

/// Number of Lie derivatives along `ż = A z` before the input appears.
/// Independent of the class-K gains.
pub fn relative_degree(h0: &QuadraticForm, a_c: &DMatrix<f64>, b_c: &DMatrix<f64>) -> Result<usize> {
    check_dims(h0, a_c, b_c)?;
    let mut h = h0.clone();
    for rho in 1..=h0.dim() + 1 {
        if !lg_vanishes(&h, b_c) {
            return Ok(rho);
        }
        h = h.lie_f(a_c);
    }
    Err(Error::Config("the input never enters the barrier derivatives".into()))
}

/// Builds the chain `h_i = L_f h_{i−1} + p_i h_{i−1}`, `i = 1 … ρ−1`. The
/// relative degree is discovered from the dynamics and must equal
/// `gains.len()` (the last gain enters the sampled-data condition).
pub fn build_chain(h0: &QuadraticForm, gains: &[f64], a_c: &DMatrix<f64>, b_c: &DMatrix<f64>) -> Result<BarrierChain> {
    let rho = relative_degree(h0, a_c, b_c)?;
    if gains.len() != rho {
        return Err(Error::Config(format!(
            "barrier has relative degree {rho} but {} class-K gains were given",
            gains.len()
        )));
    }
    if let Some(p) = gains.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::Config(format!("class-K gains must be positive, got {p}")));
    }
    let mut h = vec![h0.clone()];
    for &p in &gains[..rho - 1] {
        let last = h.last().unwrap();
        let next = last.lie_f(a_c).combine(1.0, last, p);
        h.push(next);
    }
    let last = &h[rho - 1];
    debug_assert!(!lg_vanishes(last, b_c));
    Ok(BarrierChain {
        lf_row: last.lie_f(a_c),
        lg_row: last.lie_g(b_c),
        h,
        gains: gains.to_vec(),
        rho,
    })
}

/// Componentwise interval box.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl IntervalBox {
    pub fn point(x: &DVector<f64>) -> Self {
        IntervalBox { lower: x.clone(), upper: x.clone() }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..x.len()).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn radius(&self) -> DVector<f64> {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn hull(&mut self, other: &IntervalBox) {
        self.lower = self.lower.inf(&other.lower);
        self.upper = self.upper.sup(&other.upper);
    }

    pub fn inflate(&mut self, eps: &DVector<f64>) {
        self.lower -= eps;
        self.upper += eps;
    }

    /// Vertices, in binary counting order over the coordinates.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let n = self.lower.len();
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            out.push(DVector::from_fn(n, |i, _| {
                if mask & (1 << i) != 0 {
                    self.upper[i]
                } else {
                    self.lower[i]
                }
            }));
        }
        out
    }
}

/// `e^{[[A, B], [0, 0]] t}` split into `(e^{At}, ∫₀ᵗ e^{As} ds B)`, by
/// scaling and squaring of a truncated Taylor series.
pub fn zoh_transition(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a_c.nrows(), b_c.ncols());
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(a_c * t));
    big.view_mut((0, n), (n, m)).copy_from(&(b_c * t));
    let norm = big.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = big / 2f64.powi(squarings);
    let mut e = DMatrix::identity(n + m, n + m);
    let mut term = DMatrix::identity(n + m, n + m);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        e += &term;
    }
    for _ in 0..squarings {
        e = &e * &e;
    }
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Precomputed sample transitions for reachable-set boxes over `[0, T]`.
#[derive(Debug, Clone)]
pub struct ReachSampler {
    pub period: f64,
    a_c: DMatrix<f64>,
    abs_a: DMatrix<f64>,
    abs_b: DMatrix<f64>,
    b_c: DMatrix<f64>,
    samples: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl ReachSampler {
    pub fn new(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, period: f64, n_samples: usize) -> Self {
        assert!(n_samples >= 2, "need at least the two end points");
        let samples = (0..n_samples)
            .map(|i| zoh_transition(a_c, b_c, period * i as f64 / (n_samples - 1) as f64))
            .collect();
        ReachSampler {
            period,
            a_c: a_c.clone(),
            abs_a: a_c.abs(),
            abs_b: b_c.abs(),
            b_c: b_c.clone(),
            samples,
        }
    }

    /// Exact box of `{Φ(t_i) x + Γ(t_i) u : u ∈ U}` at every sample time.
    fn sample_boxes(&self, x: &DVector<f64>, u: &IntervalBox) -> Vec<IntervalBox> {
        let (uc, ur) = (u.center(), u.radius());
        self.samples
            .iter()
            .map(|(phi, gamma)| {
                let c = phi * x + gamma * &uc;
                let r = gamma.abs() * &ur;
                IntervalBox { lower: &c - &r, upper: &c + &r }
            })
            .collect()
    }

    /// Inter-sample inflation: the fixed point of `ε = Δt/2 · b(X + ε)`,
    /// with `b(X)` an interval bound on `|A x + B u|` over `X × U`.
    fn inflation(&self, hull: &IntervalBox, u: &IntervalBox) -> DVector<f64> {
        let half_dt = 0.5 * self.period / (self.samples.len() - 1) as f64;
        let rate = (&self.a_c * hull.center() + &self.b_c * u.center()).abs()
            + &self.abs_a * hull.radius()
            + &self.abs_b * u.radius();
        let mut eps = &rate * half_dt;
        for _ in 0..200 {
            let next = (&rate + &self.abs_a * &eps) * half_dt;
            let done = (&next - &eps).amax() <= 1e-15 * (1.0 + next.amax());
            eps = next;
            if done {
                break;
            }
        }
        eps * (1.0 + 1e-9)
    }

    pub fn reach_box(&self, x: &DVector<f64>, u: &IntervalBox) -> IntervalBox {
        let boxes = self.sample_boxes(x, u);
        let mut hull = boxes[0].clone();
        for b in &boxes[1..] {
            hull.hull(b);
        }
        let eps = self.inflation(&hull, u);
        hull.inflate(&eps);
        hull
    }

    /// One inflated box per inter-sample segment; their union covers the
    /// reachable set and is never larger than [`ReachSampler::reach_box`].
    pub fn reach_segments(&self, x: &DVector<f64>, u: &IntervalBox) -> Vec<IntervalBox> {
        let boxes = self.sample_boxes(x, u);
        boxes
            .windows(2)
            .map(|w| {
                let mut seg = w[0].clone();
                seg.hull(&w[1]);
                let eps = self.inflation(&seg, u);
                seg.inflate(&eps);
                seg
            })
            .collect()
    }
}

/// Over-approximation of the set reached from `x` within `[0, T]` under any
/// constant input in `U`.
pub fn reach_box(
    x: &DVector<f64>,
    period: f64,
    u: &IntervalBox,
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    n_samples: usize,
) -> IntervalBox {
    ReachSampler::new(a_c, b_c, period, n_samples).reach_box(x, u)
}

/// Lower bound of `δᵀ Π δ + cᵀ δ` over `δ ∈ [lo, hi]`: the linear part is
/// minimized exactly, the quadratic part by interval products.
fn quadratic_lower_bound(pi: &DMatrix<f64>, c: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let n = c.len();
    let mut total = 0.0;
    for j in 0..n {
        total += (c[j] * lo[j]).min(c[j] * hi[j]);
    }
    for i in 0..n {
        if lo[i] == 0.0 && hi[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            let p = pi[(i, j)];
            if p == 0.0 || (lo[j] == 0.0 && hi[j] == 0.0) {
                continue;
            }
            let (lo_ij, _) = if i == j {
                let sq_max = (lo[i] * lo[i]).max(hi[i] * hi[i]);
                let sq_min = if lo[i] <= 0.0 && hi[i] >= 0.0 { 0.0 } else { (lo[i] * lo[i]).min(hi[i] * hi[i]) };
                interval_scale(p, sq_min, sq_max)
            } else {
                let prods = [lo[i] * lo[j], lo[i] * hi[j], hi[i] * lo[j], hi[i] * hi[j]];
                let pmin = prods.iter().copied().fold(f64::INFINITY, f64::min);
                let pmax = prods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                interval_scale(p, pmin, pmax)
            };
            total += lo_ij;
        }
    }
    total
}

fn interval_scale(p: f64, lo: f64, hi: f64) -> (f64, f64) {
    if p >= 0.0 {
        (p * lo, p * hi)
    } else {
        (p * hi, p * lo)
    }
}

/// How the reachable set enters [`compensation_phi`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// One hull box over the whole period.
    #[default]
    Hull,
    /// One box per inter-sample segment (tighter, `n_samples − 1` times the work).
    Segmented,
}

/// Sound lower bound on `inf_{z ∈ R(T, x), u ∈ U} H(z, u) − H(x, u)`; always ≤ 0.
///
/// `H` is affine in `u`, so the infimum over the input box is attained at one
/// of its vertices; for each vertex the state part is bounded over the box.
pub fn compensation_phi(
    chain: &BarrierChain,
    x: &DVector<f64>,
    sampler: &ReachSampler,
    u: &IntervalBox,
    mode: PhiMode,
) -> f64 {
    let boxes = match mode {
        PhiMode::Hull => vec![sampler.reach_box(x, u)],
        PhiMode::Segmented => sampler.reach_segments(x, u),
    };
    phi_over_boxes(chain, x, &boxes, u)
}

fn phi_over_boxes(chain: &BarrierChain, x: &DVector<f64>, boxes: &[IntervalBox], u: &IntervalBox) -> f64 {
    if boxes.iter().any(|b| b.lower.iter().chain(b.upper.iter()).any(|v| !v.is_finite())) {
        return -1e300;
    }
    let drift = chain.drift_form();
    let base = drift.gradient(x);
    let mut phi: f64 = 0.0;
    for v in u.vertices() {
        let c = &base + chain.lg_row.m.tr_mul(&v);
        for b in boxes {
            let lo = &b.lower - x;
            let hi = &b.upper - x;
            phi = phi.min(quadratic_lower_bound(&drift.pi, &c, &lo, &hi));
        }
    }
    phi
}

/// The sampled-data condition `L_g h_{ρ−1}(z) u ≥ −L_f h_{ρ−1}(z) − p_ρ h_{ρ−1}(z) − φ`
/// as `(coeff, rhs)` with `coeff · u ≥ rhs`.
pub fn hocbf_constraint_row(chain: &BarrierChain, z: &DVector<f64>, phi: f64) -> (DVector<f64>, f64) {
    let coeff = chain.lg_row.eval(z);
    let rhs = -chain.lf_row.value(z) - chain.last_gain() * chain.h[chain.rho - 1].value(z) - phi;
    (coeff, rhs)
}

/// Obstacle geometry from scenario files; `h₀ = ‖p_sub − c‖² − r²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierSpec {
    /// Infinite cylinder along z through `(x, y)`.
    CylinderZ {
        #[serde(rename = "center_m")]
        center: [f64; 2],
        #[serde(rename = "radius_m")]
        radius: f64,
    },
    Sphere {
        #[serde(rename = "center_m")]
        center: [f64; 3],
        #[serde(rename = "radius_m")]
        radius: f64,
    },
}

impl BarrierSpec {
    pub fn position_value(&self, p: &Vector3<f64>) -> f64 {
        match self {
            BarrierSpec::CylinderZ { center, radius } => {
                (p.x - center[0]).powi(2) + (p.y - center[1]).powi(2) - radius * radius
            }
            BarrierSpec::Sphere { center, radius } => {
                (p - Vector3::from(*center)).norm_squared() - radius * radius
            }
        }
    }

    /// Signed distance from the obstacle surface.
    pub fn clearance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            BarrierSpec::CylinderZ { center, radius } => {
                ((p.x - center[0]).powi(2) + (p.y - center[1]).powi(2)).sqrt() - radius
            }
            BarrierSpec::Sphere { center, radius } => (p - Vector3::from(*center)).norm() - radius,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            BarrierSpec::CylinderZ { radius, .. } | BarrierSpec::Sphere { radius, .. } => *radius,
        }
    }

    /// `h₀` on a state whose first three components are the position.
    pub fn to_quadratic_form(&self, n: usize) -> QuadraticForm {
        let (center, axes): (Vec<f64>, usize) = match self {
            BarrierSpec::CylinderZ { center, .. } => (center.to_vec(), 2),
            BarrierSpec::Sphere { center, .. } => (center.to_vec(), 3),
        };
        let mut h = QuadraticForm::zero(n);
        for (i, c) in center.iter().enumerate().take(axes) {
            h.pi[(i, i)] = 1.0;
            h.lin[i] = -2.0 * c;
            h.c += c * c;
        }
        h.c -= self.radius() * self.radius();
        h
    }

    pub fn validate(&self) -> Vec<String> {
        let ok = match self {
            BarrierSpec::CylinderZ { center, radius } => center.iter().all(|c| c.is_finite()) && *radius > 0.0,
            BarrierSpec::Sphere { center, radius } => center.iter().all(|c| c.is_finite()) && *radius > 0.0,
        };
        if ok {
            Vec::new()
        } else {
            vec![format!("barrier {self:?} needs a finite center and a positive radius")]
        }
    }
}
