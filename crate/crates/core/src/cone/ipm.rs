//! Primal-dual interior point method for
//! `min ½xᵀPx + qᵀx  s.t.  Gx + s = h,  s ∈ K` with `K` a product of the
//! nonnegative orthant and second-order cones.

use nalgebra::{DMatrix, DVector};

use super::{SolverConfig, Status};

#[derive(Debug, Clone)]
pub(super) struct Cones {
    pub n_orthant: usize,
    pub soc_dims: Vec<usize>,
}

impl Cones {
    fn dim(&self) -> usize {
        self.n_orthant + self.soc_dims.iter().sum::<usize>()
    }

    fn degree(&self) -> usize {
        self.n_orthant + self.soc_dims.len()
    }

    /// `(offset, dim)` of every cone block.
    fn socs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.soc_dims.iter().scan(self.n_orthant, |off, &d| {
            let o = *off;
            *off += d;
            Some((o, d))
        })
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        e.rows_mut(0, self.n_orthant).fill(1.0);
        for (o, _) in self.socs() {
            e[o] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue" of `u` in the Jordan-algebra sense; positive iff
    /// `u` is in the interior of the cone.
    fn min_eig(&self, u: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n_orthant {
            m = m.min(u[i]);
        }
        for (o, d) in self.socs() {
            m = m.min(u[o] - u.rows(o + 1, d - 1).norm());
        }
        m
    }

    /// `u ∘ v`
    fn product(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(u.len());
        for i in 0..self.n_orthant {
            r[i] = u[i] * v[i];
        }
        for (o, d) in self.socs() {
            let (u0, v0) = (u[o], v[o]);
            let u1 = u.rows(o + 1, d - 1);
            let v1 = v.rows(o + 1, d - 1);
            r[o] = u0 * v0 + u1.dot(&v1);
            r.rows_mut(o + 1, d - 1).copy_from(&(v1 * u0 + u1 * v0));
        }
        r
    }

    /// Solves `λ ∘ x = r` for `x`.
    fn divide(&self, lam: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(r.len());
        for i in 0..self.n_orthant {
            x[i] = r[i] / lam[i];
        }
        for (o, d) in self.socs() {
            let l0 = lam[o];
            let l1 = lam.rows(o + 1, d - 1);
            let r1 = r.rows(o + 1, d - 1);
            let det = l0 * l0 - l1.norm_squared();
            let x0 = (l0 * r[o] - l1.dot(&r1)) / det;
            x[o] = x0;
            x.rows_mut(o + 1, d - 1).copy_from(&((r1 - l1 * x0) / l0));
        }
        x
    }

    /// Largest `α` with `u + α du` in the cone (∞ if unbounded).
    fn max_step(&self, u: &DVector<f64>, du: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.n_orthant {
            if du[i] < 0.0 {
                alpha = alpha.min(-u[i] / du[i]);
            }
        }
        for (o, d) in self.socs() {
            let u1 = u.rows(o + 1, d - 1);
            let d1 = du.rows(o + 1, d - 1);
            let a = du[o] * du[o] - d1.norm_squared();
            let b = 2.0 * (u[o] * du[o] - u1.dot(&d1));
            let c = (u[o] * u[o] - u1.norm_squared()).max(0.0);
            alpha = alpha.min(first_positive_root(a, b, c));
        }
        alpha
    }
}

/// Smallest positive root of `a t² + b t + c` with `c ≥ 0` (∞ if none).
fn first_positive_root(a: f64, b: f64, c: f64) -> f64 {
    if c == 0.0 {
        return if b < 0.0 || (b == 0.0 && a < 0.0) { 0.0 } else { f64::INFINITY };
    }
    if a == 0.0 {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    let qq = -0.5 * (b + b.signum() * sq);
    let mut best = f64::INFINITY;
    for r in [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    best
}

struct SocScale {
    beta: f64,
    w: DVector<f64>,
}

/// Nesterov-Todd scaling `W` with `W z = W⁻¹ s = λ`.
struct Scaling {
    d: DVector<f64>,
    soc: Vec<SocScale>,
}

fn j_dot(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    u[0] * v[0] - u.rows(1, u.len() - 1).dot(&v.rows(1, v.len() - 1))
}

fn j_flip(u: &DVector<f64>) -> DVector<f64> {
    let mut r = -u;
    r[0] = u[0];
    r
}

impl Scaling {
    fn new(cones: &Cones, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let l = cones.n_orthant;
        let d = DVector::from_fn(l, |i, _| (s[i] / z[i]).sqrt());
        let soc = cones
            .socs()
            .map(|(o, k)| {
                let sb = s.rows(o, k).into_owned();
                let zb = z.rows(o, k).into_owned();
                let sn = j_dot(&sb, &sb).sqrt();
                let zn = j_dot(&zb, &zb).sqrt();
                let sbar = sb / sn;
                let zbar = zb / zn;
                let gamma = ((1.0 + sbar.dot(&zbar)) * 0.5).sqrt();
                let mut w = (sbar + j_flip(&zbar)) / (2.0 * gamma);
                // W = β(2vvᵀ − J) with v the hyperbolic Householder vector of w.
                let denom = (2.0 * (w[0] + 1.0)).sqrt();
                w[0] += 1.0;
                w /= denom;
                SocScale { beta: (sn / zn).sqrt(), w }
            })
            .collect();
        Scaling { d, soc }
    }

    fn apply(&self, cones: &Cones, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for i in 0..cones.n_orthant {
            r[i] *= self.d[i];
        }
        for ((o, k), sc) in cones.socs().zip(&self.soc) {
            let vb = v.rows(o, k).into_owned();
            let t = 2.0 * sc.w.dot(&vb);
            let out = (&sc.w * t - j_flip(&vb)) * sc.beta;
            r.rows_mut(o, k).copy_from(&out);
        }
        r
    }

    fn apply_inv(&self, cones: &Cones, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for i in 0..cones.n_orthant {
            r[i] /= self.d[i];
        }
        for ((o, k), sc) in cones.socs().zip(&self.soc) {
            let vb = v.rows(o, k).into_owned();
            let jw = j_flip(&sc.w);
            let t = 2.0 * jw.dot(&vb);
            let out = (jw * t - j_flip(&vb)) / sc.beta;
            r.rows_mut(o, k).copy_from(&out);
        }
        r
    }

    /// `W⁻¹ G`, column by column in block form.
    fn apply_inv_rows(&self, cones: &Cones, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = g.clone();
        for i in 0..cones.n_orthant {
            let inv = 1.0 / self.d[i];
            r.row_mut(i).scale_mut(inv);
        }
        for ((o, k), sc) in cones.socs().zip(&self.soc) {
            let blk = g.rows(o, k);
            let jw = j_flip(&sc.w);
            let t = blk.tr_mul(&jw) * 2.0;
            let mut out = &jw * t.transpose();
            for rr in 0..k {
                let sign = if rr == 0 { -1.0 } else { 1.0 };
                for c in 0..blk.ncols() {
                    out[(rr, c)] += sign * blk[(rr, c)];
                }
            }
            out /= sc.beta;
            r.rows_mut(o, k).copy_from(&out);
        }
        r
    }
}

enum Factor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(k: DMatrix<f64>) -> Option<Self> {
        if let Some(c) = k.clone().cholesky() {
            return Some(Factor::Chol(c));
        }
        let lu = k.lu();
        if lu.is_invertible() {
            Some(Factor::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let x = match self {
            Factor::Chol(c) => c.solve(b),
            Factor::Lu(l) => l.solve(b)?,
        };
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// Reduced KKT system at a fixed scaling.
struct Newton<'a> {
    p: &'a DMatrix<f64>,
    g: &'a DMatrix<f64>,
    cones: &'a Cones,
    w: &'a Scaling,
    gt: DMatrix<f64>,
    factor: Factor,
    lambda: &'a DVector<f64>,
}

impl Newton<'_> {
    /// Solves `P dx + Gᵀdz = bx`, `G dx + ds = bz`, `λ ∘ (W dz + W⁻¹ ds) = bs`
    /// with one step of iterative refinement.
    fn solve(
        &self,
        bx: &DVector<f64>,
        bz: &DVector<f64>,
        bs: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let (dx, ds, dz) = self.solve_once(bx, bz, bs)?;
        let rx = bx - (self.p * &dx + self.g.tr_mul(&dz));
        let rz = bz - (self.g * &dx + &ds);
        let scaled = self.w.apply(self.cones, &dz) + self.w.apply_inv(self.cones, &ds);
        let rs = bs - self.cones.product(self.lambda, &scaled);
        let (cx, cs, cz) = self.solve_once(&rx, &rz, &rs)?;
        Some((dx + cx, ds + cs, dz + cz))
    }

    fn solve_once(
        &self,
        bx: &DVector<f64>,
        bz: &DVector<f64>,
        bs: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let u = self.cones.divide(self.lambda, bs);
        let winv_bz = self.w.apply_inv(self.cones, bz);
        let t = &u - &winv_bz;
        let rhs = bx - self.gt.tr_mul(&t);
        let dx = self.factor.solve(&rhs)?;
        let wdz = &self.gt * &dx + &t;
        let dz = self.w.apply_inv(self.cones, &wdz);
        let ds = self.w.apply(self.cones, &(&u - &wdz));
        Some((dx, ds, dz))
    }
}

pub(super) struct IpmOutput {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub status: Status,
    pub iterations: usize,
}

pub(super) fn solve(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    cones: &Cones,
    cfg: &SolverConfig,
) -> IpmOutput {
    let n = q.len();
    let m = h.len();
    if m == 0 {
        return unconstrained(p, q);
    }
    if n == 0 {
        let status = if cones.min_eig(h) >= -1e-9 * (1.0 + h.amax()) { Status::Optimal } else { Status::Infeasible };
        return IpmOutput { x: DVector::zeros(0), z: DVector::zeros(m), status, iterations: 0 };
    }

    let e = cones.identity();
    let deg = cones.degree() as f64;
    let h_norm = h.amax().max(1.0);
    let q_norm = q.amax().max(1.0);

    // W = I KKT solution, moved into the cone interior and balanced so that
    // no slack/multiplier pair starts far from the others.
    let (mut x, mut s, mut z) = {
        let k = p + g.tr_mul(g);
        let rhs = g.tr_mul(h) - q;
        let x = match Factor::new(k).and_then(|f| f.solve(&rhs)) {
            Some(x) => x,
            None => DVector::zeros(n),
        };
        let mut s = h - g * &x;
        let mut z = -&s;
        s += &e * (1.5 * -cones.min_eig(&s)).max(0.0);
        z += &e * (1.5 * -cones.min_eig(&z)).max(0.0);
        let sz = s.dot(&z).max(0.0);
        let (es, ez) = (e.dot(&s), e.dot(&z));
        s += &e * (0.5 * sz / ez.max(1e-12) + 1e-8 * h_norm);
        z += &e * (0.5 * sz / es.max(1e-12) + 1e-8 * q_norm);
        (x, s, z)
    };

    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let mut stalls = 0;
    let mut best: Option<(f64, f64, f64, f64, DVector<f64>, DVector<f64>)> = None;
    for it in 0..=cfg.max_iter {
        iterations = it;
        let px = p * &x;
        let r_x = &px + q + g.tr_mul(&z);
        let r_z = g * &x + &s - h;
        let gap = s.dot(&z);
        let pobj = 0.5 * x.dot(&px) + q.dot(&x);
        let pres = r_z.amax() / h_norm;
        let dres = r_x.amax() / q_norm;

        let score = pres.max(dres).max(gap / pobj.abs().max(1.0));
        if best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((score, pres, dres, gap / pobj.abs().max(1.0), x.clone(), z.clone()));
        }
        if pres <= cfg.feas_tol && dres <= cfg.feas_tol && gap <= cfg.gap_tol * pobj.abs().max(1.0) {
            status = Status::Optimal;
            break;
        }
        // Farkas-type certificate: z ∈ K, Gᵀz ≈ 0, hᵀz < 0.
        let hz = h.dot(&z);
        if hz < 0.0 {
            let cert = g.tr_mul(&z).amax() / -hz;
            if cert <= 1e-9 && pres > cfg.feas_tol {
                status = Status::Infeasible;
                break;
            }
        }
        if it == cfg.max_iter || stalls >= 3 {
            break;
        }

        let w = Scaling::new(cones, &s, &z);
        let lambda = w.apply(cones, &z);
        let gt = w.apply_inv_rows(cones, g);
        let k = p + gt.tr_mul(&gt);
        let Some(factor) = Factor::new(k) else { break };
        let newton = Newton { p, g, cones, w: &w, gt, factor, lambda: &lambda };

        let lam_sq = cones.product(&lambda, &lambda);
        let bx = -&r_x;
        let bz = -&r_z;
        let Some((_, ds_a, dz_a)) = newton.solve(&bx, &bz, &(-&lam_sq)) else { break };
        let a_aff = cones.max_step(&s, &ds_a).min(cones.max_step(&z, &dz_a)).min(1.0);
        let s_aff = &s + &ds_a * a_aff;
        let z_aff = &z + &dz_a * a_aff;
        let sigma = (s_aff.dot(&z_aff) / gap).clamp(0.0, 1.0).powi(3);
        let mu = gap / deg;

        let corr = cones.product(&w.apply_inv(cones, &ds_a), &w.apply(cones, &dz_a));
        let bs = &e * (sigma * mu) - &lam_sq - corr;
        let Some((mut dx, mut ds, mut dz)) = newton.solve(&bx, &bz, &bs) else { break };
        let mut alpha = (0.99 * cones.max_step(&s, &ds).min(cones.max_step(&z, &dz))).min(1.0);
        // Mehrotra steps can cycle on badly centred iterates; fall back to a
        // plain centring step when the corrected step fails to reduce the gap.
        if (&s + &ds * alpha).dot(&(&z + &dz * alpha)) > (1.0 - 0.1 * alpha) * gap {
            let bs = &e * (sigma.max(0.3) * mu) - &lam_sq;
            let Some(step) = newton.solve(&bx, &bz, &bs) else { break };
            (dx, ds, dz) = step;
            alpha = (0.99 * cones.max_step(&s, &ds).min(cones.max_step(&z, &dz))).min(1.0);
        }
        log::trace!("ipm {it}: pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} sigma {sigma:.2e} alpha {alpha:.2e}");
        if alpha < 1e-10 {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        if !(x.iter().chain(s.iter()).chain(z.iter()).all(|v| v.is_finite())) {
            break;
        }
        if z.amax() > 1e14 {
            status = Status::Infeasible;
            break;
        }
    }
    // Ill-conditioned scalings near the solution can stop the iteration
    // before the strict tolerances are met; keep the best iterate if it is
    // accurate enough.
    if status == Status::MaxIter {
        if let Some((_, pres, dres, rgap, bx, bz)) = best {
            if pres <= 1e-8 && dres <= 1e-8 && rgap <= 1e-7 {
                (x, z, status) = (bx, bz, Status::Optimal);
            }
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        x = DVector::zeros(n);
        z = DVector::zeros(m);
        status = Status::MaxIter;
    }
    IpmOutput { x, z, status, iterations }
}

fn unconstrained(p: &DMatrix<f64>, q: &DVector<f64>) -> IpmOutput {
    let n = q.len();
    let x = Factor::new(p.clone()).and_then(|f| f.solve(&-q));
    match x {
        Some(x) => IpmOutput { x, z: DVector::zeros(0), status: Status::Optimal, iterations: 0 },
        None => IpmOutput { x: DVector::zeros(n), z: DVector::zeros(0), status: Status::MaxIter, iterations: 0 },
    }
}
