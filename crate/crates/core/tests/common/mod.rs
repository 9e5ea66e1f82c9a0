//! Oracles shared by the integration tests. Nothing here calls into the
//! library's numerical routines.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use quadsafe::cone::{ConeProgram, LinRow, SocRow};
use rand::Rng;

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n).map(|j| m.column(j).abs().sum()).fold(0.0, f64::max);
    let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let a = m / 2f64.powi(s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `(e^{A t}, ∫₀ᵗ e^{A τ} dτ B)` from the exponential of the block matrix `[[A, B], [0, 0]]`.
pub fn zoh_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut blk = DMatrix::zeros(n + m, n + m);
    blk.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    blk.view_mut((0, n), (n, m)).copy_from(&(b * t));
    let e = expm(&blk);
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Augmented model written out by hand: `ṗ = v`, `v̇ = a_v − D v`, `ȧ_v = j_v`, `j̇_v = s`.
pub fn augmented_oracle(d: [f64; 3]) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(12, 12);
    let mut b = DMatrix::zeros(12, 3);
    for k in 0..3 {
        a[(k, 3 + k)] = 1.0;
        a[(3 + k, 6 + k)] = 1.0;
        a[(3 + k, 3 + k)] = -d[k];
        a[(6 + k, 9 + k)] = 1.0;
        b[(9 + k, k)] = 1.0;
    }
    (a, b)
}

enum Set {
    Zero,
    Interval(f64, f64),
    AtLeast,
    Soc(usize),
}

fn project(y: &mut [f64], set: &Set) {
    match set {
        Set::Zero => y[0] = 0.0,
        Set::Interval(lo, hi) => y[0] = y[0].clamp(*lo, *hi),
        Set::AtLeast => y[0] = y[0].max(0.0),
        Set::Soc(k) => {
            let t = y[0];
            let nv = y[1..=*k].iter().map(|v| v * v).sum::<f64>().sqrt();
            if nv <= t {
            } else if nv <= -t {
                y[..=*k].iter_mut().for_each(|v| *v = 0.0);
            } else {
                let a = 0.5 * (t + nv);
                y[0] = a;
                y[1..=*k].iter_mut().for_each(|v| *v *= a / nv);
            }
        }
    }
}

/// Minimizer of a strictly convex cone program by ADMM with exact projections.
pub fn admm(p: &ConeProgram) -> DVector<f64> {
    let n = p.n;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    let mut sets: Vec<(usize, Set)> = Vec::new();
    for i in 0..p.a_eq.nrows() {
        sets.push((rows.len(), Set::Zero));
        rows.push(p.a_eq.row(i).transpose());
        offs.push(-p.b_eq[i]);
    }
    for i in 0..n {
        if p.lb[i].is_finite() || p.ub[i].is_finite() {
            sets.push((rows.len(), Set::Interval(p.lb[i], p.ub[i])));
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            rows.push(e);
            offs.push(0.0);
        }
    }
    for r in &p.lin_rows {
        sets.push((rows.len(), Set::AtLeast));
        rows.push(r.c.clone());
        offs.push(-r.d);
    }
    for r in &p.soc_rows {
        sets.push((rows.len(), Set::Soc(r.g.len())));
        rows.push(r.a.clone());
        offs.push(r.b);
        for k in 0..r.g.len() {
            rows.push(r.f.row(k).transpose());
            offs.push(r.g[k]);
        }
    }
    let m = rows.len();
    let mut mm = DMatrix::zeros(m, n);
    for (i, r) in rows.iter().enumerate() {
        mm.row_mut(i).copy_from(&r.transpose());
    }
    let off = DVector::from_vec(offs);
    let (rho, sigma) = (1.0, 1e-8);
    let kkt = &p.h + DMatrix::identity(n, n) * sigma + mm.tr_mul(&mm) * rho;
    let chol = kkt.cholesky().expect("oracle system is positive definite");
    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(m);
    let mut w = DVector::zeros(m);
    for _ in 0..400_000 {
        let rhs = &x * sigma - &p.f - mm.tr_mul(&(&off - &y + &w)) * rho;
        x = chol.solve(&rhs);
        let mx = &mm * &x + &off;
        let mut y_new = &mx + &w;
        for (k, (start, set)) in sets.iter().enumerate() {
            let end = sets.get(k + 1).map_or(m, |s| s.0);
            project(&mut y_new.as_mut_slice()[*start..end], set);
        }
        let dual = (mm.tr_mul(&(&y_new - &y)) * rho).amax();
        w += &mx - &y_new;
        let primal = (&mx - &y_new).amax();
        y = y_new;
        if primal < 1e-11 && dual < 1e-11 {
            break;
        }
    }
    x
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Strictly feasible program with a positive definite cost around a random interior point.
pub fn random_program(rng: &mut impl Rng) -> ConeProgram {
    let n = rng.gen_range(2..=8);
    let mut p = ConeProgram::new(n);
    let l = DMatrix::from_fn(n, n, |_, _| uniform(rng, -1.0, 1.0));
    p.h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    p.f = DVector::from_fn(n, |_, _| uniform(rng, -5.0, 5.0));
    let x0 = DVector::from_fn(n, |_, _| uniform(rng, -1.0, 1.0));
    let n_eq = rng.gen_range(0..n.min(3));
    if n_eq > 0 {
        let a = DMatrix::from_fn(n_eq, n, |_, _| uniform(rng, -1.0, 1.0));
        let b = &a * &x0;
        p.set_equalities(a, b);
    }
    for i in 0..n {
        if rng.gen_bool(0.5) {
            p.lb[i] = x0[i] - uniform(rng, 0.05, 1.0);
        }
        if rng.gen_bool(0.5) {
            p.ub[i] = x0[i] + uniform(rng, 0.05, 1.0);
        }
    }
    for _ in 0..rng.gen_range(0..4) {
        let c = DVector::from_fn(n, |_, _| uniform(rng, -1.0, 1.0));
        let d = c.dot(&x0) - uniform(rng, 0.05, 0.5);
        p.lin_rows.push(LinRow { c, d });
    }
    for _ in 0..rng.gen_range(0..4) {
        let k = rng.gen_range(1..=3);
        let f = DMatrix::from_fn(k, n, |_, _| uniform(rng, -1.0, 1.0));
        let g = DVector::from_fn(k, |_, _| uniform(rng, -1.0, 1.0));
        let a = DVector::from_fn(n, |_, _| uniform(rng, -0.5, 0.5));
        let b = (&f * &x0 + &g).norm() - a.dot(&x0) + uniform(rng, 0.05, 0.5);
        p.soc_rows.push(SocRow { f, g, a, b });
    }
    p
}
