//! The augmented outer-loop model and its exact zero-order-hold discretization.
//!
//! Per axis the state is `(p, v, a_v, j_v)` with `ṗ = v`, `v̇ = −d v + a_v`,
//! `ȧ_v = j_v`, `j̇_v = s_v`. Axes are stacked by derivative order, so
//! component `3k + axis` holds derivative `k` of `axis`.

use nalgebra::{DMatrix, Vector3};

use crate::flatness::{AugInput, AugMatrix};

pub const P: usize = 0;
pub const V: usize = 3;
pub const A: usize = 6;
pub const J: usize = 9;

pub fn augmented_continuous(drag: &Vector3<f64>) -> (AugMatrix, AugInput) {
    let mut a = AugMatrix::zeros();
    let mut b = AugInput::zeros();
    for k in 0..3 {
        a[(P + k, V + k)] = 1.0;
        a[(V + k, V + k)] = -drag[k];
        a[(V + k, A + k)] = 1.0;
        a[(A + k, J + k)] = 1.0;
        b[(J + k, k)] = 1.0;
    }
    (a, b)
}

pub fn augmented_continuous_dyn(drag: &Vector3<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (a, b) = augmented_continuous(drag);
    (DMatrix::from_column_slice(12, 12, a.as_slice()), DMatrix::from_column_slice(12, 3, b.as_slice()))
}

/// `φ_k(d, t) = ∫₀ᵗ e^{−d(t−τ)} τᵏ/k! dτ`.
///
/// Uses the power series when `d t ≤ 1` (the recurrence cancels badly
/// there) and `φ_k = (tᵏ/k! − φ_{k−1}) / d` from `φ_0 = (1 − e^{−dt})/d`
/// otherwise.
pub fn phi_k(d: f64, t: f64, k: u32) -> f64 {
    if (d * t).abs() <= 1.0 {
        // Σ_n (−d)ⁿ t^{n+k+1} / (n+k+1)!
        let mut term = t.powi(k as i32 + 1) / factorial(k + 1);
        let mut sum = term;
        let mut n = 0u32;
        while term.abs() > 1e-18 * sum.abs() && n < 60 {
            n += 1;
            term *= -d * t / (n + k + 1) as f64;
            sum += term;
        }
        sum
    } else {
        let mut phi = -(-d * t).exp_m1() / d;
        for j in 1..=k {
            phi = (t.powi(j as i32) / factorial(j) - phi) / d;
        }
        phi
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Exact ZOH pair `A = e^{A_c T}`, `B = ∫₀ᵀ e^{A_c s} ds B_c` in closed form.
pub fn discretize(drag: &Vector3<f64>, t: f64) -> (AugMatrix, AugInput) {
    let mut a = AugMatrix::zeros();
    let mut b = AugInput::zeros();
    for k in 0..3 {
        let d = drag[k];
        let (f0, f1, f2, f3) = (phi_k(d, t, 0), phi_k(d, t, 1), phi_k(d, t, 2), phi_k(d, t, 3));
        a[(P + k, P + k)] = 1.0;
        a[(P + k, V + k)] = f0;
        a[(P + k, A + k)] = f1;
        a[(P + k, J + k)] = f2;
        a[(V + k, V + k)] = (-d * t).exp();
        a[(V + k, A + k)] = f0;
        a[(V + k, J + k)] = f1;
        a[(A + k, A + k)] = 1.0;
        a[(A + k, J + k)] = t;
        a[(J + k, J + k)] = 1.0;
        b[(P + k, k)] = f3;
        b[(V + k, k)] = f2;
        b[(A + k, k)] = 0.5 * t * t;
        b[(J + k, k)] = t;
    }
    (a, b)
}
