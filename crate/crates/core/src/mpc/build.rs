//! Assembly of the dense MPC programs.
//!
//! Decision vector: predicted states `z_1 … z_N` followed by inputs
//! `s_0 … s_{N−1}`.

use nalgebra::{DMatrix, DVector, Vector3};

use super::model;
use super::{MpcConfig, RefPoint};
use crate::barrier::{hocbf_constraint_row, BarrierChain, QuadraticForm};
use crate::cone::{ConeProgram, LinRow, SocRow};
use crate::flatness::{AugInput, AugMatrix, AugVector};
use crate::sim::QuadParams;

pub const NZ: usize = 12;
pub const NU: usize = 3;

pub fn n_vars(horizon: usize) -> usize {
    horizon * (NZ + NU)
}

/// Offset of `z_i`, `1 ≤ i ≤ N`.
pub fn state_index(i: usize) -> usize {
    debug_assert!(i >= 1);
    (i - 1) * NZ
}

/// Offset of `s_i`, `0 ≤ i < N`.
pub fn input_index(horizon: usize, i: usize) -> usize {
    horizon * NZ + i * NU
}

pub fn predicted_states(x: &DVector<f64>, horizon: usize) -> Vec<AugVector> {
    (1..=horizon).map(|i| AugVector::from_iterator(x.rows(state_index(i), NZ).iter().copied())).collect()
}

pub fn first_input(x: &DVector<f64>, horizon: usize) -> Vector3<f64> {
    let o = input_index(horizon, 0);
    Vector3::new(x[o], x[o + 1], x[o + 2])
}

/// Tracking cost, dynamics, snap bounds and the thrust cone (or its box
/// relaxation) on every predicted virtual acceleration.
pub fn base_program(
    z_k: &AugVector,
    refs: &[RefPoint],
    a: &AugMatrix,
    b: &AugInput,
    cfg: &MpcConfig,
    quad: &QuadParams,
) -> ConeProgram {
    let n_h = cfg.horizon;
    assert_eq!(refs.len(), n_h + 1, "reference must cover the horizon and terminal step");
    let n = n_vars(n_h);
    let mut p = ConeProgram::new(n);

    // ½xᵀHx + fᵀx + c with H = 2W, f = −2W x̄, c = x̄ᵀWx̄ per block.
    let mut offset = 0.0;
    let e0 = z_k - refs[0].z;
    for r in 0..NZ {
        offset += cfg.q_diag[r] * e0[r] * e0[r];
    }
    for i in 1..=n_h {
        let w = if i == n_h { &cfg.p_diag } else { &cfg.q_diag };
        let o = state_index(i);
        for r in 0..NZ {
            p.h[(o + r, o + r)] = 2.0 * w[r];
            p.f[o + r] = -2.0 * w[r] * refs[i].z[r];
            offset += w[r] * refs[i].z[r] * refs[i].z[r];
        }
    }
    for i in 0..n_h {
        let o = input_index(n_h, i);
        for r in 0..NU {
            p.h[(o + r, o + r)] = 2.0 * cfg.r_diag[r];
            p.f[o + r] = -2.0 * cfg.r_diag[r] * refs[i].s[r];
            offset += cfg.r_diag[r] * refs[i].s[r] * refs[i].s[r];
            p.lb[o + r] = cfg.snap_min[r];
            p.ub[o + r] = cfg.snap_max[r];
        }
    }
    p.cost_offset = offset;

    // z_{i+1} − A z_i − B s_i = 0
    let mut a_eq = DMatrix::zeros(n_h * NZ, n);
    let mut b_eq = DVector::zeros(n_h * NZ);
    let az = a * z_k;
    for i in 0..n_h {
        let row = i * NZ;
        let zi1 = state_index(i + 1);
        let si = input_index(n_h, i);
        for r in 0..NZ {
            a_eq[(row + r, zi1 + r)] = 1.0;
            for c in 0..NU {
                a_eq[(row + r, si + c)] = -b[(r, c)];
            }
        }
        if i == 0 {
            b_eq.rows_mut(row, NZ).copy_from(&az);
        } else {
            let zi = state_index(i);
            for r in 0..NZ {
                for c in 0..NZ {
                    if a[(r, c)] != 0.0 {
                        a_eq[(row + r, zi + c)] = -a[(r, c)];
                    }
                }
            }
        }
    }
    p.set_equalities(a_eq, b_eq);

    let g = quad.g_vec();
    for i in 1..=n_h {
        let o = state_index(i) + model::A;
        if cfg.relax_to_qp {
            // |m (a_v − g)_j| ≤ f_max / √3 componentwise lies inside the cone.
            let half = quad.max_thrust / (3f64.sqrt() * quad.mass);
            for k in 0..3 {
                p.lb[o + k] = g[k] - half;
                p.ub[o + k] = g[k] + half;
            }
        } else {
            let mut f = DMatrix::zeros(3, n);
            for k in 0..3 {
                f[(k, o + k)] = quad.mass;
            }
            p.soc_rows.push(SocRow {
                f,
                g: DVector::from_column_slice((-g * quad.mass).as_slice()),
                a: DVector::zeros(n),
                b: quad.max_thrust,
            });
        }
    }
    p
}

/// Sampled-data barrier rows on the first input, one per chain.
pub fn add_sdhocbf_rows(p: &mut ConeProgram, chains: &[BarrierChain], z_k: &AugVector, phis: &[f64], horizon: usize) {
    let z = DVector::from_column_slice(z_k.as_slice());
    for (chain, &phi) in chains.iter().zip(phis) {
        let (coeff, rhs) = hocbf_constraint_row(chain, &z, phi);
        p.lin_rows.push(input_row(p.n, horizon, &coeff, rhs));
    }
}

fn input_row(n: usize, horizon: usize, coeff: &DVector<f64>, rhs: f64) -> LinRow {
    let mut c = DVector::zeros(n);
    c.rows_mut(input_index(horizon, 0), NU).copy_from(coeff);
    LinRow { c, d: rhs }
}

/// `h(z̄) + ∇h(z̄)ᵀ(z − z̄)` as `(∇h(z̄), h(z̄) − ∇h(z̄)ᵀz̄)`.
fn linearize(h: &QuadraticForm, zbar: &AugVector) -> (AugVector, f64) {
    let z = DVector::from_column_slice(zbar.as_slice());
    let grad = h.gradient(&z);
    let grad = AugVector::from_iterator(grad.iter().copied());
    (grad, h.value(&z) - grad.dot(zbar))
}

/// Linearized discrete barrier rows
/// `h(z_{i+1}) ≥ (1 − λ) h(z_i)` for every `i` in `steps`, about the
/// incumbent predicted states `zbar[i] ≈ z_{i+1}`. With `λ = 1` these are
/// the plain distance rows `h(z_i) ≥ 0`, `i = 1 … N`.
pub fn add_discrete_barrier_rows(
    p: &mut ConeProgram,
    barriers: &[QuadraticForm],
    z_k: &AugVector,
    zbar: &[AugVector],
    lambda: f64,
    steps: &[usize],
    horizon: usize,
) {
    let keep = 1.0 - lambda;
    let zk = DVector::from_column_slice(z_k.as_slice());
    for h in barriers {
        for &i in steps {
            if i >= horizon {
                continue;
            }
            let mut c = DVector::zeros(p.n);
            let (g1, k1) = linearize(h, &zbar[i]);
            c.rows_mut(state_index(i + 1), NZ).copy_from(&g1);
            let mut d = -k1;
            if keep != 0.0 {
                if i == 0 {
                    d += keep * h.value(&zk);
                } else {
                    let (g0, k0) = linearize(h, &zbar[i - 1]);
                    let o = state_index(i);
                    for r in 0..NZ {
                        c[o + r] -= keep * g0[r];
                    }
                    d += keep * k0;
                }
            }
            p.lin_rows.push(LinRow { c, d });
        }
    }
}

/// Filter QP in the three snap components:
/// `min ‖s − s_ref‖²` subject to the continuous barrier rows, snap bounds
/// and the thrust cone on the next virtual acceleration.
pub fn filter_program(
    s_ref: &Vector3<f64>,
    chains: &[BarrierChain],
    z_k: &AugVector,
    cfg: &MpcConfig,
    quad: &QuadParams,
) -> ConeProgram {
    let mut p = ConeProgram::new(NU);
    p.h = DMatrix::identity(NU, NU) * 2.0;
    for k in 0..NU {
        p.f[k] = -2.0 * s_ref[k];
        p.lb[k] = cfg.snap_min[k];
        p.ub[k] = cfg.snap_max[k];
    }
    p.cost_offset = s_ref.norm_squared();
    let z = DVector::from_column_slice(z_k.as_slice());
    for chain in chains {
        let (coeff, rhs) = hocbf_constraint_row(chain, &z, 0.0);
        p.lin_rows.push(LinRow { c: coeff, d: rhs });
    }
    // a_v,1 = a_v,0 + T j_v,0 + T²/2 s
    let t = cfg.step;
    let a0: Vector3<f64> = z_k.fixed_rows::<3>(model::A).into();
    let j0: Vector3<f64> = z_k.fixed_rows::<3>(model::J).into();
    let g = (a0 + j0 * t - quad.g_vec()) * quad.mass;
    let f = DMatrix::identity(NU, NU) * (quad.mass * 0.5 * t * t);
    if cfg.relax_to_qp {
        let half = quad.max_thrust / 3f64.sqrt();
        for k in 0..NU {
            let mut c = DVector::zeros(NU);
            c[k] = f[(k, k)];
            p.lin_rows.push(LinRow { c: c.clone(), d: -half - g[k] });
            p.lin_rows.push(LinRow { c: -c, d: -half + g[k] });
        }
    } else {
        p.soc_rows.push(SocRow {
            f,
            g: DVector::from_column_slice(g.as_slice()),
            a: DVector::zeros(NU),
            b: quad.max_thrust,
        });
    }
    p
}
