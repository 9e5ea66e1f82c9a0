//! Differential-flatness conversions between the outer-loop augmented model
//! and the attitude loop.
//!
//! The outer loop works on `z = (p, v, a_v, j_v)` with snap-like input `s_v`,
//! where `a_v` stands in for `g + R(q) f / m`. The thrust direction follows
//! from `a_v - g`, and the desired attitude is the minimal tilt taking body z
//! onto that direction composed with the reference yaw:
//! `q_d = q_red ⊙ q_yaw`, with `R(q)` mapping body to inertial.

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::sim::{QuadParams, Quaternion};

pub type AugVector = SVector<f64, 12>;
pub type AugMatrix = SMatrix<f64, 12, 12>;
pub type AugInput = SMatrix<f64, 12, 3>;

/// Flat output `(p̄, ψ̄)` with its time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlatOutput {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub j: Vector3<f64>,
    pub s: Vector3<f64>,
    pub psi: f64,
    pub psi_dot: f64,
    pub psi_ddot: f64,
}

/// Outer-loop state: position, velocity, virtual acceleration, virtual jerk.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a_v: Vector3<f64>,
    pub j_v: Vector3<f64>,
}

impl AugState {
    /// Stacked as `(p, v, a_v, j_v)`.
    pub fn to_vector(&self) -> AugVector {
        let mut z = AugVector::zeros();
        z.fixed_rows_mut::<3>(0).copy_from(&self.p);
        z.fixed_rows_mut::<3>(3).copy_from(&self.v);
        z.fixed_rows_mut::<3>(6).copy_from(&self.a_v);
        z.fixed_rows_mut::<3>(9).copy_from(&self.j_v);
        z
    }

    pub fn from_vector(z: &AugVector) -> Self {
        AugState {
            p: z.fixed_rows::<3>(0).into(),
            v: z.fixed_rows::<3>(3).into(),
            a_v: z.fixed_rows::<3>(6).into(),
            j_v: z.fixed_rows::<3>(9).into(),
        }
    }
}

/// Thrust, attitude and rate targets for the inner loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredCommand {
    pub f_z: f64,
    pub q_d: Quaternion,
    pub omega_d: Vector3<f64>,
    pub domega_d: Vector3<f64>,
}

/// Maps real derivatives to the augmented model: `a_v = a + Dv`,
/// `j_v = j + Da`, `s_v = s + Dj`.
pub fn reference_to_augmented(flat: &FlatOutput, drag: &Vector3<f64>) -> (AugState, Vector3<f64>) {
    let z = AugState {
        p: flat.p,
        v: flat.v,
        a_v: flat.a + drag.component_mul(&flat.v),
        j_v: flat.j + drag.component_mul(&flat.a),
    };
    (z, flat.s + drag.component_mul(&flat.j))
}

/// `z_d = A z_k + B s*`
pub fn propagate_desired(z: &AugState, s_star: &Vector3<f64>, a: &AugMatrix, b: &AugInput) -> AugState {
    AugState::from_vector(&(a * z.to_vector() + b * s_star))
}

/// Inverse of [`reference_to_augmented`].
pub fn virtual_to_real(
    v_d: &Vector3<f64>,
    a_v_d: &Vector3<f64>,
    j_v_d: &Vector3<f64>,
    s_v: &Vector3<f64>,
    drag: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let a = a_v_d - drag.component_mul(v_d);
    let j = j_v_d - drag.component_mul(&a);
    let s = s_v - drag.component_mul(&j);
    (a, j, s)
}

/// Normalizes `x(t)` and returns the first two time derivatives of `x/‖x‖`.
fn normalize_d2<const D: usize>(
    x: &SVector<f64, D>,
    xd: &SVector<f64, D>,
    xdd: &SVector<f64, D>,
) -> (SVector<f64, D>, SVector<f64, D>, SVector<f64, D>) {
    let r = x.norm();
    let n = x / r;
    let rd = n.dot(xd);
    let rdd = (xd.dot(xd) + x.dot(xdd) - rd * rd) / r;
    let nd = (xd - n * rd) / r;
    let ndd = (xdd - nd * (2.0 * rd) - n * rdd) / r;
    (n, nd, ndd)
}

fn quat4(v: &SVector<f64, 4>) -> Quaternion {
    Quaternion::raw(v[0], v[1], v[2], v[3])
}

/// Reduced attitude and its derivatives for a thrust-direction trajectory
/// `f(t) = a_v(t) - g` with `ḟ = j_v`, `f̈ = s_v`.
fn reduced_attitude_d2(
    f: &Vector3<f64>,
    fd: &Vector3<f64>,
    fdd: &Vector3<f64>,
) -> (Quaternion, Quaternion, Quaternion) {
    let (b, bd, bdd) = normalize_d2(f, fd, fdd);
    // Minimal rotation from e_z to b is normalize(1 + b_z, e_z × b); it is
    // smooth everywhere except the inverted direction b = -e_z.
    if 1.0 + b.z < 1e-9 {
        // Near-inverted: half turn about x, then the minimal rotation from -e_z to b.
        // Rates are not tracked on this chart.
        let zero = Quaternion::raw(0.0, 0.0, 0.0, 0.0);
        let q = Quaternion::new(1.0 - b.z, b.y, -b.x, 0.0) * Quaternion::raw(0.0, 1.0, 0.0, 0.0);
        return (q, zero, zero);
    }
    let lift = |v: &Vector3<f64>, w: f64| SVector::<f64, 4>::new(w + v.z, -v.y, v.x, 0.0);
    let (q, qd, qdd) = normalize_d2(&lift(&b, 1.0), &lift(&bd, 0.0), &lift(&bdd, 0.0));
    (quat4(&q), quat4(&qd), quat4(&qdd))
}

fn yaw_d2(psi: f64, dpsi: f64, ddpsi: f64) -> (Quaternion, Quaternion, Quaternion) {
    let (s, c) = (0.5 * psi).sin_cos();
    let q = Quaternion::raw(c, 0.0, 0.0, s);
    let e = Quaternion::raw(-s, 0.0, 0.0, c);
    let qd = e.scale(0.5 * dpsi);
    let qdd = e.scale(0.5 * ddpsi).add(q.scale(-0.25 * dpsi * dpsi));
    (q, qd, qdd)
}

/// Collective thrust and desired attitude for a virtual acceleration and yaw.
///
/// Satisfies `g + R(q_d) (0, 0, f_z) / m = a_v_d` exactly (up to rounding).
/// A vertical thrust direction gives `q_red = identity`.
pub fn desired_attitude(a_v_d: &Vector3<f64>, psi: f64, prm: &QuadParams) -> (f64, Quaternion) {
    let f = a_v_d - prm.g_vec();
    let (q_red, _, _) = reduced_attitude_d2(&f, &Vector3::zeros(), &Vector3::zeros());
    (prm.mass * f.norm(), q_red * Quaternion::yaw(psi))
}

/// Body rates and accelerations of the desired attitude, from the closed-form
/// dependence of `q_d` on `(a_v, ψ)` and `ȧ_v = j_v`, `ä_v = s_v`:
/// `ω = 2 vec(q* ⊙ q̇)`, `ω̇ = 2 vec(q* ⊙ q̈)`.
#[allow(clippy::too_many_arguments)]
pub fn desired_rates(
    a_v_d: &Vector3<f64>,
    j_v_d: &Vector3<f64>,
    s_v_d: &Vector3<f64>,
    psi: f64,
    dpsi: f64,
    ddpsi: f64,
    prm: &QuadParams,
) -> (Vector3<f64>, Vector3<f64>) {
    let f = a_v_d - prm.g_vec();
    let (qr, qr_d, qr_dd) = reduced_attitude_d2(&f, j_v_d, s_v_d);
    let (qy, qy_d, qy_dd) = yaw_d2(psi, dpsi, ddpsi);
    let q = qr.mul_raw(qy);
    let q_d = qr_d.mul_raw(qy).add(qr.mul_raw(qy_d));
    let q_dd = qr_dd
        .mul_raw(qy)
        .add(qr_d.mul_raw(qy_d).scale(2.0))
        .add(qr.mul_raw(qy_dd));
    let conj = q.conjugate();
    let omega = conj.mul_raw(q_d).vec() * 2.0;
    let domega = conj.mul_raw(q_dd).vec() * 2.0;
    (omega, domega)
}

/// Full inner-loop target from a virtual state, its input and the reference yaw.
pub fn desired_command(
    a_v: &Vector3<f64>,
    j_v: &Vector3<f64>,
    s_v: &Vector3<f64>,
    psi: (f64, f64, f64),
    prm: &QuadParams,
) -> DesiredCommand {
    let (f_z, q_d) = desired_attitude(a_v, psi.0, prm);
    let (omega_d, domega_d) = desired_rates(a_v, j_v, s_v, psi.0, psi.1, psi.2, prm);
    DesiredCommand { f_z, q_d, omega_d, domega_d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GRAVITY;

    fn prm() -> QuadParams {
        QuadParams::default()
    }

    fn thrust_reconstruction(a_v: &Vector3<f64>, psi: f64) -> f64 {
        let p = prm();
        let (f_z, q) = desired_attitude(a_v, psi, &p);
        (p.g_vec() + q.rotate(&Vector3::new(0.0, 0.0, f_z)) / p.mass - a_v).norm()
    }

    #[test]
    fn hover_flat_output_maps_to_zero_virtual_states() {
        let flat = FlatOutput { p: Vector3::new(0.0, 0.0, 1.0), ..Default::default() };
        let (z, s) = reference_to_augmented(&flat, &Vector3::repeat(0.25));
        assert_eq!(z.a_v, Vector3::zeros());
        assert_eq!(z.j_v, Vector3::zeros());
        assert_eq!(s, Vector3::zeros());
    }

    #[test]
    fn circle_at_t0() {
        // p(t) = (2cos .5t, 2sin .5t, 1): v(0) = (0, 1, 0), a(0) = (-0.5, 0, 0)
        let flat = FlatOutput {
            p: Vector3::new(2.0, 0.0, 1.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            a: Vector3::new(-0.5, 0.0, 0.0),
            j: Vector3::new(0.0, -0.25, 0.0),
            s: Vector3::new(0.125, 0.0, 0.0),
            ..Default::default()
        };
        let (z, _) = reference_to_augmented(&flat, &Vector3::repeat(0.25));
        assert!((z.a_v - Vector3::new(-0.5, 0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn virtual_real_round_trip() {
        let drag = Vector3::new(0.25, 0.1, 0.4);
        let flat = FlatOutput {
            v: Vector3::new(0.3, -1.0, 0.2),
            a: Vector3::new(1.5, 0.2, -0.7),
            j: Vector3::new(-0.4, 2.0, 0.1),
            s: Vector3::new(3.0, -1.0, 0.5),
            ..Default::default()
        };
        let (z, s_v) = reference_to_augmented(&flat, &drag);
        let (a, j, s) = virtual_to_real(&z.v, &z.a_v, &z.j_v, &s_v, &drag);
        assert!((a - flat.a).amax() < 1e-12);
        assert!((j - flat.j).amax() < 1e-12);
        assert!((s - flat.s).amax() < 1e-12);

        let zero = Vector3::zeros();
        let (a, j, s) = virtual_to_real(&flat.v, &flat.a, &flat.j, &flat.s, &zero);
        assert_eq!((a, j, s), (flat.a, flat.j, flat.s));
        let (a, _, _) =
            virtual_to_real(&Vector3::x(), &zero, &zero, &zero, &Vector3::repeat(0.25));
        assert_eq!(a, Vector3::new(-0.25, 0.0, 0.0));
    }

    #[test]
    fn propagate_identity_limit() {
        let z = AugState { p: Vector3::new(1.0, 2.0, 3.0), v: Vector3::x(), ..Default::default() };
        let out = propagate_desired(&z, &Vector3::zeros(), &AugMatrix::identity(), &AugInput::zeros());
        assert_eq!(out, z);
    }

    #[test]
    fn hover_and_climb_attitude() {
        let (f, q) = desired_attitude(&Vector3::zeros(), 0.0, &prm());
        assert!((f - 0.468 * GRAVITY).abs() < 1e-12);
        assert!((f - 4.591).abs() < 1e-3);
        assert_eq!(q, Quaternion::IDENTITY);

        let (f, q) = desired_attitude(&Vector3::new(0.0, 0.0, GRAVITY), 0.0, &prm());
        assert!((f - 9.182).abs() < 1e-3);
        assert_eq!(q, Quaternion::IDENTITY);
    }

    #[test]
    fn thrust_direction_is_consistent() {
        for (a, psi) in [
            (Vector3::new(3.0, -2.0, 1.0), 0.4),
            (Vector3::new(-10.0, 5.0, -4.0), -2.0),
            (Vector3::new(0.1, 0.0, 20.0), 3.0),
            (Vector3::new(0.0, 0.0, -15.0), 0.0),
            (Vector3::new(0.0, 1e-9, -15.0), 0.0),
        ] {
            assert!(thrust_reconstruction(&a, psi) < 1e-9, "a = {a:?}");
        }
    }

    #[test]
    fn yaw_does_not_move_thrust_axis() {
        let p = prm();
        let a = Vector3::new(2.0, -1.0, 0.5);
        let (f0, q0) = desired_attitude(&a, 0.0, &p);
        let (f1, q1) = desired_attitude(&a, 1.3, &p);
        assert_eq!(f0, f1);
        assert!(q0.rotation_distance(&q1) > 1.0);
        assert!((q0.rotate(&Vector3::z()) - q1.rotate(&Vector3::z())).norm() < 1e-12);
    }

    #[test]
    fn stationary_attitude_has_zero_rates() {
        let (w, dw) = desired_rates(
            &Vector3::new(1.0, 2.0, -0.5),
            &Vector3::zeros(),
            &Vector3::zeros(),
            0.7,
            0.0,
            0.0,
            &prm(),
        );
        assert!(w.norm() < 1e-15 && dw.norm() < 1e-15);
    }

    #[test]
    fn pure_yaw_rate() {
        let z = Vector3::zeros();
        let (w, dw) = desired_rates(&z, &z, &z, 0.2, 0.5, 0.0, &prm());
        assert!((w - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12);
        assert!(dw.norm() < 1e-12);
    }
}
