//! Quaternion algebra and the rigid-body quadrotor plant.
//!
//! Quaternions are stored as `(w, x, y, z)` with the Hamilton product, and
//! `R(q)` maps body-frame vectors into the inertial frame. The plant is
//!
//! ```text
//! p' = v
//! v' = g + R(q) (0, 0, f_z) / m - D v
//! q' = 1/2 q ⊙ (0, ω)
//! ω' = J⁻¹ (τ - ω × J ω)
//! ```
//!
//! integrated with fixed-step RK4 and a quaternion renormalization after
//! every step.

use std::ops::Mul;

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude of gravitational acceleration used throughout, m/s².
pub const GRAVITY: f64 = 9.81;

/// Unit quaternion in `(w, x, y, z)` order, Hamilton convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion and normalizes it. A zero input yields identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::raw(w, x, y, z).normalized()
    }

    /// Builds a quaternion without normalizing. Used for derivatives and
    /// intermediate products that are not rotations.
    pub(crate) const fn raw(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n * s;
        Self::new(c, a.x, a.y, a.z)
    }

    /// Rotation about the inertial z axis.
    pub fn yaw(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::raw(c, 0.0, 0.0, s)
    }

    pub fn from_wxyz(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_wxyz(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        Self::raw(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Self::raw(self.w, -self.x, -self.y, -self.z)
    }

    /// Inverse of a unit quaternion (its conjugate).
    pub fn inverse(self) -> Self {
        self.conjugate()
    }

    /// Imaginary part `(x, y, z)`.
    pub fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub(crate) fn scale(self, k: f64) -> Self {
        Self::raw(k * self.w, k * self.x, k * self.y, k * self.z)
    }

    pub(crate) fn add(self, o: Self) -> Self {
        Self::raw(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    /// Hamilton product without renormalization.
    pub(crate) fn mul_raw(self, b: Self) -> Self {
        let a = self;
        Self::raw(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Rotation matrix mapping body-frame vectors to the inertial frame.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = *self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.to_rotation_matrix() * v
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vec().norm().atan2(self.w.abs())
    }

    /// Distance between two rotations, insensitive to the `q`/`-q` double cover.
    pub fn rotation_distance(&self, other: &Quaternion) -> f64 {
        (self.inverse() * *other).angle()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        self.mul_raw(rhs).normalized()
    }
}

/// Hamilton product, renormalized.
pub fn quat_multiply(q1: Quaternion, q2: Quaternion) -> Quaternion {
    q1 * q2
}

pub fn quat_to_rotmat(q: Quaternion) -> Matrix3<f64> {
    q.to_rotation_matrix()
}

/// `[v]×`
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] for skew-symmetric input; uses the antisymmetric part.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// Full vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quaternion,
    pub omega: Vector3<f64>,
}

impl QuadState {
    pub fn hover_at(p: Vector3<f64>) -> Self {
        QuadState { p, v: Vector3::zeros(), q: Quaternion::IDENTITY, omega: Vector3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(self.omega.iter()).all(|x| x.is_finite())
            && self.q.to_wxyz().iter().all(|x| x.is_finite())
    }

    fn pack(&self) -> SVector<f64, 13> {
        let mut s = SVector::<f64, 13>::zeros();
        s.fixed_rows_mut::<3>(0).copy_from(&self.p);
        s.fixed_rows_mut::<3>(3).copy_from(&self.v);
        s[6] = self.q.w;
        s[7] = self.q.x;
        s[8] = self.q.y;
        s[9] = self.q.z;
        s.fixed_rows_mut::<3>(10).copy_from(&self.omega);
        s
    }

    fn unpack(s: &SVector<f64, 13>) -> Self {
        QuadState {
            p: s.fixed_rows::<3>(0).into(),
            v: s.fixed_rows::<3>(3).into(),
            q: Quaternion::raw(s[6], s[7], s[8], s[9]),
            omega: s.fixed_rows::<3>(10).into(),
        }
    }
}

/// Collective thrust along body z and body torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub f_z: f64,
    pub tau: Vector3<f64>,
}

/// Rigid-body and actuator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    /// Diagonal of the inertia matrix.
    #[serde(rename = "inertia_kg_m2")]
    pub inertia: Vector3<f64>,
    /// Diagonal of the linear drag matrix.
    #[serde(rename = "drag_per_s")]
    pub drag: Vector3<f64>,
    #[serde(rename = "max_thrust_n")]
    pub max_thrust: f64,
    #[serde(rename = "gravity_m_s2", default = "default_gravity")]
    pub gravity: f64,
    /// Optional symmetric clamp on each torque component.
    #[serde(rename = "torque_limit_nm", default, skip_serializing_if = "Option::is_none")]
    pub torque_limit: Option<f64>,
}

fn default_gravity() -> f64 {
    GRAVITY
}

impl Default for QuadParams {
    /// Vehicle used throughout the bundled scenarios.
    fn default() -> Self {
        QuadParams {
            mass: 0.468,
            inertia: Vector3::new(4.856e-3, 4.856e-3, 8.801e-3),
            drag: Vector3::new(0.25, 0.25, 0.25),
            max_thrust: 12.0,
            gravity: GRAVITY,
            torque_limit: None,
        }
    }
}

impl QuadParams {
    /// Gravity vector `(0, 0, -g)`.
    pub fn g_vec(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.gravity)
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.mass > 0.0) {
            errs.push(format!("mass must be positive (got {})", self.mass));
        }
        if self.inertia.iter().any(|j| !(*j > 0.0)) {
            errs.push(format!("inertia entries must be positive (got {:?})", self.inertia.as_slice()));
        }
        if self.drag.iter().any(|d| !(*d >= 0.0)) {
            errs.push(format!("drag entries must be non-negative (got {:?})", self.drag.as_slice()));
        }
        if !(self.max_thrust > self.mass * self.gravity) {
            errs.push(format!(
                "max thrust {} N cannot hover a {} kg vehicle",
                self.max_thrust, self.mass
            ));
        }
        errs
    }
}

/// Time derivative of [`QuadState`]. `q_dot` is not a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub p_dot: Vector3<f64>,
    pub v_dot: Vector3<f64>,
    pub q_dot: Quaternion,
    pub omega_dot: Vector3<f64>,
}

pub fn dynamics_deriv(s: &QuadState, u: &ControlInput, prm: &QuadParams) -> StateDerivative {
    let thrust = Vector3::new(0.0, 0.0, u.f_z);
    let v_dot = prm.g_vec() + s.q.rotate(&thrust) / prm.mass - prm.drag.component_mul(&s.v);
    let q_dot = s.q.mul_raw(Quaternion::raw(0.0, s.omega.x, s.omega.y, s.omega.z)).scale(0.5);
    let j_omega = prm.inertia.component_mul(&s.omega);
    let omega_dot = (u.tau - s.omega.cross(&j_omega)).component_div(&prm.inertia);
    StateDerivative { p_dot: s.v, v_dot, q_dot, omega_dot }
}

fn deriv_packed(s: &SVector<f64, 13>, u: &ControlInput, prm: &QuadParams) -> SVector<f64, 13> {
    let d = dynamics_deriv(&QuadState::unpack(s), u, prm);
    let mut out = SVector::<f64, 13>::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&d.p_dot);
    out.fixed_rows_mut::<3>(3).copy_from(&d.v_dot);
    out[6] = d.q_dot.w;
    out[7] = d.q_dot.x;
    out[8] = d.q_dot.y;
    out[9] = d.q_dot.z;
    out.fixed_rows_mut::<3>(10).copy_from(&d.omega_dot);
    out
}

/// One RK4 step of length `dt` with the input held constant.
pub fn integrate_step(s: &QuadState, u: &ControlInput, prm: &QuadParams, dt: f64) -> Result<QuadState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("integration step must be positive (got {dt})")));
    }
    let mut u = *u;
    if let Some(lim) = prm.torque_limit {
        u.tau = u.tau.map(|t| t.clamp(-lim, lim));
    }
    let x = s.pack();
    let k1 = deriv_packed(&x, &u, prm);
    let k2 = deriv_packed(&(x + 0.5 * dt * k1), &u, prm);
    let k3 = deriv_packed(&(x + 0.5 * dt * k2), &u, prm);
    let k4 = deriv_packed(&(x + dt * k3), &u, prm);
    let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("plant"));
    }
    let mut out = QuadState::unpack(&next);
    out.q = out.q.normalized();
    Ok(out)
}
