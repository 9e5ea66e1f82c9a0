//! Tilt-prioritized attitude control.
//!
//! The attitude error `q_e = q_d⁻¹ ⊙ q` is split into a yaw part about body z
//! and a reduced (tilt) part, `q_e = q_e,yaw ⊙ q_e,red`, and the two are fed
//! back with separate gains so that the thrust direction converges before yaw.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::sim::Quaternion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeGains {
    pub kp_xy: f64,
    pub kp_z: f64,
    pub kd: Vector3<f64>,
}

impl Default for AttitudeGains {
    fn default() -> Self {
        AttitudeGains { kp_xy: 24.0, kp_z: 0.7, kd: Vector3::new(0.8, 0.8, 0.3) }
    }
}

impl AttitudeGains {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.kp_xy > 0.0 && self.kp_z > 0.0 && self.kd.iter().all(|k| *k > 0.0)) {
            errs.push("attitude gains must be strictly positive".to_string());
        }
        if !(self.kp_xy > self.kp_z) {
            errs.push(format!(
                "tilt gain kp_xy = {} must exceed yaw gain kp_z = {}",
                self.kp_xy, self.kp_z
            ));
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeError {
    pub q_e: Quaternion,
    pub q_e_yaw: Quaternion,
    pub q_e_red: Quaternion,
    /// `R(q_e)ᵀ ω_d - ω`; zero until [`AttitudeError::with_rates`] is called.
    pub omega_e: Vector3<f64>,
    /// Set when `q_e,w² + q_e,z² = 0` and the yaw part was taken as identity.
    pub yaw_singular: bool,
}

impl AttitudeError {
    pub fn with_rates(mut self, omega: &Vector3<f64>, omega_d: &Vector3<f64>) -> Self {
        self.omega_e = self.q_e.to_rotation_matrix().transpose() * omega_d - omega;
        self
    }
}

pub fn attitude_errors(q_d: &Quaternion, q: &Quaternion) -> AttitudeError {
    let q_e = q_d.inverse() * *q;
    let n = (q_e.w * q_e.w + q_e.z * q_e.z).sqrt();
    let (q_e_yaw, yaw_singular) = if n > 1e-12 {
        (Quaternion::raw(q_e.w / n, 0.0, 0.0, q_e.z / n), false)
    } else {
        (Quaternion::IDENTITY, true)
    };
    let q_e_red = q_e_yaw.inverse() * q_e;
    AttitudeError { q_e, q_e_yaw, q_e_red, omega_e: Vector3::zeros(), yaw_singular }
}

/// Body torque from the split attitude error, rate error and a gyroscopic /
/// angular-acceleration feed-forward `J R(q_e)ᵀ ω̇_d - (Jω) × ω`.
///
/// `q_e` measures the actual attitude relative to the desired one, so the
/// proportional terms enter with a negative sign.
pub fn torque_command(
    err: &AttitudeError,
    omega: &Vector3<f64>,
    omega_d: &Vector3<f64>,
    domega_d: &Vector3<f64>,
    gains: &AttitudeGains,
    inertia: &Vector3<f64>,
) -> Vector3<f64> {
    let r_t = err.q_e.to_rotation_matrix().transpose();
    let omega_e = r_t * omega_d - omega;
    let sgn = if err.q_e.w >= 0.0 { 1.0 } else { -1.0 };
    let proportional = err.q_e_red.vec() * gains.kp_xy + err.q_e_yaw.vec() * (gains.kp_z * sgn);
    let j_omega = inertia.component_mul(omega);
    let feed_forward = inertia.component_mul(&(r_t * domega_d)) - j_omega.cross(omega);
    -proportional + gains.kd.component_mul(&omega_e) + feed_forward
}
