use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::flatness::FlatOutput;

/// Analytic flat-output references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// Horizontal circle flown counter-clockwise with a constant yaw rate.
    Circle {
        radius_m: f64,
        angular_rate_rad_s: f64,
        altitude_m: f64,
        yaw_rate_rad_s: f64,
        #[serde(default)]
        center_m: [f64; 2],
    },
    Hover {
        position_m: [f64; 3],
        #[serde(default)]
        yaw_rad: f64,
    },
}

impl ReferenceSpec {
    pub fn flat(&self, t: f64) -> FlatOutput {
        match *self {
            ReferenceSpec::Circle { radius_m: r, angular_rate_rad_s: w, altitude_m, yaw_rate_rad_s, center_m } => {
                let (s, c) = (w * t).sin_cos();
                let k = |n: i32| r * w.powi(n);
                FlatOutput {
                    p: Vector3::new(center_m[0] + r * c, center_m[1] + r * s, altitude_m),
                    v: Vector3::new(-k(1) * s, k(1) * c, 0.0),
                    a: Vector3::new(-k(2) * c, -k(2) * s, 0.0),
                    j: Vector3::new(k(3) * s, -k(3) * c, 0.0),
                    s: Vector3::new(k(4) * c, k(4) * s, 0.0),
                    psi: yaw_rate_rad_s * t,
                    psi_dot: yaw_rate_rad_s,
                    psi_ddot: 0.0,
                }
            }
            ReferenceSpec::Hover { position_m, yaw_rad } => FlatOutput {
                p: Vector3::from(position_m),
                psi: yaw_rad,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let ok = match self {
            ReferenceSpec::Circle { radius_m, angular_rate_rad_s, altitude_m, yaw_rate_rad_s, center_m } => {
                *radius_m > 0.0
                    && [*angular_rate_rad_s, *altitude_m, *yaw_rate_rad_s, center_m[0], center_m[1]]
                        .iter()
                        .all(|v| v.is_finite())
            }
            ReferenceSpec::Hover { position_m, yaw_rad } => {
                position_m.iter().all(|v| v.is_finite()) && yaw_rad.is_finite()
            }
        };
        if ok {
            Vec::new()
        } else {
            vec![format!("reference {self:?} has non-finite values or a non-positive radius")]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_derivatives_match_finite_differences() {
        let r = ReferenceSpec::Circle {
            radius_m: 2.0,
            angular_rate_rad_s: 0.5,
            altitude_m: 1.0,
            yaw_rate_rad_s: 0.5,
            center_m: [0.0, 0.0],
        };
        let h = 1e-5;
        let t = 1.3;
        let (a, b) = (r.flat(t - h), r.flat(t + h));
        let f = r.flat(t);
        assert!(((b.p - a.p) / (2.0 * h) - f.v).norm() < 1e-8);
        assert!(((b.v - a.v) / (2.0 * h) - f.a).norm() < 1e-8);
        assert!(((b.a - a.a) / (2.0 * h) - f.j).norm() < 1e-8);
        assert!(((b.j - a.j) / (2.0 * h) - f.s).norm() < 1e-8);
        assert_eq!(r.flat(0.0).p, Vector3::new(2.0, 0.0, 1.0));
    }
}
