use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::reference::ReferenceSpec;
use crate::attitude::AttitudeGains;
use crate::barrier::{build_chain, relative_degree, BarrierSpec, QuadraticForm};
use crate::error::{Error, Result};
use crate::flatness::{reference_to_augmented, AugState};
use crate::mpc::{augmented_continuous_dyn, ControllerSettings, MpcConfig, RefPoint};
use crate::sim::{QuadParams, QuadState, Quaternion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub duration_s: f64,
    pub inner_dt_s: f64,
    pub outer_dt_s: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { duration_s: 20.0, inner_dt_s: 1e-3, outer_dt_s: 0.1 }
    }
}

impl SimSettings {
    pub fn inner_per_outer(&self) -> usize {
        (self.outer_dt_s / self.inner_dt_s).round() as usize
    }

    pub fn outer_steps(&self) -> usize {
        (self.duration_s / self.outer_dt_s).round() as usize
    }
}

/// Initial plant state. The attitude is given in scalar-last order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub position_m: [f64; 3],
    pub velocity_m_s: [f64; 3],
    pub quaternion_xyzw: [f64; 4],
    pub body_rate_rad_s: [f64; 3],
}

impl InitialState {
    pub fn quad_state(&self) -> QuadState {
        let [x, y, z, w] = self.quaternion_xyzw;
        QuadState {
            p: Vector3::from(self.position_m),
            v: Vector3::from(self.velocity_m_s),
            q: Quaternion::new(w, x, y, z),
            omega: Vector3::from(self.body_rate_rad_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub quad: QuadParams,
    #[serde(default)]
    pub attitude: AttitudeGains,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub controller: ControllerSettings,
    #[serde(default)]
    pub barriers: Vec<BarrierSpec>,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub sim: SimSettings,
    pub initial: InitialState,
}

impl ScenarioConfig {
    pub fn barrier_forms(&self) -> Vec<QuadraticForm> {
        self.barriers.iter().map(|b| b.to_quadratic_form(12)).collect()
    }

    /// Reference augmented state and snap at time `t`.
    pub fn ref_point(&self, t: f64) -> RefPoint {
        let (z, s) = reference_to_augmented(&self.reference.flat(t), &self.quad.drag);
        RefPoint { z: z.to_vector(), s }
    }

    /// `N + 1` reference points sampled at `t + iT`.
    pub fn horizon_refs(&self, t: f64) -> Vec<RefPoint> {
        (0..=self.mpc.horizon).map(|i| self.ref_point(t + i as f64 * self.mpc.step)).collect()
    }

    /// Initial outer-loop state: measured position and velocity, virtual
    /// acceleration and jerk taken from the reference.
    pub fn initial_aug_state(&self) -> AugState {
        let x0 = self.initial.quad_state();
        let (zr, _) = reference_to_augmented(&self.reference.flat(0.0), &self.quad.drag);
        AugState { p: x0.p, v: x0.v, a_v: zr.a_v, j_v: zr.j_v }
    }

    /// Every violated invariant, or nothing.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        errs.extend(self.quad.validate().into_iter().map(|e| format!("quad: {e}")));
        errs.extend(self.attitude.validate().into_iter().map(|e| format!("attitude: {e}")));
        errs.extend(self.mpc.validate());
        errs.extend(self.controller.validate());
        errs.extend(self.reference.validate());
        for b in &self.barriers {
            errs.extend(b.validate());
        }
        let s = &self.sim;
        if !(s.inner_dt_s > 0.0 && s.outer_dt_s > 0.0 && s.duration_s > 0.0) {
            errs.push("sim: duration_s, inner_dt_s and outer_dt_s must be positive".into());
        } else {
            let ratio = s.outer_dt_s / s.inner_dt_s;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
                errs.push(format!(
                    "sim: outer_dt_s = {} is not an integer multiple of inner_dt_s = {}",
                    s.outer_dt_s, s.inner_dt_s
                ));
            }
            if (s.outer_dt_s - self.mpc.step).abs() > 1e-12 {
                errs.push(format!(
                    "sim: outer_dt_s = {} must equal the MPC step mpc.step_s = {}",
                    s.outer_dt_s, self.mpc.step
                ));
            }
            if s.duration_s < s.outer_dt_s {
                errs.push("sim: duration_s is shorter than one outer period".into());
            }
        }
        let q = self.initial.quaternion_xyzw;
        if !(q.iter().map(|v| v * v).sum::<f64>() > 1e-12) || q.iter().any(|v| !v.is_finite()) {
            errs.push("initial: quaternion_xyzw must be a finite, non-zero quaternion".into());
        }
        let init = [self.initial.position_m, self.initial.velocity_m_s, self.initial.body_rate_rad_s];
        if init.iter().flatten().any(|v| !v.is_finite()) {
            errs.push("initial: position, velocity and body rates must be finite".into());
        }
        if errs.is_empty() {
            errs.extend(self.initial_chain_violations());
        }
        errs
    }

    /// Safe-set membership `h_i(z₀) ≥ 0` of the initial state for every chain.
    fn initial_chain_violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let (a_c, b_c) = augmented_continuous_dyn(&self.quad.drag);
        let z0 = DVector::from_column_slice(self.initial_aug_state().to_vector().as_slice());
        for (j, (spec, h0)) in self.barriers.iter().zip(self.barrier_forms()).enumerate() {
            let chain = relative_degree(&h0, &a_c, &b_c)
                .and_then(|rho| build_chain(&h0, &vec![self.controller.p; rho], &a_c, &b_c));
            match chain {
                Ok(chain) => {
                    for (i, v) in chain.values(&z0).iter().enumerate() {
                        if *v < 0.0 {
                            errs.push(format!(
                                "initial state violates barrier {} ({spec:?}): h{i} = {v:.6} < 0",
                                j + 1
                            ));
                        }
                    }
                }
                Err(e) => errs.push(format!("barrier {}: {e}", j + 1)),
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(errs))
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }
}

/// Parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = ScenarioConfig::from_toml_str(&text).map_err(|message| Error::Parse { path: path.to_path_buf(), message })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_scenario(path: &Path, cfg: &ScenarioConfig) -> Result<()> {
    std::fs::write(path, cfg.to_toml_string()).map_err(|e| Error::io(path, e))
}

/// Scenario files shipped with the crate, by name.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    match name {
        "circle_two_cylinders" => Some(include_str!("../../scenarios/circle_two_cylinders.toml")),
        "narrow_gap" => Some(include_str!("../../scenarios/narrow_gap.toml")),
        "hover" => Some(include_str!("../../scenarios/hover.toml")),
        _ => None,
    }
}

pub const BUNDLED_SCENARIOS: [&str; 3] = ["circle_two_cylinders", "narrow_gap", "hover"];

/// Loads a bundled scenario by name.
pub fn bundled(name: &str) -> Result<ScenarioConfig> {
    let text = bundled_scenario(name).ok_or_else(|| Error::Config(format!("no bundled scenario `{name}`")))?;
    let cfg = ScenarioConfig::from_toml_str(text)
        .map_err(|message| Error::Parse { path: format!("<bundled {name}>").into(), message })?;
    cfg.validate()?;
    Ok(cfg)
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState {
            position_m: [0.0; 3],
            velocity_m_s: [0.0; 3],
            quaternion_xyzw: [0.0, 0.0, 0.0, 1.0],
            body_rate_rad_s: [0.0; 3],
        }
    }
}
