//! Two-rate closed loop: outer MPC at the sampling period, attitude law and
//! plant at the inner step.

use nalgebra::{DVector, Vector3};

use super::scenario::ScenarioConfig;
use crate::attitude::{attitude_errors, torque_command};
use crate::cone::Status;
use crate::error::{Error, Result};
use crate::flatness::{desired_command, AugState};
use crate::mpc::Controller;
use crate::sim::{integrate_step, ControlInput, QuadState};

/// Lower thrust clamp, N.
pub const MIN_THRUST: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerRow {
    pub t: f64,
    pub state: QuadState,
    pub f_z: f64,
    pub tau: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRow {
    pub t: f64,
    /// `h₀` of every barrier at the outer state.
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    pub s: Vector3<f64>,
    pub status: Status,
    pub fallback: bool,
    pub solve_time: f64,
    pub z: AugState,
    /// Reference augmented state and snap at this sample.
    pub z_ref: AugState,
    pub s_ref: Vector3<f64>,
    /// `m‖a_v − g‖` at the outer state.
    pub cone_value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SimLog {
    pub inner: Vec<InnerRow>,
    pub outer: Vec<OuterRow>,
    /// Inner steps whose demanded thrust left `[MIN_THRUST, f_max]`.
    pub clamp_count: usize,
    /// Largest demanded thrust before clamping.
    pub max_thrust_demand: f64,
    /// Set when the run stopped early.
    pub failure: Option<String>,
}

impl SimLog {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs the scenario to completion or to the first failure. Errors are only
/// returned for invalid configurations; runtime failures end up in
/// [`SimLog::failure`] together with the partial log.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<SimLog> {
    cfg.validate()?;
    let mut ctrl = Controller::new(&cfg.controller, &cfg.mpc, &cfg.quad, &cfg.barrier_forms())?;
    let mut log = SimLog::default();
    if let Err(e) = run_loop(cfg, &mut ctrl, &mut log) {
        log::warn!("{}: run stopped: {e}", cfg.name);
        log.failure = Some(e.to_string());
    }
    Ok(log)
}

fn run_loop(cfg: &ScenarioConfig, ctrl: &mut Controller, log: &mut SimLog) -> Result<()> {
    let quad = &cfg.quad;
    let inner_dt = cfg.sim.inner_dt_s;
    let per = cfg.sim.inner_per_outer();
    let n_outer = cfg.sim.outer_steps();
    let forms = cfg.barrier_forms();
    let g = quad.g_vec();

    let mut x = cfg.initial.quad_state();
    let z0 = cfg.initial_aug_state();
    let (mut a_v, mut j_v) = (z0.a_v, z0.j_v);
    log.inner.reserve(n_outer * per);
    log.outer.reserve(n_outer);

    for k in 0..n_outer {
        let t_k = k as f64 * cfg.mpc.step;
        let z = AugState { p: x.p, v: x.v, a_v, j_v };
        let zv = z.to_vector();
        let refs = cfg.horizon_refs(t_k);
        let out = ctrl.step(t_k, &zv, &refs)?;
        let zd = DVector::from_column_slice(zv.as_slice());
        log.outer.push(OuterRow {
            t: t_k,
            h: forms.iter().map(|h| h.value(&zd)).collect(),
            phi: out.phi.clone(),
            s: out.s,
            status: out.status,
            fallback: out.fallback,
            solve_time: out.solve_time,
            z,
            z_ref: AugState::from_vector(&refs[0].z),
            s_ref: refs[0].s,
            cone_value: quad.mass * (a_v - g).norm(),
        });

        let s = out.s;
        for i in 0..per {
            let tau = i as f64 * inner_dt;
            let t = t_k + tau;
            let av = a_v + j_v * tau + s * (0.5 * tau * tau);
            let jv = j_v + s * tau;
            let r = cfg.reference.flat(t);
            let cmd = desired_command(&av, &jv, &s, (r.psi, r.psi_dot, r.psi_ddot), quad);
            log.max_thrust_demand = log.max_thrust_demand.max(cmd.f_z);
            let f_z = cmd.f_z.clamp(MIN_THRUST, quad.max_thrust);
            if f_z != cmd.f_z {
                log.clamp_count += 1;
                log::debug!("thrust clamp at t = {t:.3}: demanded {:.4} N", cmd.f_z);
            }
            let err = attitude_errors(&cmd.q_d, &x.q);
            let torque = torque_command(&err, &x.omega, &cmd.omega_d, &cmd.domega_d, &cfg.attitude, &quad.inertia);
            let u = ControlInput { f_z, tau: torque };
            log.inner.push(InnerRow { t, state: x, f_z, tau: torque });
            x = integrate_step(&x, &u, quad, inner_dt)?;
            if !x.is_finite() {
                return Err(Error::NonFinite("plant"));
            }
        }
        let t = cfg.mpc.step;
        a_v += j_v * t + s * (0.5 * t * t);
        j_v += s * t;
    }
    Ok(())
}
