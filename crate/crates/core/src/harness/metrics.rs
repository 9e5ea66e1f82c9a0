use serde::{Deserialize, Serialize};

use super::scenario::ScenarioConfig;
use super::sim::SimLog;
use crate::cone::Status;

/// Start of the window for the rms tracking error, s.
pub const RMS_WINDOW_START: f64 = 2.0;

/// Safety tolerance on the barrier values.
pub const SAFETY_TOL: f64 = 1e-6;

/// Gap crossing window of the narrow-gap geometry.
pub const GAP_X: (f64, f64) = (-2.15, -1.85);
pub const GAP_HALF_WIDTH: f64 = 0.15;
pub const GAP_ALTITUDE: f64 = 1.0;
pub const GAP_ALTITUDE_TOL: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub controller: String,
    pub completed: bool,
    pub failure: Option<String>,
    pub simulated_s: f64,
    /// Minimum of each position barrier over all inner samples.
    pub min_h: Vec<f64>,
    /// `None` without barriers.
    pub min_h_all: Option<f64>,
    /// Smallest distance to any obstacle surface, m.
    pub min_clearance_m: Option<f64>,
    pub rms_position_error_m: f64,
    pub max_solve_time_s: f64,
    pub mean_solve_time_s: f64,
    pub gap_passed: bool,
    pub infeasible_count: usize,
    pub fallback_count: usize,
    pub thrust_clamp_count: usize,
    /// `Σ_k (z_k − z̄_k)ᵀQ(z_k − z̄_k) + (s_k − s̄_k)ᵀR(s_k − s̄_k)`.
    pub tracking_cost: f64,
    /// Largest `m‖a_v − g‖` over the outer states, N.
    pub max_thrust_cone_n: f64,
    /// Largest demanded thrust over the inner steps, N.
    pub max_thrust_demand_n: f64,
    pub outer_steps: usize,
    pub inner_steps: usize,
}

impl Metrics {
    pub fn safe(&self) -> bool {
        self.min_h_all.map_or(true, |h| h >= -SAFETY_TOL)
    }
}

pub fn compute_metrics(log: &SimLog, cfg: &ScenarioConfig) -> Metrics {
    let nb = cfg.barriers.len();
    let mut min_h = vec![f64::INFINITY; nb];
    let mut min_clearance = f64::INFINITY;
    let mut sq = 0.0;
    let mut n_rms = 0usize;
    let mut in_gap = false;
    for row in &log.inner {
        let p = row.state.p;
        for (j, b) in cfg.barriers.iter().enumerate() {
            min_h[j] = min_h[j].min(b.position_value(&p));
            min_clearance = min_clearance.min(b.clearance(&p));
        }
        if row.t >= RMS_WINDOW_START - 1e-12 {
            sq += (p - cfg.reference.flat(row.t).p).norm_squared();
            n_rms += 1;
        }
        in_gap |= p.x >= GAP_X.0
            && p.x <= GAP_X.1
            && p.y.abs() <= GAP_HALF_WIDTH
            && (p.z - GAP_ALTITUDE).abs() <= GAP_ALTITUDE_TOL;
    }
    let min_h_all = min_h.iter().copied().reduce(f64::min);
    let safe = min_h_all.map_or(true, |h| h >= -SAFETY_TOL);

    let times: Vec<f64> = log.outer.iter().map(|r| r.solve_time).collect();
    let mean_solve = if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 };
    let mut cost = 0.0;
    for r in &log.outer {
        let e = r.z.to_vector() - r.z_ref.to_vector();
        let de = r.s - r.s_ref;
        cost += (0..12).map(|i| cfg.mpc.q_diag[i] * e[i] * e[i]).sum::<f64>();
        cost += (0..3).map(|i| cfg.mpc.r_diag[i] * de[i] * de[i]).sum::<f64>();
    }

    Metrics {
        scenario: cfg.name.clone(),
        controller: cfg.controller.kind.to_string(),
        completed: log.completed(),
        failure: log.failure.clone(),
        simulated_s: log.inner.len() as f64 * cfg.sim.inner_dt_s,
        min_h,
        min_h_all,
        min_clearance_m: (nb > 0).then_some(min_clearance),
        rms_position_error_m: if n_rms == 0 { 0.0 } else { (sq / n_rms as f64).sqrt() },
        max_solve_time_s: times.iter().copied().fold(0.0, f64::max),
        mean_solve_time_s: mean_solve,
        gap_passed: in_gap && safe,
        infeasible_count: log.outer.iter().filter(|r| r.status != Status::Optimal).count(),
        fallback_count: log.outer.iter().filter(|r| r.fallback).count(),
        thrust_clamp_count: log.clamp_count,
        tracking_cost: cost,
        max_thrust_cone_n: log.outer.iter().map(|r| r.cone_value).fold(0.0, f64::max),
        max_thrust_demand_n: log.max_thrust_demand,
        outer_steps: log.outer.len(),
        inner_steps: log.inner.len(),
    }
}
