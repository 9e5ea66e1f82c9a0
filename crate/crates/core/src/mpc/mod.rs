//! Outer-loop controllers on the augmented model: the sampled-data HOCBF
//! MPC and four baselines (continuous HOCBF safety filter, distance
//! constraints, discrete CBF and discrete HOCBF rows). Baselines with
//! nonconvex barrier rows are solved by sequential convex programming.

pub mod build;
pub mod model;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::barrier::{build_chain, compensation_phi, relative_degree, BarrierChain, IntervalBox, PhiMode, QuadraticForm, ReachSampler};
use crate::cone::{self, ConeProgram, Solution, SolverConfig, Status};
use crate::error::{Error, Result};
use crate::flatness::{AugInput, AugMatrix, AugVector};
use crate::sim::QuadParams;

pub use model::{augmented_continuous, augmented_continuous_dyn, discretize, phi_k};

fn default_reach_samples() -> usize {
    11
}

fn default_scp_iters() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    #[serde(rename = "horizon_steps")]
    pub horizon: usize,
    #[serde(rename = "step_s")]
    pub step: f64,
    pub q_diag: [f64; 12],
    pub p_diag: [f64; 12],
    pub r_diag: [f64; 3],
    #[serde(rename = "snap_min_m_s4")]
    pub snap_min: [f64; 3],
    #[serde(rename = "snap_max_m_s4")]
    pub snap_max: [f64; 3],
    /// Replace the thrust cone by its inscribed box.
    #[serde(default)]
    pub relax_to_qp: bool,
    #[serde(default)]
    pub phi_mode: PhiMode,
    #[serde(default = "default_reach_samples")]
    pub reach_samples: usize,
    #[serde(default = "default_scp_iters")]
    pub scp_max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let mut q = [1.0; 12];
        q[..3].fill(100.0);
        MpcConfig {
            horizon: 20,
            step: 0.1,
            q_diag: q,
            p_diag: q.map(|v| 10.0 * v),
            r_diag: [0.01; 3],
            snap_min: [-40.0; 3],
            snap_max: [40.0; 3],
            relax_to_qp: false,
            phi_mode: PhiMode::Hull,
            reach_samples: 11,
            scp_max_iter: 10,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.horizon < 1 {
            errs.push("mpc.horizon_steps must be at least 1".into());
        }
        if !(self.step > 0.0) {
            errs.push(format!("mpc.step_s must be positive, got {}", self.step));
        }
        let pos = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !pos(&self.q_diag) || !pos(&self.p_diag) || !pos(&self.r_diag) {
            errs.push("mpc weights q_diag, p_diag, r_diag must be positive".into());
        }
        if (0..3).any(|k| !(self.snap_min[k] < self.snap_max[k])) {
            errs.push("mpc snap bounds need snap_min < snap_max on every axis".into());
        }
        if self.reach_samples < 2 {
            errs.push("mpc.reach_samples must be at least 2".into());
        }
        if self.scp_max_iter < 1 {
            errs.push("mpc.scp_max_iter must be at least 1".into());
        }
        errs
    }

    pub fn input_box(&self) -> IntervalBox {
        IntervalBox {
            lower: DVector::from_column_slice(&self.snap_min),
            upper: DVector::from_column_slice(&self.snap_max),
        }
    }
}

/// Reference augmented state and snap at one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint {
    pub z: AugVector,
    pub s: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Sdhocbf,
    HocbfFilter,
    MpcDc,
    Dcbf,
    Dhocbf,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::Sdhocbf,
        ControllerKind::HocbfFilter,
        ControllerKind::MpcDc,
        ControllerKind::Dcbf,
        ControllerKind::Dhocbf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Sdhocbf => "sdhocbf",
            ControllerKind::HocbfFilter => "hocbf_filter",
            ControllerKind::MpcDc => "mpc_dc",
            ControllerKind::Dcbf => "dcbf",
            ControllerKind::Dhocbf => "dhocbf",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = ControllerKind::ALL.iter().map(|k| k.as_str()).collect();
            Error::Config(format!("unknown controller `{s}` (valid: {})", valid.join(", ")))
        })
    }
}

fn default_p() -> f64 {
    5.0
}

fn default_lambda() -> f64 {
    0.2
}

fn default_dhocbf_steps() -> Vec<usize> {
    vec![0, 1, 3, 4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSettings {
    pub kind: ControllerKind,
    /// Shared linear class-K gain of the continuous-time chains.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Decay rate of the discrete barrier rows.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Horizon steps carrying discrete HOCBF rows.
    #[serde(default = "default_dhocbf_steps")]
    pub dhocbf_steps: Vec<usize>,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        ControllerSettings {
            kind: ControllerKind::Sdhocbf,
            p: default_p(),
            lambda: default_lambda(),
            dhocbf_steps: default_dhocbf_steps(),
        }
    }
}

impl ControllerSettings {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.p > 0.0 && self.p.is_finite()) {
            errs.push(format!("controller.p must be positive, got {}", self.p));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            errs.push(format!("controller.lambda must lie in (0, 1], got {}", self.lambda));
        }
        if self.dhocbf_steps.is_empty() {
            errs.push("controller.dhocbf_steps must not be empty".into());
        }
        errs
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Snap applied over the next period.
    pub s: Vector3<f64>,
    pub status: Status,
    /// The previous input was held because this solve failed.
    pub fallback: bool,
    /// Total wall time of all solves in this step, seconds.
    pub solve_time: f64,
    pub iterations: usize,
    pub scp_iterations: usize,
    pub scp_converged: bool,
    /// Compensation terms per barrier (zero for controllers without them).
    pub phi: Vec<f64>,
    /// Per barrier: some barrier row of this barrier is active at the solution.
    pub active: Vec<bool>,
    pub predicted: Vec<AugVector>,
}

struct Attempt {
    s: Vector3<f64>,
    status: Status,
    solve_time: f64,
    iterations: usize,
    scp_iterations: usize,
    scp_converged: bool,
    phi: Vec<f64>,
    active: Vec<bool>,
    predicted: Vec<AugVector>,
}

/// One outer-loop controller instance, holding the fallback input and the
/// previous prediction used to seed the next SCP solve.
pub struct Controller {
    pub settings: ControllerSettings,
    pub cfg: MpcConfig,
    pub quad: QuadParams,
    pub solver: SolverConfig,
    pub a: AugMatrix,
    pub b: AugInput,
    barriers: Vec<QuadraticForm>,
    chains: Vec<BarrierChain>,
    sampler: ReachSampler,
    u_box: IntervalBox,
    prev_input: Option<Vector3<f64>>,
    prev_predicted: Option<Vec<AugVector>>,
    consecutive_failures: usize,
}

impl Controller {
    /// `barriers` are position quadratics `h₀` on the 12-dim augmented state.
    pub fn new(settings: &ControllerSettings, cfg: &MpcConfig, quad: &QuadParams, barriers: &[QuadraticForm]) -> Result<Self> {
        let mut errs = settings.validate();
        errs.extend(cfg.validate());
        errs.extend(quad.validate());
        if !errs.is_empty() {
            return Err(Error::InvalidScenario(errs));
        }
        let (a_c, b_c) = augmented_continuous_dyn(&quad.drag);
        let chains = barriers
            .iter()
            .map(|h0| {
                let rho = relative_degree(h0, &a_c, &b_c)?;
                build_chain(h0, &vec![settings.p; rho], &a_c, &b_c)
            })
            .collect::<Result<Vec<_>>>()?;
        let (a, b) = discretize(&quad.drag, cfg.step);
        Ok(Controller {
            settings: settings.clone(),
            cfg: cfg.clone(),
            quad: quad.clone(),
            solver: SolverConfig::default(),
            a,
            b,
            barriers: barriers.to_vec(),
            chains,
            sampler: ReachSampler::new(&a_c, &b_c, cfg.step, cfg.reach_samples),
            u_box: cfg.input_box(),
            prev_input: None,
            prev_predicted: None,
            consecutive_failures: 0,
        })
    }

    pub fn chains(&self) -> &[BarrierChain] {
        &self.chains
    }

    pub fn kind(&self) -> ControllerKind {
        self.settings.kind
    }

    /// Solves for the next input. A failed solve holds the previous input
    /// (or the reference snap at start-up); a second consecutive failure is
    /// an error.
    pub fn step(&mut self, t: f64, z_k: &AugVector, refs: &[RefPoint]) -> Result<StepOutput> {
        let seed = self.seed(refs);
        let at = self.solve_step(z_k, refs, &seed);
        if at.status == Status::Optimal {
            self.consecutive_failures = 0;
            self.prev_input = Some(at.s);
            self.prev_predicted = Some(at.predicted.clone());
            return Ok(StepOutput {
                s: at.s,
                status: at.status,
                fallback: false,
                solve_time: at.solve_time,
                iterations: at.iterations,
                scp_iterations: at.scp_iterations,
                scp_converged: at.scp_converged,
                phi: at.phi,
                active: at.active,
                predicted: at.predicted,
            });
        }
        self.consecutive_failures += 1;
        log::warn!(
            "{} solve at t = {t:.3} s returned {}; holding previous input",
            self.settings.kind,
            at.status.as_str()
        );
        if self.consecutive_failures >= 2 {
            return Err(Error::DoubleInfeasible { t });
        }
        let s = self.prev_input.unwrap_or(refs[0].s);
        // The held input still moves the prediction one step.
        if let Some(prev) = self.prev_predicted.as_mut() {
            prev.rotate_left(1);
            let last = prev.len() - 1;
            prev[last] = self.a * prev[last];
        }
        Ok(StepOutput {
            s,
            status: at.status,
            fallback: true,
            solve_time: at.solve_time,
            iterations: at.iterations,
            scp_iterations: at.scp_iterations,
            scp_converged: false,
            phi: at.phi,
            active: vec![false; self.barriers.len()],
            predicted: Vec::new(),
        })
    }

    /// Previous prediction shifted by one step, or the reference states.
    fn seed(&self, refs: &[RefPoint]) -> Vec<AugVector> {
        let n = self.cfg.horizon;
        match &self.prev_predicted {
            Some(prev) if prev.len() == n => {
                let mut s: Vec<AugVector> = prev[1..].to_vec();
                s.push(self.a * prev[n - 1] + self.b * refs[n].s);
                s
            }
            _ => refs[1..=n].iter().map(|r| r.z).collect(),
        }
    }

    fn base(&self, z_k: &AugVector, refs: &[RefPoint]) -> ConeProgram {
        build::base_program(z_k, refs, &self.a, &self.b, &self.cfg, &self.quad)
    }

    /// Compensation term of every chain at `z_k`.
    pub fn phis(&self, z_k: &AugVector) -> Vec<f64> {
        let z = DVector::from_column_slice(z_k.as_slice());
        self.chains
            .iter()
            .map(|c| compensation_phi(c, &z, &self.sampler, &self.u_box, self.cfg.phi_mode))
            .collect()
    }

    /// The program solved by the SdHOCBF controller.
    pub fn sdhocbf_program(&self, z_k: &AugVector, refs: &[RefPoint]) -> (ConeProgram, Vec<f64>) {
        let phis = self.phis(z_k);
        let mut p = self.base(z_k, refs);
        build::add_sdhocbf_rows(&mut p, &self.chains, z_k, &phis, self.cfg.horizon);
        (p, phis)
    }

    /// Stateless solve for the given seed (used for SCP linearization only).
    fn solve_step(&self, z_k: &AugVector, refs: &[RefPoint], seed: &[AugVector]) -> Attempt {
        let n = self.cfg.horizon;
        match self.settings.kind {
            ControllerKind::Sdhocbf => {
                let (p, phis) = self.sdhocbf_program(z_k, refs);
                let sol = cone::solve(&p, &self.solver);
                let active = self.row_activity(&p, &sol, 1);
                self.attempt(&sol, phis, active, 1, true)
            }
            ControllerKind::HocbfFilter => {
                let base = self.base(z_k, refs);
                let sol = cone::solve(&base, &self.solver);
                if sol.status != Status::Optimal {
                    return self.attempt(&sol, vec![0.0; self.chains.len()], vec![false; self.chains.len()], 1, true);
                }
                let s_mpc = build::first_input(&sol.x, n);
                let fp = build::filter_program(&s_mpc, &self.chains, z_k, &self.cfg, &self.quad);
                let filt = cone::solve(&fp, &self.solver);
                let active = (0..self.chains.len())
                    .map(|j| {
                        let r = &fp.lin_rows[j];
                        filt.status == Status::Optimal && r.c.dot(&filt.x) - r.d <= 1e-6
                    })
                    .collect();
                let mut predicted = build::predicted_states(&sol.x, n);
                let s = Vector3::new(filt.x[0], filt.x[1], filt.x[2]);
                predicted[0] = self.a * z_k + self.b * s;
                Attempt {
                    s,
                    status: filt.status,
                    solve_time: sol.solve_time + filt.solve_time,
                    iterations: sol.iterations + filt.iterations,
                    scp_iterations: 1,
                    scp_converged: true,
                    phi: vec![0.0; self.chains.len()],
                    active,
                    predicted,
                }
            }
            ControllerKind::MpcDc => {
                let steps: Vec<usize> = (0..n).collect();
                self.scp(z_k, refs, seed, 1.0, &steps)
            }
            ControllerKind::Dcbf => {
                let steps: Vec<usize> = (0..n).collect();
                self.scp(z_k, refs, seed, self.settings.lambda, &steps)
            }
            ControllerKind::Dhocbf => {
                let steps = self.settings.dhocbf_steps.clone();
                self.scp(z_k, refs, seed, self.settings.lambda, &steps)
            }
        }
    }

    fn scp(&self, z_k: &AugVector, refs: &[RefPoint], seed: &[AugVector], lambda: f64, steps: &[usize]) -> Attempt {
        let n = self.cfg.horizon;
        let base = self.base(z_k, refs);
        let rows_per_barrier = steps.iter().filter(|&&i| i < n).count();
        let mut zbar = seed.to_vec();
        let mut best: Option<(ConeProgram, Solution)> = None;
        let mut time = 0.0;
        let mut iterations = 0;
        let mut converged = false;
        let mut scp_iterations = 0;
        let mut last_status = Status::MaxIter;
        for _ in 0..self.cfg.scp_max_iter {
            let mut p = base.clone();
            build::add_discrete_barrier_rows(&mut p, &self.barriers, z_k, &zbar, lambda, steps, n);
            let sol = cone::solve(&p, &self.solver);
            time += sol.solve_time;
            iterations += sol.iterations;
            scp_iterations += 1;
            last_status = sol.status;
            if sol.status != Status::Optimal {
                break;
            }
            let states = build::predicted_states(&sol.x, n);
            let step = states.iter().zip(&zbar).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
            zbar = states;
            best = Some((p, sol));
            if step < 1e-6 {
                converged = true;
                break;
            }
        }
        match best {
            Some((p, sol)) => {
                if !converged {
                    log::debug!("SCP stopped after {scp_iterations} iterations without converging");
                }
                let active = self.row_activity(&p, &sol, rows_per_barrier);
                let mut at = self.attempt(&sol, vec![0.0; self.barriers.len()], active, scp_iterations, converged);
                at.solve_time = time;
                at.iterations = iterations;
                at
            }
            None => Attempt {
                s: Vector3::zeros(),
                status: if last_status == Status::Optimal { Status::MaxIter } else { last_status },
                solve_time: time,
                iterations,
                scp_iterations,
                scp_converged: false,
                phi: vec![0.0; self.barriers.len()],
                active: vec![false; self.barriers.len()],
                predicted: Vec::new(),
            },
        }
    }

    /// Barrier rows are the trailing linear rows, `per_barrier` per barrier.
    fn row_activity(&self, p: &ConeProgram, sol: &Solution, per_barrier: usize) -> Vec<bool> {
        let nb = self.barriers.len();
        let start = p.lin_rows.len() - nb * per_barrier;
        (0..nb)
            .map(|j| {
                sol.status == Status::Optimal
                    && p.lin_rows[start + j * per_barrier..start + (j + 1) * per_barrier]
                        .iter()
                        .any(|r| r.c.dot(&sol.x) - r.d <= 1e-6)
            })
            .collect()
    }

    fn attempt(&self, sol: &Solution, phi: Vec<f64>, active: Vec<bool>, scp_iterations: usize, scp_converged: bool) -> Attempt {
        let n = self.cfg.horizon;
        let ok = sol.status == Status::Optimal;
        Attempt {
            s: if ok { build::first_input(&sol.x, n) } else { Vector3::zeros() },
            status: sol.status,
            solve_time: sol.solve_time,
            iterations: sol.iterations,
            scp_iterations,
            scp_converged,
            phi,
            active,
            predicted: if ok { build::predicted_states(&sol.x, n) } else { Vec::new() },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
        let err = "pid".parse::<ControllerKind>().unwrap_err().to_string();
        assert!(err.contains("sdhocbf") && err.contains("dhocbf"));
    }

    #[test]
    fn default_config_is_valid() {
        assert!(MpcConfig::default().validate().is_empty());
        assert!(ControllerSettings::default().validate().is_empty());
        let bad = ControllerSettings { lambda: 0.0, ..Default::default() };
        assert_eq!(bad.validate().len(), 1);
    }
}
