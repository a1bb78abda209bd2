//! Per-vehicle collision-avoidance MPC and the two-stage prioritized protocol.
//!
//! Each vehicle solves a linear program over control deviations from its plan:
//! minimize the total slack on the per-step separation rows, subject to the
//! dynamics, tube membership and the input/state sets. Ties are broken by a
//! second lexicographic objective, the L1 deviation from the current plan.
//! Because the model is axis-decoupled and every constraint is per-axis, the
//! program splits into three independent axis programs.

use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{separation_profile, side_axis, side_sign, DecisionSequence};
use crate::dynamics::{ControlInput, LinearModel};
use crate::lp::{solve_lp_lexicographic, LpError, LpProblem, LpStatus, INF};
use crate::stl::RobustnessTube;
use crate::trajectory::{ConflictScenario, Trajectory};

/// Separation rows require `δ + SIDE_MARGIN` so that a zero-slack solution is
/// strictly separated after rounding.
pub const SIDE_MARGIN: f64 = 1e-6;
/// Tube rows use `ρ − TUBE_MARGIN`.
pub const TUBE_MARGIN: f64 = 1e-7;
/// Total slack at or below this counts as zero.
pub const ZERO_SLACK_TOL: f64 = 1e-8;
/// Tolerance for the lazily added velocity rows.
const VELOCITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CampcError {
    #[error("input lengths differ: own {own}, avoid {avoid}, tube {tube}, decisions {decisions}")]
    LengthMismatch { own: usize, avoid: usize, tube: usize, decisions: usize },
    #[error("decision entries must lie in 1..=6")]
    InvalidDecision,
    #[error("the vehicle model couples axes")]
    CoupledModel,
    #[error("axis {0} program is infeasible (tube and dynamics are incompatible)")]
    LpInfeasible(usize),
    #[error("axis {0} program is unbounded")]
    LpUnbounded(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Priority {
    /// Sign −1: the own vehicle is the first of the pair (sides read own minus other).
    Low,
    /// Sign +1: the own vehicle is the second of the pair (sides read other minus own).
    High,
}

impl Priority {
    pub fn sign(self) -> f64 {
        match self {
            Priority::Low => -1.0,
            Priority::High => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampcInput<'a> {
    pub own_traj: &'a Trajectory,
    pub avoid_traj: &'a Trajectory,
    pub tube: &'a RobustnessTube,
    pub decisions: &'a DecisionSequence,
    pub priority: Priority,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampcOutput {
    pub new_traj: Trajectory,
    pub controls: Vec<ControlInput>,
    /// One slack per step.
    pub slacks: Vec<f64>,
    pub total_slack: f64,
    pub lp_solves: usize,
}

impl CampcOutput {
    pub fn zero_slack(&self) -> bool {
        self.total_slack <= ZERO_SLACK_TOL
    }
}

/// Per-axis condensed response of position and velocity to control changes.
#[derive(Debug, Clone)]
pub(crate) struct AxisResponse {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
}

impl AxisResponse {
    pub fn new(model: &LinearModel, steps: usize) -> Self {
        let (pos, vel) = model.axis_impulse_response(steps);
        Self { pos, vel }
    }

    /// Coefficient of control change `i` in the position deviation at step `k`.
    pub fn pos_coeff(&self, k: usize, i: usize) -> f64 {
        if i < k {
            self.pos[k - 1 - i]
        } else {
            0.0
        }
    }

    pub fn vel_coeff(&self, k: usize, i: usize) -> f64 {
        if i < k {
            self.vel[k - 1 - i]
        } else {
            0.0
        }
    }

    pub fn velocity_change(&self, du: &[f64], k: usize) -> f64 {
        (0..k).map(|i| self.vel[k - 1 - i] * du[i]).sum()
    }
}

struct AxisSolution {
    du: Vec<f64>,
    /// (step, slack) for the steps whose side lies on this axis.
    slacks: Vec<(usize, f64)>,
    solves: usize,
}

/// Solve the collision-avoidance program for one vehicle.
pub fn ca_mpc(input: &CampcInput<'_>, model: &LinearModel) -> Result<CampcOutput, CampcError> {
    let len = input.own_traj.len();
    if input.avoid_traj.len() != len || input.tube.centerline.len() != len || input.decisions.len() != len {
        return Err(CampcError::LengthMismatch {
            own: len,
            avoid: input.avoid_traj.len(),
            tube: input.tube.centerline.len(),
            decisions: input.decisions.len(),
        });
    }
    if !input.decisions.is_valid() {
        return Err(CampcError::InvalidDecision);
    }
    if !model.is_axis_decoupled() {
        return Err(CampcError::CoupledModel);
    }
    let steps = len - 1;
    let controls = model.recover_controls(input.own_traj);
    let base = model.rollout_unchecked(&input.own_traj.states[0], &controls);
    let response = AxisResponse::new(model, steps);

    let mut du_all = vec![Vector3::zeros(); steps];
    let mut slacks = vec![0.0; len];
    let mut lp_solves = 0;
    for axis in 0..3 {
        let sol = solve_axis(input, model, &base, &controls, &response, axis)?;
        for (i, d) in sol.du.iter().enumerate() {
            du_all[i][axis] = *d;
        }
        for (k, s) in sol.slacks {
            slacks[k] = s;
        }
        lp_solves += sol.solves;
    }
    let new_controls: Vec<ControlInput> = controls.iter().zip(&du_all).map(|(u, d)| u + d).collect();
    let new_traj = if du_all.iter().all(|d| *d == Vector3::zeros()) {
        input.own_traj.clone()
    } else {
        model.rollout_unchecked(&input.own_traj.states[0], &new_controls)
    };
    let total_slack = slacks.iter().sum();
    Ok(CampcOutput { new_traj, controls: new_controls, slacks, total_slack, lp_solves })
}

fn solve_axis(
    input: &CampcInput<'_>,
    model: &LinearModel,
    base: &Trajectory,
    controls: &[ControlInput],
    response: &AxisResponse,
    axis: usize,
) -> Result<AxisSolution, CampcError> {
    let len = base.len();
    let steps = len - 1;
    let prty = input.priority.sign();
    let radius = (input.tube.radius - TUBE_MARGIN).max(0.0);
    let own: Vec<f64> = base.states.iter().map(|s| s.position[axis]).collect();
    let centre: Vec<f64> = input.tube.centerline.iter().map(|c| c[axis]).collect();
    let avoid: Vec<f64> = input.avoid_traj.states.iter().map(|s| s.position[axis]).collect();
    let on_centre = own.iter().zip(&centre).all(|(a, b)| (a - b).abs() <= 1e-12);

    // Side rows on this axis: (step, coefficient on e_k, rhs constant).
    // prty·s·e_k − λ_k ≤ −δ − margin + prty·s·(q_k − p_k)
    let side_steps: Vec<(usize, f64, f64)> = (0..len)
        .filter(|&k| side_axis(input.decisions.0[k]) == axis)
        .map(|k| {
            let s = side_sign(input.decisions.0[k]);
            (k, prty * s, -input.delta - SIDE_MARGIN + prty * s * (avoid[k] - own[k]))
        })
        .collect();

    let zero = AxisSolution {
        du: vec![0.0; steps],
        slacks: side_steps.iter().map(|&(k, _, r)| (k, (-r).max(0.0))).collect(),
        solves: 0,
    };
    let base_inside = (1..len).all(|k| (own[k] - centre[k]).abs() <= radius);
    if base_inside && side_steps.iter().all(|&(_, _, rhs)| rhs >= 0.0) {
        return Ok(zero);
    }
    let n_lambda = side_steps.len();
    let n_du = steps;
    let n_t = steps;
    let nv = n_du + n_t + n_lambda;
    let idx_t = |k: usize| n_du + (k - 1);
    let idx_l = |j: usize| n_du + n_t + j;

    let mut primary = vec![0.0; nv];
    let mut secondary = vec![0.0; nv];
    for j in 0..n_lambda {
        primary[idx_l(j)] = 1.0;
    }
    for k in 1..len {
        secondary[idx_t(k)] = 1.0;
    }
    let mut lp = LpProblem::new(primary);
    for i in 0..n_du {
        let u = controls[i][axis];
        lp.set_bounds(i, -model.a_max - u, model.a_max - u);
    }
    for k in 1..len {
        lp.set_bounds(idx_t(k), 0.0, if on_centre { radius } else { INF });
    }
    for j in 0..n_lambda {
        lp.set_bounds(idx_l(j), 0.0, INF);
    }

    let mut row = vec![0.0; nv];
    let fill_dev = |row: &mut Vec<f64>, k: usize, scale: f64| {
        row.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..k {
            row[i] = scale * response.pos_coeff(k, i);
        }
    };
    // L1 deviation: ±e_k − t_k ≤ 0
    for k in 1..len {
        for sgn in [1.0, -1.0] {
            fill_dev(&mut row, k, sgn);
            row[idx_t(k)] = -1.0;
            lp.add_le(&row, 0.0);
        }
    }
    if !on_centre {
        for k in 1..len {
            fill_dev(&mut row, k, 1.0);
            lp.add_le(&row, centre[k] + radius - own[k]);
            fill_dev(&mut row, k, -1.0);
            lp.add_le(&row, radius - centre[k] + own[k]);
        }
    }
    for (j, &(k, coeff, rhs)) in side_steps.iter().enumerate() {
        fill_dev(&mut row, k, coeff);
        row[idx_l(j)] = -1.0;
        lp.add_le(&row, rhs);
    }

    let base_vel: Vec<f64> = base.states.iter().map(|s| s.velocity[axis]).collect();
    let mut solves = 0;
    let mut velocity_rows = vec![[false; 2]; len];
    loop {
        let sol = solve_lp_lexicographic(&lp, &secondary)?;
        solves += 1;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(CampcError::LpInfeasible(axis)),
            LpStatus::Unbounded => return Err(CampcError::LpUnbounded(axis)),
        }
        let x = sol.primal.expect("optimal solutions carry a point");
        let du = x[..n_du].to_vec();
        let mut added = false;
        for k in 1..len {
            let v = base_vel[k] + response.velocity_change(&du, k);
            for (side, over) in [(0, v - model.v_max), (1, -model.v_max - v)] {
                if over > VELOCITY_TOL && !velocity_rows[k][side] {
                    velocity_rows[k][side] = true;
                    added = true;
                    let sgn = if side == 0 { 1.0 } else { -1.0 };
                    let mut r = vec![0.0; nv];
                    for (i, c) in r.iter_mut().enumerate().take(k) {
                        *c = sgn * response.vel_coeff(k, i);
                    }
                    lp.add_le(&r, model.v_max - sgn * base_vel[k]);
                }
            }
        }
        if !added {
            let slacks = side_steps
                .iter()
                .enumerate()
                .map(|(j, &(k, _, _))| (k, x[idx_l(j)].max(0.0)))
                .collect();
            return Ok(AxisSolution { du, slacks, solves });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum L2fStatus {
    DoneUas1,
    DoneUas2,
    DoneBothRecheck,
    Fail,
}

impl L2fStatus {
    pub fn resolved(self) -> bool {
        self != L2fStatus::Fail
    }

    pub fn name(self) -> &'static str {
        match self {
            L2fStatus::DoneUas1 => "DoneUas1",
            L2fStatus::DoneUas2 => "DoneUas2",
            L2fStatus::DoneBothRecheck => "DoneBothRecheck",
            L2fStatus::Fail => "Fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2fOutcome {
    pub status: L2fStatus,
    pub traj_a: Trajectory,
    pub traj_b: Trajectory,
    pub slack1: f64,
    /// Zero when the second stage did not run.
    pub slack2: f64,
    pub stage2_slacks: Option<Vec<f64>>,
    pub t1: f64,
    pub t2: f64,
    /// Seconds spent in both stages.
    pub event_time: f64,
}

/// Which vehicle takes the low priority and deviates first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FirstMover {
    #[default]
    VehicleA,
    VehicleB,
}

/// The two-stage protocol with vehicle A deviating first.
pub fn l2f(scenario: &ConflictScenario, decisions: &DecisionSequence, model: &LinearModel) -> Result<L2fOutcome, CampcError> {
    l2f_with(scenario, decisions, model, FirstMover::VehicleA)
}

pub fn l2f_with(
    scenario: &ConflictScenario,
    decisions: &DecisionSequence,
    model: &LinearModel,
    first: FirstMover,
) -> Result<L2fOutcome, CampcError> {
    let (first_traj, first_tube, second_traj, second_tube) = match first {
        FirstMover::VehicleA => (&scenario.traj_a, &scenario.tube_a, &scenario.traj_b, &scenario.tube_b),
        FirstMover::VehicleB => (&scenario.traj_b, &scenario.tube_b, &scenario.traj_a, &scenario.tube_a),
    };
    // Sides are stated for A minus B; flip them when B moves first so that
    // each stage still sees "own minus other" consistently.
    let (prty_first, prty_second) = match first {
        FirstMover::VehicleA => (Priority::Low, Priority::High),
        FirstMover::VehicleB => (Priority::High, Priority::Low),
    };
    let start = Instant::now();
    let out1 = ca_mpc(
        &CampcInput {
            own_traj: first_traj,
            avoid_traj: second_traj,
            tube: first_tube,
            decisions,
            priority: prty_first,
            delta: scenario.delta,
        },
        model,
    )?;
    let t1 = start.elapsed().as_secs_f64();
    let assemble = |first_new: Trajectory, second_new: Trajectory| match first {
        FirstMover::VehicleA => (first_new, second_new),
        FirstMover::VehicleB => (second_new, first_new),
    };
    if out1.zero_slack() {
        let (a, b) = assemble(out1.new_traj, second_traj.clone());
        return Ok(L2fOutcome {
            status: L2fStatus::DoneUas1,
            traj_a: a,
            traj_b: b,
            slack1: out1.total_slack,
            slack2: 0.0,
            stage2_slacks: None,
            t1,
            t2: 0.0,
            event_time: t1,
        });
    }
    let start2 = Instant::now();
    let out2 = ca_mpc(
        &CampcInput {
            own_traj: second_traj,
            avoid_traj: &out1.new_traj,
            tube: second_tube,
            decisions,
            priority: prty_second,
            delta: scenario.delta,
        },
        model,
    )?;
    let t2 = start2.elapsed().as_secs_f64();
    let slack2 = out2.total_slack;
    let zero2 = out2.zero_slack();
    let (a, b) = assemble(out1.new_traj, out2.new_traj);
    let status = if zero2 {
        L2fStatus::DoneUas2
    } else if separation_profile(&a, &b)
        .expect("equal lengths")
        .iter()
        .all(|&d| d >= scenario.delta)
    {
        L2fStatus::DoneBothRecheck
    } else {
        L2fStatus::Fail
    };
    Ok(L2fOutcome {
        status,
        traj_a: a,
        traj_b: b,
        slack1: out1.total_slack,
        slack2,
        stage2_slacks: Some(out2.slacks),
        t1,
        t2,
        event_time: t1 + t2,
    })
}

/// One line of the per-event CSV log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogRow {
    pub seed: u64,
    pub status: String,
    pub slack1: f64,
    pub slack2: f64,
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub min_sep_before: f64,
    pub min_sep_after: f64,
}

impl EventLogRow {
    pub fn new(scenario: &ConflictScenario, outcome: &L2fOutcome) -> Self {
        let min = |a: &Trajectory, b: &Trajectory| {
            separation_profile(a, b).expect("equal lengths").into_iter().fold(f64::INFINITY, f64::min)
        };
        Self {
            seed: scenario.seed,
            status: outcome.status.name().to_string(),
            slack1: outcome.slack1,
            slack2: outcome.slack2,
            t1_ms: outcome.t1 * 1e3,
            t2_ms: outcome.t2 * 1e3,
            min_sep_before: min(&scenario.traj_a, &scenario.traj_b),
            min_sep_after: min(&outcome.traj_a, &outcome.traj_b),
        }
    }
}

pub fn write_event_log(path: &Path, rows: &[EventLogRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
