//! Centralized two-vehicle deconfliction by branch-and-bound over per-step
//! separation sides.
//!
//! A node fixes a side for some steps; its relaxation drops the disjunction at
//! every other step, which leaves a linear program. The objective is the L1
//! position deviation of both vehicles from their plans plus a small L1
//! penalty on control changes. With the model axis-decoupled, each node
//! program splits into three axis programs that are cached by the set of
//! decided (step, sign) pairs on that axis, so a child only re-solves the axis
//! it branched on.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campc::{AxisResponse, SIDE_MARGIN, TUBE_MARGIN};
use crate::conflict::{best_side, side_axis, side_sign, DecisionSequence};
use crate::dynamics::{ControlInput, LinearModel};
use crate::lp::{solve_lp, LpError, LpProblem, LpStatus, INF};
use crate::trajectory::{ConflictScenario, Trajectory};

/// Weight of the control-change term in the objective.
pub const CONTROL_WEIGHT: f64 = 0.01;
const VELOCITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MilpBudget {
    pub max_nodes: usize,
    pub max_seconds: f64,
}

impl Default for MilpBudget {
    fn default() -> Self {
        Self { max_nodes: 20_000, max_seconds: 60.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Feasible,
    Infeasible,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub decisions: Option<DecisionSequence>,
    pub traj_a: Option<Trajectory>,
    pub traj_b: Option<Trajectory>,
    pub objective: Option<f64>,
    /// False when the budget ran out after an incumbent was found.
    pub optimality_proven: bool,
    pub nodes_explored: usize,
    pub wall_time: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("the result carries no feasible solution")]
    NotFeasible,
    #[error("the vehicle model couples axes")]
    CoupledModel,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Outcome of one axis program.
#[derive(Debug, Clone)]
struct AxisResult {
    feasible: bool,
    objective: f64,
    du_a: Vec<f64>,
    du_b: Vec<f64>,
    /// Position deviations per step, including step 0.
    dev_a: Vec<f64>,
    dev_b: Vec<f64>,
}

struct Problem<'a> {
    scenario: &'a ConflictScenario,
    model: &'a LinearModel,
    response: AxisResponse,
    controls_a: Vec<ControlInput>,
    controls_b: Vec<ControlInput>,
    base_a: Trajectory,
    base_b: Trajectory,
    cache: HashMap<(usize, Vec<(usize, i8)>), AxisResult>,
}

impl<'a> Problem<'a> {
    fn new(scenario: &'a ConflictScenario, model: &'a LinearModel) -> Self {
        let controls_a = model.recover_controls(&scenario.traj_a);
        let controls_b = model.recover_controls(&scenario.traj_b);
        let base_a = model.rollout_unchecked(&scenario.traj_a.states[0], &controls_a);
        let base_b = model.rollout_unchecked(&scenario.traj_b.states[0], &controls_b);
        Self {
            scenario,
            model,
            response: AxisResponse::new(model, scenario.steps()),
            controls_a,
            controls_b,
            base_a,
            base_b,
            cache: HashMap::new(),
        }
    }

    fn axis(&mut self, axis: usize, decided: &[(usize, i8)]) -> Result<AxisResult, LpError> {
        let key = (axis, decided.to_vec());
        if let Some(r) = self.cache.get(&key) {
            return Ok(r.clone());
        }
        let r = self.solve_axis(axis, decided)?;
        self.cache.insert(key, r.clone());
        Ok(r)
    }

    fn solve_axis(&self, axis: usize, decided: &[(usize, i8)]) -> Result<AxisResult, LpError> {
        let len = self.base_a.len();
        let n = len - 1;
        let sc = self.scenario;
        let pa: Vec<f64> = self.base_a.states.iter().map(|s| s.position[axis]).collect();
        let pb: Vec<f64> = self.base_b.states.iter().map(|s| s.position[axis]).collect();
        let ca: Vec<f64> = sc.tube_a.centerline.iter().map(|c| c[axis]).collect();
        let cb: Vec<f64> = sc.tube_b.centerline.iter().map(|c| c[axis]).collect();
        let ra = (sc.tube_a.radius - TUBE_MARGIN).max(0.0);
        let rb = (sc.tube_b.radius - TUBE_MARGIN).max(0.0);
        let inside = |p: &[f64], c: &[f64], r: f64| (1..len).all(|k| (p[k] - c[k]).abs() <= r);
        let zero_ok = inside(&pa, &ca, ra)
            && inside(&pb, &cb, rb)
            && decided.iter().all(|&(k, s)| f64::from(s) * (pa[k] - pb[k]) >= sc.delta + SIDE_MARGIN);
        if zero_ok {
            return Ok(AxisResult {
                feasible: true,
                objective: 0.0,
                du_a: vec![0.0; n],
                du_b: vec![0.0; n],
                dev_a: vec![0.0; len],
                dev_b: vec![0.0; len],
            });
        }
        if ra < 0.0 || rb < 0.0 {
            return Ok(infeasible_axis());
        }
        let on_a = pa.iter().zip(&ca).all(|(p, c)| (p - c).abs() <= 1e-12);
        let on_b = pb.iter().zip(&cb).all(|(p, c)| (p - c).abs() <= 1e-12);

        // Columns: du_a+, du_a-, du_b+, du_b-, t_a, t_b (each n long).
        let up_a = 0;
        let dn_a = n;
        let up_b = 2 * n;
        let dn_b = 3 * n;
        let ta = 4 * n;
        let tb = 5 * n;
        let nv = 6 * n;
        let mut cost = vec![CONTROL_WEIGHT; nv];
        for c in cost.iter_mut().skip(ta) {
            *c = 1.0;
        }
        let mut lp = LpProblem::new(cost);
        let a_max = self.model.a_max;
        for i in 0..n {
            let ua = self.controls_a[i][axis];
            let ub = self.controls_b[i][axis];
            lp.set_bounds(up_a + i, 0.0, (a_max - ua).max(0.0));
            lp.set_bounds(dn_a + i, 0.0, (a_max + ua).max(0.0));
            lp.set_bounds(up_b + i, 0.0, (a_max - ub).max(0.0));
            lp.set_bounds(dn_b + i, 0.0, (a_max + ub).max(0.0));
            lp.set_bounds(ta + i, 0.0, if on_a { ra } else { INF });
            lp.set_bounds(tb + i, 0.0, if on_b { rb } else { INF });
        }
        let resp = &self.response;
        // Row with ±deviation of one vehicle at step k.
        let dev_row = |row: &mut [f64], up: usize, dn: usize, k: usize, scale: f64| {
            for i in 0..k {
                let c = scale * resp.pos_coeff(k, i);
                row[up + i] += c;
                row[dn + i] -= c;
            }
        };
        let mut row = vec![0.0; nv];
        for k in 1..len {
            for (up, dn, t) in [(up_a, dn_a, ta), (up_b, dn_b, tb)] {
                for sgn in [1.0, -1.0] {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    dev_row(&mut row, up, dn, k, sgn);
                    row[t + k - 1] = -1.0;
                    lp.add_le(&row, 0.0);
                }
            }
        }
        for (up, dn, p, c, r, on) in [(up_a, dn_a, &pa, &ca, ra, on_a), (up_b, dn_b, &pb, &cb, rb, on_b)] {
            if on {
                continue;
            }
            for k in 1..len {
                row.iter_mut().for_each(|v| *v = 0.0);
                dev_row(&mut row, up, dn, k, 1.0);
                lp.add_le(&row, c[k] + r - p[k]);
                row.iter_mut().for_each(|v| *v = 0.0);
                dev_row(&mut row, up, dn, k, -1.0);
                lp.add_le(&row, r - c[k] + p[k]);
            }
        }
        // s·(z_k + e_a,k − e_b,k) ≥ δ + margin
        for &(k, s) in decided {
            let s = f64::from(s);
            if k == 0 {
                if s * (pa[0] - pb[0]) < sc.delta + SIDE_MARGIN {
                    return Ok(infeasible_axis());
                }
                continue;
            }
            row.iter_mut().for_each(|v| *v = 0.0);
            dev_row(&mut row, up_a, dn_a, k, -s);
            dev_row(&mut row, up_b, dn_b, k, s);
            lp.add_le(&row, s * (pa[k] - pb[k]) - sc.delta - SIDE_MARGIN);
        }

        let va: Vec<f64> = self.base_a.states.iter().map(|s| s.velocity[axis]).collect();
        let vb: Vec<f64> = self.base_b.states.iter().map(|s| s.velocity[axis]).collect();
        let v_max = self.model.v_max;
        let mut vel_rows = vec![[false; 4]; len];
        loop {
            let sol = solve_lp(&lp)?;
            if sol.status != LpStatus::Optimal {
                return Ok(infeasible_axis());
            }
            let x = sol.primal.expect("optimal point");
            let du_a: Vec<f64> = (0..n).map(|i| x[up_a + i] - x[dn_a + i]).collect();
            let du_b: Vec<f64> = (0..n).map(|i| x[up_b + i] - x[dn_b + i]).collect();
            let mut added = false;
            for k in 1..len {
                for (slot, (du, base, up, dn)) in
                    [(&du_a, &va, up_a, dn_a), (&du_b, &vb, up_b, dn_b)].into_iter().enumerate()
                {
                    let v = base[k] + resp.velocity_change(du, k);
                    for (side, over) in [(0, v - v_max), (1, -v_max - v)] {
                        let key = 2 * slot + side;
                        if over > VELOCITY_TOL && !vel_rows[k][key] {
                            vel_rows[k][key] = true;
                            added = true;
                            let sgn = if side == 0 { 1.0 } else { -1.0 };
                            let mut r = vec![0.0; nv];
                            for i in 0..k {
                                let c = sgn * resp.vel_coeff(k, i);
                                r[up + i] += c;
                                r[dn + i] -= c;
                            }
                            lp.add_le(&r, v_max - sgn * base[k]);
                        }
                    }
                }
            }
            if !added {
                let dev = |du: &[f64]| -> Vec<f64> {
                    (0..len).map(|k| (0..k).map(|i| resp.pos_coeff(k, i) * du[i]).sum()).collect()
                };
                return Ok(AxisResult {
                    feasible: true,
                    objective: sol.objective_value.expect("optimal value"),
                    dev_a: dev(&du_a),
                    dev_b: dev(&du_b),
                    du_a,
                    du_b,
                });
            }
        }
    }
}

fn infeasible_axis() -> AxisResult {
    AxisResult {
        feasible: false,
        objective: f64::INFINITY,
        du_a: vec![],
        du_b: vec![],
        dev_a: vec![],
        dev_b: vec![],
    }
}

#[derive(Clone)]
struct Node {
    /// Decided (step, sign) pairs per axis, kept sorted.
    decided: [Vec<(usize, i8)>; 3],
}

struct Incumbent {
    objective: f64,
    axes: [AxisResult; 3],
}

/// Solve the centralized program within `budget`.
pub fn solve_milp(scenario: &ConflictScenario, model: &LinearModel, budget: &MilpBudget) -> Result<MilpResult, MilpError> {
    if !model.is_axis_decoupled() {
        return Err(MilpError::CoupledModel);
    }
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(budget.max_seconds.max(0.0));
    let mut problem = Problem::new(scenario, model);
    let len = scenario.traj_a.len();
    let z: Vec<Vector3<f64>> = problem
        .base_a
        .states
        .iter()
        .zip(&problem.base_b.states)
        .map(|(a, b)| a.position - b.position)
        .collect();
    let need = scenario.delta + SIDE_MARGIN - 1e-10;

    let mut incumbent: Option<Incumbent> = None;
    let mut stack = vec![Node { decided: [vec![], vec![], vec![]] }];
    let mut nodes = 0usize;
    let mut exhausted = false;
    while let Some(node) = stack.pop() {
        if nodes >= budget.max_nodes || start.elapsed() >= deadline {
            exhausted = true;
            break;
        }
        nodes += 1;
        let mut axes = Vec::with_capacity(3);
        let mut bound = 0.0;
        let mut feasible = true;
        for axis in 0..3 {
            let r = problem.axis(axis, &node.decided[axis])?;
            if !r.feasible {
                feasible = false;
                break;
            }
            bound += r.objective;
            axes.push(r);
        }
        if !feasible {
            continue;
        }
        if let Some(inc) = &incumbent {
            if bound >= inc.objective - 1e-9 {
                continue;
            }
        }
        let decided_step = |k: usize| node.decided.iter().any(|d| d.iter().any(|&(s, _)| s == k));
        let zp: Vec<Vector3<f64>> = (0..len)
            .map(|k| z[k] + Vector3::from_fn(|a, _| axes[a].dev_a[k] - axes[a].dev_b[k]))
            .collect();
        // Most violated undecided step, lowest index on ties.
        let mut branch: Option<(usize, f64)> = None;
        for (k, zk) in zp.iter().enumerate() {
            if decided_step(k) {
                continue;
            }
            let sep = zk.amax();
            if sep < need && branch.is_none_or(|(_, b)| sep < b) {
                branch = Some((k, sep));
            }
        }
        match branch {
            None => {
                let axes: [AxisResult; 3] = axes.try_into().ok().expect("three axes");
                incumbent = Some(Incumbent { objective: bound, axes });
            }
            Some((k, _)) => {
                let mut order: Vec<u8> = (1..=6).collect();
                let score = |d: u8| side_sign(d) * zp[k][side_axis(d)];
                order.sort_by(|&a, &b| score(b).partial_cmp(&score(a)).unwrap().then(a.cmp(&b)));
                for &d in order.iter().rev() {
                    let mut child = node.clone();
                    let axis = side_axis(d);
                    child.decided[axis].push((k, side_sign(d) as i8));
                    child.decided[axis].sort_unstable();
                    stack.push(child);
                }
            }
        }
    }
    let wall_time = start.elapsed().as_secs_f64();
    let Some(inc) = incumbent else {
        return Ok(MilpResult {
            status: if exhausted { MilpStatus::BudgetExhausted } else { MilpStatus::Infeasible },
            decisions: None,
            traj_a: None,
            traj_b: None,
            objective: None,
            optimality_proven: false,
            nodes_explored: nodes,
            wall_time,
        });
    };
    let n = len - 1;
    let build = |controls: &[ControlInput], pick: &dyn Fn(&AxisResult) -> &Vec<f64>, x0| {
        let new_controls: Vec<ControlInput> = (0..n)
            .map(|i| controls[i] + Vector3::from_fn(|a, _| pick(&inc.axes[a])[i]))
            .collect();
        model.rollout_unchecked(x0, &new_controls)
    };
    let unchanged = |axes: &[AxisResult; 3], a_side: bool| {
        axes.iter().all(|r| if a_side { r.du_a.iter().all(|&v| v == 0.0) } else { r.du_b.iter().all(|&v| v == 0.0) })
    };
    let traj_a = if unchanged(&inc.axes, true) {
        scenario.traj_a.clone()
    } else {
        build(&problem.controls_a, &|r| &r.du_a, &scenario.traj_a.states[0])
    };
    let traj_b = if unchanged(&inc.axes, false) {
        scenario.traj_b.clone()
    } else {
        build(&problem.controls_b, &|r| &r.du_b, &scenario.traj_b.states[0])
    };
    let decisions = labels_for(&traj_a, &traj_b, scenario.delta);
    Ok(MilpResult {
        status: MilpStatus::Feasible,
        decisions: Some(decisions),
        traj_a: Some(traj_a),
        traj_b: Some(traj_b),
        objective: Some(inc.objective),
        optimality_proven: !exhausted,
        nodes_explored: nodes,
        wall_time,
    })
}

/// Per-step side with the largest residual on a solution pair.
pub fn labels_for(traj_a: &Trajectory, traj_b: &Trajectory, delta: f64) -> DecisionSequence {
    DecisionSequence(
        traj_a
            .states
            .iter()
            .zip(&traj_b.states)
            .map(|(a, b)| best_side(&(a.position - b.position), delta))
            .collect(),
    )
}

/// Labels of a feasible result: per step, the side with the largest residual
/// on the solution pair, lowest index on ties.
pub fn extract_labels(result: &MilpResult) -> Result<DecisionSequence, MilpError> {
    match (result.status, &result.decisions) {
        (MilpStatus::Feasible, Some(d)) => Ok(d.clone()),
        _ => Err(MilpError::NotFeasible),
    }
}
