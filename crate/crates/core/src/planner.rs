//! Single-vehicle waypoint planning: maximize smooth robustness of the
//! minimum-jerk trajectory through a few free waypoints.
//!
//! The waypoint-to-trajectory map is affine in the free coordinates (the
//! first waypoint is pinned to the initial state), so the gradient with
//! respect to waypoints is the position gradient pushed through a Jacobian
//! computed once per problem from unit responses.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dynamics::{LinearModel, VehicleState};
use crate::stl::{robustness, smooth_robustness_gradient, Polarity, Predicate, StlError, StlFormula};
use crate::trajectory::{kinematic_feasible, waypoints_to_trajectory, Trajectory, TrajectoryError, Waypoint};

pub const DEFAULT_TEMPERATURE: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no restart reached positive robustness (best {best})")]
    NoFeasiblePlan { best: f64 },
    #[error("horizon {horizon} s is shorter than the formula needs ({need} s)")]
    HorizonTooShort { horizon: f64, need: f64 },
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub formula: StlFormula,
    pub initial_state: VehicleState,
    pub waypoint_count: usize,
    pub horizon: f64,
    pub model: LinearModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSettings {
    pub restarts: usize,
    pub iterations: usize,
    pub temperature: f64,
    /// Standard deviation of the initial waypoint jitter, meters.
    pub jitter: f64,
    pub initial_step: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self { restarts: 8, iterations: 50, temperature: DEFAULT_TEMPERATURE, jitter: 0.3, initial_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub waypoints: Vec<Waypoint>,
    pub trajectory: Trajectory,
    /// Exact robustness of `trajectory`.
    pub robustness: f64,
    pub iterations: usize,
    /// Smooth robustness after each accepted step of the winning restart.
    pub ascent: Vec<f64>,
}

/// Affine map from free waypoint coordinates to positions.
struct WaypointMap {
    times: Vec<f64>,
    initial: VehicleState,
    dt: f64,
    base: Vec<Vector3<f64>>,
    /// columns[j][k]: change of position k per unit of coordinate j.
    columns: Vec<Vec<Vector3<f64>>>,
}

impl WaypointMap {
    fn new(problem: &PlanningProblem) -> Result<Self, PlanError> {
        let m = problem.waypoint_count;
        let times: Vec<f64> = (0..m).map(|j| problem.horizon * j as f64 / (m - 1) as f64).collect();
        let mut map = Self {
            times,
            initial: problem.initial_state,
            dt: problem.model.dt,
            base: vec![],
            columns: vec![],
        };
        let nfree = map.free_len();
        map.base = map.trajectory(&vec![0.0; nfree])?.positions();
        let mut columns = Vec::with_capacity(nfree);
        for j in 0..nfree {
            let mut x = vec![0.0; nfree];
            x[j] = 1.0;
            let t = map.trajectory(&x)?.positions();
            columns.push(t.iter().zip(&map.base).map(|(p, b)| p - b).collect());
        }
        map.columns = columns;
        Ok(map)
    }

    fn free_len(&self) -> usize {
        6 * (self.times.len() - 1)
    }

    fn waypoints(&self, x: &[f64]) -> Vec<Waypoint> {
        let mut w = vec![Waypoint::new(self.initial.position, self.initial.velocity, 0.0)];
        for (j, chunk) in x.chunks(6).enumerate() {
            w.push(Waypoint::new(
                Vector3::new(chunk[0], chunk[1], chunk[2]),
                Vector3::new(chunk[3], chunk[4], chunk[5]),
                self.times[j + 1],
            ));
        }
        w
    }

    fn trajectory(&self, x: &[f64]) -> Result<Trajectory, PlanError> {
        Ok(waypoints_to_trajectory(&self.waypoints(x), self.dt)?)
    }

    /// Pull a position gradient back to the free coordinates.
    fn pull_back(&self, grad: &[Vector3<f64>]) -> Vec<f64> {
        self.columns.iter().map(|col| col.iter().zip(grad).map(|(c, g)| c.dot(g)).sum()).collect()
    }
}

/// Center of the first goal region the formula mentions, if any.
pub fn goal_center(f: &StlFormula) -> Option<Vector3<f64>> {
    match f {
        StlFormula::Pred(Predicate::InBox { region, .. }) if region.polarity == Polarity::Goal => Some(region.center),
        StlFormula::Pred(_) => None,
        StlFormula::Not(_) => None,
        StlFormula::Always(_, _, g) | StlFormula::Eventually(_, _, g) => goal_center(g),
        StlFormula::And(gs) | StlFormula::Or(gs) => gs.iter().find_map(goal_center),
    }
}

fn project(x: &mut [f64], v_max: f64) {
    for chunk in x.chunks_mut(6) {
        for v in &mut chunk[3..] {
            *v = v.clamp(-v_max, v_max);
        }
    }
}

struct Ascent {
    x: Vec<f64>,
    smooth: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn objective(problem: &PlanningProblem, map: &WaypointMap, x: &[f64], temp: f64) -> Result<Option<(f64, Vec<f64>)>, PlanError> {
    let traj = map.trajectory(x)?;
    if !kinematic_feasible(&traj, &problem.model) {
        return Ok(None);
    }
    let (val, grad) = smooth_robustness_gradient(&problem.formula, &[traj.positions()], traj.dt, temp)?;
    Ok(Some((val, map.pull_back(&grad[0]))))
}

fn ascend(problem: &PlanningProblem, map: &WaypointMap, start: Vec<f64>, settings: &PlannerSettings) -> Result<Option<Ascent>, PlanError> {
    let Some((mut val, mut grad)) = objective(problem, map, &start, settings.temperature)? else {
        return Ok(None);
    };
    let mut x = start;
    let mut step = settings.initial_step;
    let mut history = vec![val];
    let mut iterations = 0;
    for _ in 0..settings.iterations {
        iterations += 1;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let mut accepted = false;
        let mut s = step;
        for _ in 0..30 {
            let mut cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + s * gi / norm).collect();
            project(&mut cand, problem.model.v_max);
            if let Some((cv, cg)) = objective(problem, map, &cand, settings.temperature)? {
                if cv > val {
                    x = cand;
                    val = cv;
                    grad = cg;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(val);
        step = (s * 2.0).min(settings.initial_step * 4.0);
    }
    Ok(Some(Ascent { x, smooth: val, history, iterations }))
}

/// Best-of-restarts projected gradient ascent. Each restart starts on the
/// straight line from the initial position to the goal center with Gaussian
/// jitter; a start that is not kinematically feasible has its jitter halved
/// until it is.
pub fn plan(problem: &PlanningProblem, settings: &PlannerSettings, seed: u64) -> Result<PlanResult, PlanError> {
    if problem.waypoint_count < 2 {
        return Err(PlanError::TooFewWaypoints(problem.waypoint_count));
    }
    let need = problem.formula.horizon(problem.model.dt);
    if problem.horizon + 1e-9 < need {
        return Err(PlanError::HorizonTooShort { horizon: problem.horizon, need });
    }
    let map = WaypointMap::new(problem)?;
    let p0 = problem.initial_state.position;
    let goal = goal_center(&problem.formula).unwrap_or(p0);
    let m = problem.waypoint_count;
    let cruise = (goal - p0) / problem.horizon;
    let mut line = Vec::with_capacity(map.free_len());
    for j in 1..m {
        let p = p0 + (goal - p0) * (j as f64 / (m - 1) as f64);
        let v = if j + 1 == m { Vector3::zeros() } else { cruise };
        line.extend(p.iter().chain(v.iter()).cloned());
    }
    project(&mut line, problem.model.v_max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut best: Option<(f64, Ascent)> = None;
    for _ in 0..settings.restarts.max(1) {
        let noise: Vec<f64> = (0..line.len())
            .map(|i| if i % 6 < 3 { normal.sample(&mut rng) * settings.jitter } else { 0.0 })
            .collect();
        let mut scale = 1.0;
        let mut run = None;
        for _ in 0..6 {
            let start: Vec<f64> = line.iter().zip(&noise).map(|(l, n)| l + scale * n).collect();
            run = ascend(problem, &map, start, settings)?;
            if run.is_some() {
                break;
            }
            scale *= 0.5;
        }
        if run.is_none() {
            run = ascend(problem, &map, line.clone(), settings)?;
        }
        let Some(run) = run else { continue };
        let traj = map.trajectory(&run.x)?;
        let exact = robustness(&problem.formula, &traj)?;
        if best.as_ref().is_none_or(|(b, _)| exact > *b) {
            best = Some((exact, run));
        }
    }
    let Some((exact, run)) = best else {
        return Err(PlanError::NoFeasiblePlan { best: f64::NEG_INFINITY });
    };
    if exact <= 0.0 {
        return Err(PlanError::NoFeasiblePlan { best: exact });
    }
    let _ = run.smooth;
    Ok(PlanResult {
        waypoints: map.waypoints(&run.x),
        trajectory: map.trajectory(&run.x)?,
        robustness: exact,
        iterations: run.iterations,
        ascent: run.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{smooth_robustness, smooth_robustness_signals, BoxRegion};

    fn goal(c: Vector3<f64>, h: f64) -> BoxRegion {
        BoxRegion::new("goal", c, Vector3::repeat(h), Polarity::Goal)
    }

    fn reach_avoid() -> PlanningProblem {
        let wall = BoxRegion::new("wall", Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.1, 0.6, 0.6), Polarity::Unsafe);
        let f = StlFormula::And(vec![
            StlFormula::eventually(0.0, 4.0, StlFormula::in_box(0, goal(Vector3::new(2.0, 0.0, 0.0), 0.3))),
            StlFormula::always(0.0, 4.0, StlFormula::not(StlFormula::in_box(0, wall))),
        ]);
        PlanningProblem {
            formula: f,
            initial_state: VehicleState::at_rest(Vector3::zeros()),
            waypoint_count: 5,
            horizon: 4.0,
            model: LinearModel::default(),
        }
    }

    #[test]
    fn already_at_goal() {
        let g = goal(Vector3::new(0.0, 0.0, 1.0), 0.4);
        let p = PlanningProblem {
            formula: StlFormula::eventually(0.0, 4.0, StlFormula::in_box(0, g)),
            initial_state: VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0)),
            waypoint_count: 5,
            horizon: 4.0,
            model: LinearModel::default(),
        };
        let r = plan(&p, &PlannerSettings::default(), 1).unwrap();
        assert!(r.robustness >= 0.4 - 1e-6);
    }

    #[test]
    fn reach_avoid_around_wall() {
        let p = reach_avoid();
        let r = plan(&p, &PlannerSettings::default(), 3).unwrap();
        assert!(r.robustness > 0.0);
        assert_eq!(robustness(&p.formula, &r.trajectory).unwrap(), r.robustness);
        assert!(kinematic_feasible(&r.trajectory, &p.model));
        let wall = BoxRegion::new("wall", Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.1, 0.6, 0.6), Polarity::Unsafe);
        assert!(r.trajectory.states.iter().all(|s| !wall.contains(&s.position)));
        assert_eq!(waypoints_to_trajectory(&r.waypoints, 0.1).unwrap(), r.trajectory);
        // accepted steps never lower the smooth objective
        assert!(r.ascent.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn unreachable_goal_is_reported() {
        let g = goal(Vector3::new(30.0, 0.0, 0.0), 0.2);
        let p = PlanningProblem {
            formula: StlFormula::eventually(0.0, 4.0, StlFormula::in_box(0, g)),
            initial_state: VehicleState::at_rest(Vector3::zeros()),
            waypoint_count: 5,
            horizon: 4.0,
            model: LinearModel::default(),
        };
        let settings = PlannerSettings { restarts: 2, ..Default::default() };
        assert!(matches!(plan(&p, &settings, 0), Err(PlanError::NoFeasiblePlan { .. })));
    }

    #[test]
    fn short_horizon_and_waypoints_rejected() {
        let mut p = reach_avoid();
        p.horizon = 2.0;
        assert!(matches!(plan(&p, &PlannerSettings::default(), 0), Err(PlanError::HorizonTooShort { .. })));
        let mut p = reach_avoid();
        p.waypoint_count = 1;
        assert_eq!(plan(&p, &PlannerSettings::default(), 0), Err(PlanError::TooFewWaypoints(1)));
    }

    #[test]
    fn waypoint_gradient_matches_finite_differences() {
        let p = reach_avoid();
        let map = WaypointMap::new(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let x: Vec<f64> = (0..map.free_len()).map(|i| 0.4 * (i % 6) as f64 + normal.sample(&mut rng)).collect();
        let traj = map.trajectory(&x).unwrap();
        let (_, g) = smooth_robustness_gradient(&p.formula, &[traj.positions()], 0.1, 25.0).unwrap();
        let grad = map.pull_back(&g[0]);
        let h = 1e-5;
        let f = |x: &[f64]| smooth_robustness_signals(&p.formula, &[map.trajectory(x).unwrap().positions()], 0.1, 25.0).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..x.len() {
            let mut a = x.clone();
            a[i] += h;
            let mut b = x.clone();
            b[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            num += (fd - grad[i]).powi(2);
            den += grad[i].powi(2);
        }
        assert!(num.sqrt() / den.sqrt() <= 1e-4);
        let _ = smooth_robustness(&p.formula, &traj, 25.0).unwrap();
    }

    #[test]
    fn planning_is_deterministic() {
        let p = reach_avoid();
        let s = PlannerSettings { restarts: 2, ..Default::default() };
        assert_eq!(plan(&p, &s, 5).unwrap(), plan(&p, &s, 5).unwrap());
    }
}
