//! Sampled trajectories, minimum-jerk segments and the conflicting-pair generator.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::detect;
use crate::dynamics::{LinearModel, VehicleState, ADMISSIBLE_TOL};
use crate::stl::RobustnessTube;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("segment duration {0} is shorter than one sample period")]
    DegenerateDuration(f64),
    #[error("at least two waypoints are required, got {0}")]
    TooFewWaypoints(usize),
    #[error("no conflicting pair after {0} resamples")]
    RetryExhausted(usize),
}

/// Uniformly sampled state sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<VehicleState>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<VehicleState>, dt: f64) -> Self {
        assert!(!states.is_empty(), "a trajectory holds at least one state");
        Self { states, dt }
    }

    pub fn constant(state: VehicleState, len: usize, dt: f64) -> Self {
        Self::new(vec![state; len], dt)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of steps after the initial state.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn position(&self, k: usize) -> Vector3<f64> {
        self.states[k].position
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.states.iter().map(|s| s.position).collect()
    }

    /// `[p; v]` per state, concatenated.
    pub fn flatten(&self) -> Vec<f64> {
        self.states.iter().flat_map(|s| s.to_vector().iter().copied().collect::<Vec<_>>()).collect()
    }

    pub fn from_flat(values: &[f64], dt: f64) -> Option<Self> {
        if values.is_empty() || values.len() % 6 != 0 {
            return None;
        }
        let states = values
            .chunks_exact(6)
            .map(|c| {
                VehicleState::new(Vector3::new(c[0], c[1], c[2]), Vector3::new(c[3], c[4], c[5]))
            })
            .collect();
        Some(Self::new(states, dt))
    }

    /// Largest per-step inf-norm distance between positions.
    pub fn max_position_gap(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a.position - b.position).amax())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub time: f64,
}

impl Waypoint {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, time: f64) -> Self {
        Self { position, velocity, time }
    }

    pub fn at_rest(position: Vector3<f64>, time: f64) -> Self {
        Self::new(position, Vector3::zeros(), time)
    }
}

/// Quintic per axis with zero boundary accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticSegment {
    /// Coefficients of t^0..t^5 per axis, t measured from the segment start.
    pub coeffs: [[f64; 6]; 3],
    pub duration: f64,
}

impl QuinticSegment {
    pub fn fit(start: &Waypoint, end: &Waypoint) -> Self {
        let t = end.time - start.time;
        let mut coeffs = [[0.0; 6]; 3];
        for (axis, c) in coeffs.iter_mut().enumerate() {
            let p0 = start.position[axis];
            let v0 = start.velocity[axis];
            let d = end.position[axis] - p0;
            let v1 = end.velocity[axis];
            c[0] = p0;
            c[1] = v0;
            c[2] = 0.0;
            c[3] = (20.0 * d - (8.0 * v1 + 12.0 * v0) * t) / (2.0 * t.powi(3));
            c[4] = (-30.0 * d + (14.0 * v1 + 16.0 * v0) * t) / (2.0 * t.powi(4));
            c[5] = (12.0 * d - 6.0 * (v1 + v0) * t) / (2.0 * t.powi(5));
        }
        Self { coeffs, duration: t }
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|a, _| poly(&self.coeffs[a], t, 0))
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|a, _| poly(&self.coeffs[a], t, 1))
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|a, _| poly(&self.coeffs[a], t, 2))
    }

    /// ∫ |jerk|² dt over the segment, summed over axes.
    pub fn jerk_integral(&self) -> f64 {
        jerk_integral_of(&self.coeffs, self.duration)
    }
}

/// ∫_0^T Σ_axes (p'''(t))² dt for quintic coefficient sets.
pub fn jerk_integral_of(coeffs: &[[f64; 6]; 3], t_end: f64) -> f64 {
    coeffs
        .iter()
        .map(|c| {
            // jerk = 6c3 + 24c4 t + 60c5 t²
            let j = [6.0 * c[3], 24.0 * c[4], 60.0 * c[5]];
            let mut sq = [0.0; 5];
            for (i, a) in j.iter().enumerate() {
                for (k, b) in j.iter().enumerate() {
                    sq[i + k] += a * b;
                }
            }
            sq.iter().enumerate().map(|(p, v)| v * t_end.powi(p as i32 + 1) / (p as f64 + 1.0)).sum::<f64>()
        })
        .sum()
}

fn poly(c: &[f64; 6], t: f64, derivative: usize) -> f64 {
    let mut acc = 0.0;
    for p in (derivative..6).rev() {
        let mut f = 1.0;
        for q in 0..derivative {
            f *= (p - q) as f64;
        }
        acc = acc * t + f * c[p];
    }
    acc
}

fn sample_count(duration: f64, dt: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize + 1
}

pub fn min_jerk_segment(start: &Waypoint, end: &Waypoint, dt: f64) -> Result<Trajectory, TrajectoryError> {
    waypoints_to_trajectory(&[*start, *end], dt)
}

/// The linear waypoint-to-trajectory map: concatenated quintic segments
/// sampled every `dt` from the first waypoint's time.
pub fn waypoints_to_trajectory(waypoints: &[Waypoint], dt: f64) -> Result<Trajectory, TrajectoryError> {
    if waypoints.len() < 2 {
        return Err(TrajectoryError::TooFewWaypoints(waypoints.len()));
    }
    let mut segments = Vec::with_capacity(waypoints.len() - 1);
    for w in waypoints.windows(2) {
        let d = w[1].time - w[0].time;
        if d < dt - 1e-12 {
            return Err(TrajectoryError::DegenerateDuration(d));
        }
        segments.push(QuinticSegment::fit(&w[0], &w[1]));
    }
    let t0 = waypoints[0].time;
    let total = waypoints[waypoints.len() - 1].time - t0;
    let n = sample_count(total, dt);
    let mut states = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        while seg + 1 < segments.len() && t >= waypoints[seg + 1].time - 1e-9 {
            seg += 1;
        }
        let local = t - waypoints[seg].time;
        let s = &segments[seg];
        states.push(VehicleState::new(s.position(local), s.velocity(local)));
    }
    Ok(Trajectory::new(states, dt))
}

/// Per-step velocities inside the state set and velocity increments inside
/// the input set.
pub fn kinematic_feasible(traj: &Trajectory, model: &LinearModel) -> bool {
    if !traj.states.iter().all(|s| s.is_finite() && model.state_admissible(s)) {
        return false;
    }
    let limit = model.a_max * traj.dt + ADMISSIBLE_TOL;
    traj.states.windows(2).all(|w| (w[1].velocity - w[0].velocity).amax() <= limit)
}

/// Geometry of the random conflicting-pair generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub horizon: f64,
    pub dt: f64,
    pub delta: f64,
    pub rho: f64,
    pub collision_point: [f64; 3],
    /// Start-cube centers relative to the collision point, per vehicle.
    pub start_offsets: [[f64; 3]; 2],
    /// End-cube centers relative to the collision point, per vehicle.
    pub end_offsets: [[f64; 3]; 2],
    pub cube_half_width: f64,
    /// Half-width of the box the crossing point is drawn from, per axis.
    pub crossing_jitter: [f64; 3],
    /// Half-width of the window the shared crossing time is drawn from,
    /// centered on half the horizon.
    pub crossing_time_jitter: f64,
    /// Reject pairs whose first conflict is further than this many steps
    /// from the middle step.
    pub max_conflict_offset: usize,
    pub max_retries: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            horizon: 4.0,
            dt: 0.1,
            delta: 0.1,
            rho: 0.055,
            collision_point: [0.0, 0.0, 0.0],
            start_offsets: [[-2.0, -0.75, -0.5], [-2.0, 0.75, 0.5]],
            end_offsets: [[2.0, 0.75, 0.5], [2.0, -0.75, -0.5]],
            cube_half_width: 0.5,
            crossing_jitter: [0.05, 0.05, 0.05],
            crossing_time_jitter: 0.3,
            max_conflict_offset: 3,
            max_retries: 100,
        }
    }
}

impl ScenarioConfig {
    pub fn steps(&self) -> usize {
        sample_count(self.horizon, self.dt) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictScenario {
    pub traj_a: Trajectory,
    pub traj_b: Trajectory,
    pub tube_a: RobustnessTube,
    pub tube_b: RobustnessTube,
    pub delta: f64,
    pub seed: u64,
}

impl ConflictScenario {
    pub fn with_rho(&self, rho: f64) -> Self {
        let mut s = self.clone();
        s.tube_a.radius = rho;
        s.tube_b.radius = rho;
        s
    }

    pub fn steps(&self) -> usize {
        self.traj_a.steps()
    }

    /// Position differences vehicle 1 minus vehicle 2.
    pub fn differences(&self) -> Vec<Vector3<f64>> {
        self.traj_a
            .states
            .iter()
            .zip(&self.traj_b.states)
            .map(|(a, b)| a.position - b.position)
            .collect()
    }
}

fn uniform_in_cube(rng: &mut ChaCha8Rng, center: Vector3<f64>, half: [f64; 3]) -> Vector3<f64> {
    Vector3::from_fn(|a, _| {
        if half[a] > 0.0 {
            center[a] + rng.gen_range(-half[a]..=half[a])
        } else {
            center[a]
        }
    })
}

fn vehicle_plan(
    rng: &mut ChaCha8Rng,
    cfg: &ScenarioConfig,
    vehicle: usize,
    crossing_time: f64,
    model: &LinearModel,
) -> Result<Trajectory, TrajectoryError> {
    let c = Vector3::from(cfg.collision_point);
    let h = [cfg.cube_half_width; 3];
    let start = uniform_in_cube(rng, c + Vector3::from(cfg.start_offsets[vehicle]), h);
    let end = uniform_in_cube(rng, c + Vector3::from(cfg.end_offsets[vehicle]), h);
    let cross = uniform_in_cube(rng, c, cfg.crossing_jitter);
    // Midpoint speed of a rest-to-rest minimum-jerk move over the horizon.
    let mid_velocity = (end - start) * (1.875 / cfg.horizon);
    let wps = [
        Waypoint::at_rest(start, 0.0),
        Waypoint::new(cross, mid_velocity, crossing_time),
        Waypoint::at_rest(end, cfg.horizon),
    ];
    let raw = waypoints_to_trajectory(&wps, cfg.dt)?;
    Ok(model.conform(&raw))
}

/// Two minimum-jerk plans crossing near a shared point halfway through the
/// horizon, resampled until they conflict and are kinematically feasible.
pub fn generate_conflict_pair(
    seed: u64,
    cfg: &ScenarioConfig,
    model: &LinearModel,
) -> Result<ConflictScenario, TrajectoryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.max_retries {
        let j = cfg.crossing_time_jitter;
        let tc = cfg.horizon / 2.0 + if j > 0.0 { rng.gen_range(-j..=j) } else { 0.0 };
        let a = vehicle_plan(&mut rng, cfg, 0, tc, model)?;
        let b = vehicle_plan(&mut rng, cfg, 1, tc, model)?;
        if !kinematic_feasible(&a, model) || !kinematic_feasible(&b, model) {
            continue;
        }
        let report = detect(&a, &b, cfg.delta).expect("equal lengths by construction");
        match report.first_conflict_step {
            Some(k) if k.abs_diff(cfg.steps() / 2) <= cfg.max_conflict_offset => {}
            _ => continue,
        }
        return Ok(ConflictScenario {
            tube_a: RobustnessTube::new(a.positions(), cfg.rho),
            tube_b: RobustnessTube::new(b.positions(), cfg.rho),
            traj_a: a,
            traj_b: b,
            delta: cfg.delta,
            seed,
        });
    }
    Err(TrajectoryError::RetryExhausted(cfg.max_retries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest, Strategy};

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn identical_endpoints_give_constant_trajectory() {
        let p = v(1.0, -2.0, 0.5);
        let t = min_jerk_segment(&Waypoint::at_rest(p, 0.0), &Waypoint::at_rest(p, 2.0), 0.1).unwrap();
        assert_eq!(t.len(), 21);
        assert!(t.states.iter().all(|s| s.position == p && s.velocity == Vector3::zeros()));
    }

    #[test]
    fn unit_move_profile() {
        let seg = QuinticSegment::fit(
            &Waypoint::at_rest(Vector3::zeros(), 0.0),
            &Waypoint::at_rest(v(1.0, 0.0, 0.0), 1.0),
        );
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let expected = 10.0 * t.powi(3) - 15.0 * t.powi(4) + 6.0 * t.powi(5);
            assert!((seg.position(t).x - expected).abs() < 1e-12);
        }
        assert!((seg.position(0.5).x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn segment_meets_boundary_conditions() {
        let a = Waypoint::new(v(0.3, -1.0, 2.0), v(0.5, 0.1, -0.2), 1.0);
        let b = Waypoint::new(v(1.2, 0.4, 1.1), v(-0.3, 0.2, 0.7), 2.7);
        let seg = QuinticSegment::fit(&a, &b);
        assert!((seg.position(0.0) - a.position).amax() < 1e-10);
        assert!((seg.velocity(0.0) - a.velocity).amax() < 1e-10);
        assert!((seg.position(1.7) - b.position).amax() < 1e-10);
        assert!((seg.velocity(1.7) - b.velocity).amax() < 1e-10);
        assert!(seg.acceleration(0.0).amax() < 1e-10);
        assert!(seg.acceleration(1.7).amax() < 1e-10);
    }

    #[test]
    fn minimum_jerk_beats_boundary_matching_perturbations() {
        // Polynomials with matching position/velocity/acceleration at both
        // ends differ from the quintic by t³(T-t)³ q(t); a degree-0..2 q spans
        // a family of degree ≤ 8 competitors.
        let a = Waypoint::new(v(0.0, 0.0, 0.0), v(0.2, 0.0, 0.0), 0.0);
        let b = Waypoint::new(v(1.0, -0.5, 0.3), v(0.0, 0.4, 0.0), 2.0);
        let seg = QuinticSegment::fit(&a, &b);
        let base = seg.jerk_integral();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t_end = 2.0;
        for _ in 0..50 {
            let q: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let axis = rng.gen_range(0..3);
            // numeric jerk integral of the perturbed polynomial
            let f = |t: f64| {
                let bump = t.powi(3) * (t_end - t).powi(3) * (q[0] + q[1] * t + q[2] * t * t);
                seg.position(t)[axis] + bump
            };
            let h = 1e-3;
            let m = 4000;
            let mut total = 0.0;
            for i in 0..m {
                let t = (i as f64 + 0.5) * t_end / m as f64;
                let tc = t.clamp(2.0 * h, t_end - 2.0 * h);
                let j = (f(tc + 2.0 * h) - 2.0 * f(tc + h) + 2.0 * f(tc - h) - f(tc - 2.0 * h)) / (2.0 * h.powi(3));
                total += j * j * t_end / m as f64;
            }
            let others: f64 = (0..3)
                .filter(|&o| o != axis)
                .map(|o| {
                    let mut c = [[0.0; 6]; 3];
                    c[0] = seg.coeffs[o];
                    jerk_integral_of(&c, t_end)
                })
                .sum();
            assert!(total + others >= base - 1e-6 * base.max(1.0), "{} < {}", total + others, base);
        }
    }

    #[test]
    fn three_waypoints_over_four_seconds() {
        let w = [
            Waypoint::at_rest(v(0.0, 0.0, 0.0), 0.0),
            Waypoint::new(v(1.0, 1.0, 0.0), v(0.5, 0.5, 0.0), 2.0),
            Waypoint::at_rest(v(2.0, 0.0, 1.0), 4.0),
        ];
        let t = waypoints_to_trajectory(&w, 0.1).unwrap();
        assert_eq!(t.len(), 41);
        assert!((t.position(20) - w[1].position).amax() < 1e-10);
        assert!((t.position(40) - w[2].position).amax() < 1e-10);
    }

    #[test]
    fn zero_waypoints_give_zero_trajectory() {
        let w = [Waypoint::at_rest(Vector3::zeros(), 0.0), Waypoint::at_rest(Vector3::zeros(), 1.0)];
        let t = waypoints_to_trajectory(&w, 0.1).unwrap();
        assert!(t.flatten().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn short_segments_are_rejected() {
        let w = [Waypoint::at_rest(Vector3::zeros(), 0.0), Waypoint::at_rest(Vector3::zeros(), 0.05)];
        assert!(matches!(waypoints_to_trajectory(&w, 0.1), Err(TrajectoryError::DegenerateDuration(_))));
        assert!(matches!(waypoints_to_trajectory(&w[..1], 0.1), Err(TrajectoryError::TooFewWaypoints(1))));
    }

    #[test]
    fn feasibility_checks() {
        let m = LinearModel::default();
        let still = Trajectory::constant(VehicleState::zero(), 10, 0.1);
        assert!(kinematic_feasible(&still, &m));
        // 1 m in 0.3 s: peak acceleration 10/(0.09·√3) ≈ 64 m/s².
        let seg = QuinticSegment::fit(
            &Waypoint::at_rest(Vector3::zeros(), 0.0),
            &Waypoint::at_rest(v(1.0, 0.0, 0.0), 0.3),
        );
        let peak = (0..=3000).map(|i| seg.acceleration(i as f64 * 1e-4).x.abs()).fold(0.0, f64::max);
        assert!((peak - 10.0 / (0.09 * 3f64.sqrt())).abs() < 0.05);
        assert!(peak > m.a_max);
        let fast = min_jerk_segment(
            &Waypoint::at_rest(Vector3::zeros(), 0.0),
            &Waypoint::at_rest(v(1.0, 0.0, 0.0), 0.3),
            0.1,
        )
        .unwrap();
        assert!(!kinematic_feasible(&fast, &m));
        let controls: Vec<Vector3<f64>> = (0..30).map(|k| v((k as f64 * 0.3).sin() * 4.0, 1.0, -2.0)).collect();
        let rolled = m.rollout(&VehicleState::zero(), &controls[..10]).unwrap();
        assert!(kinematic_feasible(&rolled, &m));
    }

    #[test]
    fn mirrored_endpoints_conflict_at_the_midpoint() {
        let mut cfg = ScenarioConfig {
            cube_half_width: 0.0,
            crossing_jitter: [0.0; 3],
            crossing_time_jitter: 0.0,
            ..ScenarioConfig::default()
        };
        cfg.start_offsets = [[-2.0, 0.0, 0.0], [2.0, 0.0, 0.3]];
        cfg.end_offsets = [[2.0, 0.0, 0.0], [-2.0, 0.0, -0.3]];
        let m = LinearModel::default();
        let s = generate_conflict_pair(3, &cfg, &m).unwrap();
        let report = detect(&s.traj_a, &s.traj_b, cfg.delta).unwrap();
        assert!(report.conflicting_steps.contains(&20));
        assert!(report.min_separation < 1e-3);
    }

    #[test]
    fn generator_is_deterministic_and_conflicting() {
        let cfg = ScenarioConfig::default();
        let m = LinearModel::default();
        let a = generate_conflict_pair(42, &cfg, &m).unwrap();
        let b = generate_conflict_pair(42, &cfg, &m).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.traj_a.len(), 41);
        assert!(a.traj_a.states[0].velocity == Vector3::zeros());
        assert!(!detect(&a.traj_a, &a.traj_b, cfg.delta).unwrap().conflicting_steps.is_empty());
        assert_eq!(a.tube_a.radius, cfg.rho);
    }

    #[test]
    fn conflicts_cluster_around_the_middle_and_cover_it() {
        let cfg = ScenarioConfig::default();
        let m = LinearModel::default();
        let mid = cfg.steps() / 2;
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..1000 {
            let s = generate_conflict_pair(seed, &cfg, &m).unwrap();
            let r = detect(&s.traj_a, &s.traj_b, cfg.delta).unwrap();
            assert!(r.first_conflict_step.unwrap().abs_diff(mid) <= 3, "seed {seed}");
            seen.extend(r.conflicting_steps.iter().copied());
        }
        assert!((mid - 3..=mid + 3).all(|k| seen.contains(&k)), "{seen:?}");
    }

    #[test]
    fn unreachable_conflict_exhausts_retries() {
        // Nothing is ever closer than zero.
        let cfg = ScenarioConfig { delta: 0.0, max_retries: 5, ..ScenarioConfig::default() };
        let m = LinearModel::default();
        assert!(matches!(generate_conflict_pair(1, &cfg, &m), Err(TrajectoryError::RetryExhausted(5))));
    }

    #[test]
    fn flatten_roundtrip() {
        let w = [
            Waypoint::at_rest(v(0.0, 1.0, 0.0), 0.0),
            Waypoint::at_rest(v(1.0, 0.0, 2.0), 1.0),
        ];
        let t = waypoints_to_trajectory(&w, 0.1).unwrap();
        assert_eq!(Trajectory::from_flat(&t.flatten(), 0.1).unwrap(), t);
        assert!(Trajectory::from_flat(&[1.0; 5], 0.1).is_none());
    }

    fn arb_waypoints() -> impl Strategy<Value = Vec<Waypoint>> {
        prop::collection::vec(
            ((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)),
            2..5,
        )
        .prop_map(|raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (p, vel))| Waypoint::new(v(p.0, p.1, p.2), v(vel.0, vel.1, vel.2), i as f64))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn map_is_linear(w in arb_waypoints(), w2 in arb_waypoints(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let n = w.len().min(w2.len());
            let (w, w2) = (&w[..n], &w2[..n]);
            let combo: Vec<Waypoint> = w.iter().zip(w2).map(|(a, b)| Waypoint::new(
                a.position * alpha + b.position * beta,
                a.velocity * alpha + b.velocity * beta,
                a.time,
            )).collect();
            let l = waypoints_to_trajectory(&combo, 0.1).unwrap().flatten();
            let la = waypoints_to_trajectory(w, 0.1).unwrap().flatten();
            let lb = waypoints_to_trajectory(w2, 0.1).unwrap().flatten();
            for i in 0..l.len() {
                prop_assert!((l[i] - (alpha * la[i] + beta * lb[i])).abs() < 1e-12);
            }
            let doubled: Vec<Waypoint> = w.iter().map(|a| Waypoint::new(a.position * 2.0, a.velocity * 2.0, a.time)).collect();
            let l2 = waypoints_to_trajectory(&doubled, 0.1).unwrap().flatten();
            for i in 0..l2.len() {
                prop_assert!((l2[i] - 2.0 * la[i]).abs() < 1e-12);
            }
        }
    }
}
