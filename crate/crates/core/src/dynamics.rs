//! Discrete-time double-integrator vehicle model.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory;

/// Slack allowed when testing the admissible sets.
pub const ADMISSIBLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl VehicleState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self { position, velocity: Vector3::zeros() }
    }

    pub fn zero() -> Self {
        Self::at_rest(Vector3::zeros())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let p = self.position;
        let v = self.velocity;
        Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z)
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            position: Vector3::new(x[0], x[1], x[2]),
            velocity: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite())
    }
}

/// Per-axis acceleration command.
pub type ControlInput = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state {step} leaves the admissible set (speed {speed:.4} > {limit})")]
    AdmissibilityViolation { step: usize, speed: f64, limit: f64 },
    #[error("control {step} leaves the admissible set (magnitude {magnitude:.4} > {limit})")]
    ControlViolation { step: usize, magnitude: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub dt: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { dt: 0.1, v_max: 3.0, a_max: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix6<f64>,
    pub b: Matrix6x3<f64>,
    pub c: Matrix3x6<f64>,
    pub dt: f64,
    pub v_max: f64,
    pub a_max: f64,
    b_pinv: nalgebra::Matrix3x6<f64>,
}

impl Default for LinearModel {
    fn default() -> Self {
        Self::from_params(&ModelParams::default())
    }
}

impl LinearModel {
    /// Per-axis double integrator: p' = p + dt v + dt²/2 u, v' = v + dt u.
    pub fn double_integrator(dt: f64, v_max: f64, a_max: f64) -> Self {
        let mut a = Matrix6::identity();
        let mut b = Matrix6x3::zeros();
        let mut c = Matrix3x6::zeros();
        for axis in 0..3 {
            a[(axis, axis + 3)] = dt;
            b[(axis, axis)] = 0.5 * dt * dt;
            b[(axis + 3, axis)] = dt;
            c[(axis, axis)] = 1.0;
        }
        Self::from_matrices(a, b, c, dt, v_max, a_max)
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self::double_integrator(p.dt, p.v_max, p.a_max)
    }

    pub fn from_matrices(
        a: Matrix6<f64>,
        b: Matrix6x3<f64>,
        c: Matrix3x6<f64>,
        dt: f64,
        v_max: f64,
        a_max: f64,
    ) -> Self {
        let btb: Matrix3<f64> = b.transpose() * b;
        let b_pinv = btb
            .try_inverse()
            .map(|inv| inv * b.transpose())
            .unwrap_or_else(Matrix3x6::zeros);
        Self { a, b, c, dt, v_max, a_max, b_pinv }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { dt: self.dt, v_max: self.v_max, a_max: self.a_max }
    }

    pub fn step(&self, x: &VehicleState, u: &ControlInput) -> VehicleState {
        VehicleState::from_vector(&(self.a * x.to_vector() + self.b * u))
    }

    pub fn observe(&self, x: &VehicleState) -> Vector3<f64> {
        self.c * x.to_vector()
    }

    pub fn state_admissible(&self, x: &VehicleState) -> bool {
        x.velocity.amax() <= self.v_max + ADMISSIBLE_TOL
    }

    pub fn control_admissible(&self, u: &ControlInput) -> bool {
        u.amax() <= self.a_max + ADMISSIBLE_TOL
    }

    /// Roll the model forward and reject any state that leaves the admissible set.
    pub fn rollout(&self, x0: &VehicleState, controls: &[ControlInput]) -> Result<Trajectory, DynamicsError> {
        let traj = self.rollout_unchecked(x0, controls);
        for (k, s) in traj.states.iter().enumerate() {
            if !self.state_admissible(s) {
                return Err(DynamicsError::AdmissibilityViolation {
                    step: k,
                    speed: s.velocity.amax(),
                    limit: self.v_max,
                });
            }
        }
        Ok(traj)
    }

    pub fn rollout_unchecked(&self, x0: &VehicleState, controls: &[ControlInput]) -> Trajectory {
        let mut states = Vec::with_capacity(controls.len() + 1);
        let mut x = *x0;
        states.push(x);
        for u in controls {
            x = self.step(&x, u);
            states.push(x);
        }
        Trajectory::new(states, self.dt)
    }

    /// Least-squares controls that reproduce each transition of `traj`.
    pub fn recover_controls(&self, traj: &Trajectory) -> Vec<ControlInput> {
        traj.states
            .windows(2)
            .map(|w| {
                let residual = w[1].to_vector() - self.a * w[0].to_vector();
                self.b_pinv * residual
            })
            .collect()
    }

    /// First control whose magnitude leaves the admissible set.
    pub fn check_controls(&self, controls: &[ControlInput]) -> Result<(), DynamicsError> {
        for (k, u) in controls.iter().enumerate() {
            if !self.control_admissible(u) {
                return Err(DynamicsError::ControlViolation {
                    step: k,
                    magnitude: u.amax(),
                    limit: self.a_max,
                });
            }
        }
        Ok(())
    }

    /// A dynamics-consistent trajectory from the same initial state whose
    /// velocities match `traj`: each control is the velocity increment the
    /// model needs, rolled out exactly. Linear in the input states.
    pub fn conform(&self, traj: &Trajectory) -> Trajectory {
        let bv = self.b.fixed_rows::<3>(3).into_owned();
        let bv_pinv = (bv.transpose() * bv)
            .try_inverse()
            .map(|inv| inv * bv.transpose())
            .unwrap_or_else(Matrix3::zeros);
        let mut states = Vec::with_capacity(traj.len());
        let mut x = traj.states[0];
        states.push(x);
        for next in &traj.states[1..] {
            let free = (self.a * x.to_vector()).fixed_rows::<3>(3).into_owned();
            let u = bv_pinv * (next.velocity - free);
            x = self.step(&x, &u);
            states.push(x);
        }
        Trajectory::new(states, self.dt)
    }

    /// Position and velocity response of one axis to a unit control applied
    /// `j` steps earlier, for j = 0..n: entries of C A^j B and its velocity
    /// counterpart. Valid when the model is axis-decoupled and isotropic.
    pub fn axis_impulse_response(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        let mut ajb = self.b;
        for _ in 0..n {
            let p = self.c * ajb;
            pos.push(p[(0, 0)]);
            vel.push(ajb[(3, 0)]);
            ajb = self.a * ajb;
        }
        (pos, vel)
    }

    /// True when position/velocity along one axis never depend on another
    /// axis, and all three axes share the same response.
    pub fn is_axis_decoupled(&self) -> bool {
        let mut ajb = self.b;
        for _ in 0..8 {
            for r in 0..6 {
                for col in 0..3 {
                    if r % 3 != col && ajb[(r, col)].abs() > 1e-15 {
                        return false;
                    }
                }
            }
            for axis in 1..3 {
                if (ajb[(axis, axis)] - ajb[(0, 0)]).abs() > 1e-15
                    || (ajb[(axis + 3, axis)] - ajb[(3, 0)]).abs() > 1e-15
                {
                    return false;
                }
            }
            ajb = self.a * ajb;
        }
        for r in 0..6 {
            for col in 0..6 {
                if r % 3 != col % 3 && self.a[(r, col)] != 0.0 {
                    return false;
                }
            }
        }
        true
    }
}
