//! Pairwise conflict detection and the six separation sides of the δ-cube.
//!
//! Side `i` (1-based) pairs an axis with a sign, in the order
//! +x, −x, +y, −y, +z, −z. Side `i` holds for a position difference
//! `z = p1 − p2` when `sign · z[axis] ≥ δ`, i.e. vehicle 1 minus vehicle 2
//! exceeds δ along that signed axis. In half-space form this is `H·z < g`
//! with `H = −sign·e_axis` and `g = −δ`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory;

pub const SIDE_COUNT: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConflictError {
    #[error("trajectory lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationSide {
    /// 1..=6
    pub index: u8,
    pub axis: usize,
    pub sign: f64,
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl SeparationSide {
    pub fn new(index: u8, delta: f64) -> Self {
        assert!((1..=6).contains(&index), "side index must be in 1..=6");
        let axis = side_axis(index);
        let sign = side_sign(index);
        let mut normal = Vector3::zeros();
        normal[axis] = -sign;
        Self { index, axis, sign, normal, offset: -delta }
    }

    /// `g − H·z`; nonnegative when the side holds (up to the boundary).
    pub fn residual(&self, z: &Vector3<f64>) -> f64 {
        self.offset - self.normal.dot(z)
    }

    /// Strict half-space test `H·z < g`.
    pub fn holds(&self, z: &Vector3<f64>) -> bool {
        self.normal.dot(z) < self.offset
    }
}

pub fn side_axis(index: u8) -> usize {
    ((index - 1) / 2) as usize
}

pub fn side_sign(index: u8) -> f64 {
    if (index - 1) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The six sides of the δ-cube in index order.
pub fn sides(delta: f64) -> [SeparationSide; 6] {
    std::array::from_fn(|i| SeparationSide::new(i as u8 + 1, delta))
}

/// One side per look-ahead step, entries in 1..=6.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionSequence(pub Vec<u8>);

impl DecisionSequence {
    pub fn uniform(side: u8, len: usize) -> Self {
        Self(vec![side; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|d| (1..=6).contains(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub conflicting_steps: Vec<usize>,
    pub min_separation: f64,
    pub first_conflict_step: Option<usize>,
}

impl ConflictReport {
    pub fn has_conflict(&self) -> bool {
        !self.conflicting_steps.is_empty()
    }
}

fn check_lengths(a: &Trajectory, b: &Trajectory) -> Result<(), ConflictError> {
    if a.len() != b.len() {
        return Err(ConflictError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Per-step inf-norm distance between the two position sequences.
pub fn separation_profile(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>, ConflictError> {
    check_lengths(a, b)?;
    Ok(a.states.iter().zip(&b.states).map(|(x, y)| (x.position - y.position).amax()).collect())
}

pub fn detect(a: &Trajectory, b: &Trajectory, delta: f64) -> Result<ConflictReport, ConflictError> {
    let profile = separation_profile(a, b)?;
    let conflicting_steps: Vec<usize> =
        profile.iter().enumerate().filter(|(_, &d)| d < delta).map(|(k, _)| k).collect();
    Ok(ConflictReport {
        first_conflict_step: conflicting_steps.first().copied(),
        conflicting_steps,
        min_separation: profile.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

pub fn separation_satisfied(a: &Trajectory, b: &Trajectory, delta: f64) -> Result<bool, ConflictError> {
    Ok(separation_profile(a, b)?.iter().all(|&d| d >= delta))
}

/// Residual of every side for `z`, in side order.
pub fn residuals(z: &Vector3<f64>, delta: f64) -> [f64; 6] {
    let s = sides(delta);
    std::array::from_fn(|i| s[i].residual(z))
}

/// Side with the largest residual, lowest index on ties.
pub fn best_side(z: &Vector3<f64>, delta: f64) -> u8 {
    let r = residuals(z, delta);
    let mut best = 0;
    for i in 1..SIDE_COUNT {
        if r[i] > r[best] {
            best = i;
        }
    }
    best as u8 + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;

    fn line(offset: Vector3<f64>, n: usize) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|k| VehicleState::at_rest(Vector3::new(k as f64 * 0.1, 0.0, 0.0) + offset))
                .collect(),
            0.1,
        )
    }

    #[test]
    fn coincident_trajectories_conflict_everywhere() {
        let a = line(Vector3::zeros(), 11);
        let r = detect(&a, &a, 0.1).unwrap();
        assert_eq!(r.conflicting_steps, (0..11).collect::<Vec<_>>());
        assert_eq!(r.min_separation, 0.0);
        assert_eq!(r.first_conflict_step, Some(0));
        assert!(!separation_satisfied(&a, &a, 0.1).unwrap());
        assert!(separation_satisfied(&a, &a, 0.0).unwrap());
    }

    #[test]
    fn parallel_offset_trajectories_are_separated() {
        let a = line(Vector3::zeros(), 11);
        let b = line(Vector3::new(0.2, 0.0, 0.0), 11);
        let r = detect(&a, &b, 0.1).unwrap();
        assert!(r.conflicting_steps.is_empty());
        assert!((r.min_separation - 0.2).abs() < 1e-12);
        assert!(r.first_conflict_step.is_none());
        assert!(separation_satisfied(&a, &b, 0.1).unwrap());
    }

    #[test]
    fn distance_exactly_delta_counts_as_separated() {
        let a = line(Vector3::zeros(), 3);
        let b = line(Vector3::new(0.0, 0.0, 0.25), 3);
        assert!(separation_satisfied(&a, &b, 0.25).unwrap());
        assert!(detect(&a, &b, 0.25).unwrap().conflicting_steps.is_empty());
    }

    #[test]
    fn length_mismatch_is_reported() {
        let a = line(Vector3::zeros(), 3);
        let b = line(Vector3::zeros(), 4);
        assert_eq!(detect(&a, &b, 0.1).unwrap_err(), ConflictError::LengthMismatch(3, 4));
        assert!(separation_satisfied(&a, &b, 0.1).is_err());
    }

    #[test]
    fn side_layout() {
        let s = sides(0.1);
        let expected = [
            (0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0),
        ];
        for (side, (axis, sign)) in s.iter().zip(expected) {
            assert_eq!(side.axis, axis);
            assert_eq!(side.sign, sign);
            assert_eq!(side.offset, -0.1);
            assert_eq!(side.normal[axis], -sign);
            assert_eq!(side.normal.abs().sum(), 1.0);
        }
    }

    #[test]
    fn vertical_offset_implies_separation() {
        let z = Vector3::new(0.0, 0.0, 0.15);
        let s = SeparationSide::new(5, 0.1);
        assert_eq!(s.normal, Vector3::new(0.0, 0.0, -1.0));
        assert!((s.normal.dot(&z) + 0.15).abs() < 1e-15);
        assert!(s.holds(&z));
        assert!(z.amax() >= 0.1);
    }

    #[test]
    fn zero_difference_satisfies_no_side() {
        assert!(sides(0.1).iter().all(|s| !s.holds(&Vector3::zeros())));
        assert_eq!(residuals(&Vector3::zeros(), 0.1), [-0.1; 6]);
    }

    #[test]
    fn residuals_along_x() {
        let r = residuals(&Vector3::new(0.2, 0.0, 0.0), 0.1);
        let expected = [0.1, -0.3, -0.1, -0.1, -0.1, -0.1];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(best_side(&Vector3::new(0.2, 0.0, 0.0), 0.1), 1);
        assert_eq!(best_side(&Vector3::zeros(), 0.1), 1);
        assert_eq!(best_side(&Vector3::new(0.0, -0.05, 0.05), 0.1), 4);
    }

    #[test]
    fn grid_soundness() {
        let delta = 0.1;
        let s = sides(delta);
        let mut checked = 0;
        for i in -6..=6 {
            for j in -6..=6 {
                for k in -6..=6 {
                    let z = Vector3::new(i as f64, j as f64, k as f64) * 0.05;
                    let norm = z.amax();
                    if (norm - delta).abs() < 1e-9 {
                        continue;
                    }
                    let any = s.iter().any(|side| side.holds(&z));
                    assert_eq!(any, norm >= delta, "z = {z:?}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 2000);
    }
}
