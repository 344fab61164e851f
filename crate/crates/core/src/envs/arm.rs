//! Analytic two-link planar arm.
//!
//! State is `(θ₁, θ₂, θ̇₁, θ̇₂, tip_x, tip_y)`; actions are joint torques in
//! `[-1, 1]²`. One step is a damped explicit Euler update:
//!
//! ```text
//! θ̇' = DAMPING · θ̇ + DT · TORQUE_GAIN · τ
//! θ'  = θ + DT · θ̇'
//! ```
//!
//! with the tip recomputed by forward kinematics. Angles are not wrapped, so
//! the state changes continuously and `s' − s` stays small.

use std::f64::consts::PI;

use rand::Rng;

pub const LINK1: f64 = 0.1;
pub const LINK2: f64 = 0.11;
pub const DT: f64 = 0.05;
pub const DAMPING: f64 = 0.9;
/// Angular acceleration per unit torque (unit inertia scaled so that a full
/// torque adds 1 rad/s per step).
pub const TORQUE_GAIN: f64 = 20.0;
/// Goals are drawn uniformly from the disk of this radius.
pub const GOAL_RADIUS: f64 = 0.95 * (LINK1 + LINK2);

pub fn forward_kinematics(theta1: f64, theta2: f64) -> [f64; 2] {
    let x = LINK1 * theta1.cos() + LINK2 * (theta1 + theta2).cos();
    let y = LINK1 * theta1.sin() + LINK2 * (theta1 + theta2).sin();
    [x, y]
}

pub fn state_from_angles(theta1: f64, theta2: f64, omega1: f64, omega2: f64) -> Vec<f64> {
    let [x, y] = forward_kinematics(theta1, theta2);
    vec![theta1, theta2, omega1, omega2, x, y]
}

pub fn step(state: &[f64], torque: &[f64]) -> Vec<f64> {
    let omega1 = DAMPING * state[2] + DT * TORQUE_GAIN * torque[0];
    let omega2 = DAMPING * state[3] + DT * TORQUE_GAIN * torque[1];
    let theta1 = state[0] + DT * omega1;
    let theta2 = state[1] + DT * omega2;
    state_from_angles(theta1, theta2, omega1, omega2)
}

/// Random resting configuration whose tip lies inside the goal disk.
pub fn sample_start<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    loop {
        let theta1 = rng.random_range(-PI..PI);
        let theta2 = rng.random_range(-PI..PI);
        let [x, y] = forward_kinematics(theta1, theta2);
        if x.hypot(y) <= GOAL_RADIUS {
            return state_from_angles(theta1, theta2, 0.0, 0.0);
        }
    }
}

pub fn sample_goal<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let r = GOAL_RADIUS * rng.random::<f64>().sqrt();
    let angle = rng.random_range(-PI..PI);
    vec![r * angle.cos(), r * angle.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_angles_reach_full_extension() {
        assert_eq!(forward_kinematics(0.0, 0.0), [LINK1 + LINK2, 0.0]);
    }

    #[test]
    fn damped_euler_step() {
        let s = state_from_angles(0.0, 0.0, 1.0, -2.0);
        let next = step(&s, &[1.0, 0.0]);
        assert!((next[2] - (0.9 + 1.0)).abs() < 1e-15);
        assert!((next[3] - (-1.8)).abs() < 1e-15);
        assert!((next[0] - 0.05 * 1.9).abs() < 1e-15);
        assert_eq!(&next[4..], &forward_kinematics(next[0], next[1]));
    }
}
