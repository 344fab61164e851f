//! Goal-conditioned environments with the sparse `{0, -1}` reward.
//!
//! * `point2d-large`: a point in `[-5, 5]²` displaced by actions in `[-1, 1]²`,
//!   clamped per axis at the border.
//! * `point2d-fourroom`: the same arena split into four rooms by walls with doors
//!   (see [`fourroom`]).
//! * `planar-reacher`: a two-link planar arm reaching tip positions (see [`arm`]).

pub mod arm;
pub mod fourroom;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub const POINT_HALF_EXTENT: f64 = 5.0;
pub const HORIZON: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "point2d-large")]
    Point2DLarge,
    #[serde(rename = "point2d-fourroom")]
    Point2DFourRoom,
    #[serde(rename = "planar-reacher")]
    PlanarReacher,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [
        EnvKind::Point2DLarge,
        EnvKind::Point2DFourRoom,
        EnvKind::PlanarReacher,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Point2DLarge => "point2d-large",
            EnvKind::Point2DFourRoom => "point2d-fourroom",
            EnvKind::PlanarReacher => "planar-reacher",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "environment",
                name: s.to_string(),
            })
    }
}

/// Geometry, threshold and horizon of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalEnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Success radius in goal units.
    pub epsilon: f64,
    pub horizon: usize,
}

/// Observation, desired goal and elapsed steps of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub obs: Vec<f64>,
    pub goal: Vec<f64>,
    pub t: usize,
}

impl GoalEnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Point2DLarge | EnvKind::Point2DFourRoom => Self {
                kind,
                state_dim: 2,
                action_dim: 2,
                goal_dim: 2,
                action_low: vec![-1.0; 2],
                action_high: vec![1.0; 2],
                epsilon: 1.0,
                horizon: HORIZON,
            },
            EnvKind::PlanarReacher => Self {
                kind,
                state_dim: 6,
                action_dim: 2,
                goal_dim: 2,
                action_low: vec![-1.0; 2],
                action_high: vec![1.0; 2],
                epsilon: 0.02,
                horizon: HORIZON,
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Uniform start state and desired goal.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let obs = match self.kind {
            EnvKind::Point2DLarge | EnvKind::Point2DFourRoom => self.sample_point(rng).to_vec(),
            EnvKind::PlanarReacher => arm::sample_start(rng),
        };
        let goal = self.sample_goal(rng);
        EnvState { obs, goal, t: 0 }
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let h = POINT_HALF_EXTENT;
        loop {
            let p = [rng.random_range(-h..=h), rng.random_range(-h..=h)];
            if self.kind != EnvKind::Point2DFourRoom || !fourroom::near_wall(p) {
                return p;
            }
        }
    }

    /// A goal drawn from the task's desired-goal distribution.
    pub fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            EnvKind::Point2DLarge | EnvKind::Point2DFourRoom => self.sample_point(rng).to_vec(),
            EnvKind::PlanarReacher => arm::sample_goal(rng),
        }
    }

    pub fn action_in_box(&self, action: &[f64]) -> bool {
        action.len() == self.action_dim
            && action
                .iter()
                .zip(self.action_low.iter().zip(&self.action_high))
                .all(|(&a, (&lo, &hi))| a >= lo && a <= hi)
    }

    pub fn clip_action(&self, action: &mut [f64]) {
        for (a, (&lo, &hi)) in action
            .iter_mut()
            .zip(self.action_low.iter().zip(&self.action_high))
        {
            *a = a.clamp(lo, hi);
        }
    }

    /// Deterministic observation-level transition.
    pub fn transition(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            obs.len() == self.state_dim,
            Shape,
            "{} expects {}-d states, got {}",
            self.name(),
            self.state_dim,
            obs.len()
        );
        ensure!(
            self.action_in_box(action),
            InvalidArgument,
            "action {:?} outside the action box of {}",
            action,
            self.name()
        );
        let h = POINT_HALF_EXTENT;
        Ok(match self.kind {
            EnvKind::Point2DLarge => vec![
                (obs[0] + action[0]).clamp(-h, h),
                (obs[1] + action[1]).clamp(-h, h),
            ],
            EnvKind::Point2DFourRoom => {
                let end = [
                    (obs[0] + action[0]).clamp(-h, h),
                    (obs[1] + action[1]).clamp(-h, h),
                ];
                fourroom::resolve_move([obs[0], obs[1]], end).to_vec()
            }
            EnvKind::PlanarReacher => arm::step(obs, action),
        })
    }

    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<EnvState> {
        Ok(EnvState {
            obs: self.transition(&state.obs, action)?,
            goal: state.goal.clone(),
            t: state.t + 1,
        })
    }

    /// Achieved goal of a state.
    pub fn phi(&self, obs: &[f64]) -> Vec<f64> {
        match self.kind {
            EnvKind::Point2DLarge | EnvKind::Point2DFourRoom => obs[..2].to_vec(),
            EnvKind::PlanarReacher => obs[4..6].to_vec(),
        }
    }

    /// `0` when the achieved goal is strictly within `epsilon` of `goal`, else `-1`.
    pub fn sparse_reward(&self, achieved: &[f64], goal: &[f64]) -> Result<f64> {
        ensure!(
            achieved.len() == self.goal_dim && goal.len() == self.goal_dim,
            Shape,
            "goal vectors must be {}-d, got {} and {}",
            self.goal_dim,
            achieved.len(),
            goal.len()
        );
        Ok(reward_from_distance(distance(achieved, goal), self.epsilon))
    }

    pub fn is_success(&self, obs: &[f64], goal: &[f64]) -> bool {
        distance(&self.phi(obs), goal) < self.epsilon
    }

    /// Midpoint and half-width of every action dimension.
    pub fn action_center_and_half_range(&self) -> (Vec<f64>, Vec<f64>) {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(&lo, &hi)| ((lo + hi) / 2.0, (hi - lo) / 2.0))
            .unzip()
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn reward_from_distance(distance: f64, epsilon: f64) -> f64 {
    if distance < epsilon {
        0.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn large() -> GoalEnvSpec {
        GoalEnvSpec::new(EnvKind::Point2DLarge)
    }

    #[test]
    fn names_round_trip() {
        for kind in EnvKind::ALL {
            assert_eq!(kind.name().parse::<EnvKind>().unwrap(), kind);
        }
        assert!("cartpole".parse::<EnvKind>().is_err());
    }

    #[test]
    fn reset_is_seeded() {
        for kind in EnvKind::ALL {
            let spec = GoalEnvSpec::new(kind);
            let a = spec.reset(&mut ChaCha8Rng::seed_from_u64(0));
            let b = spec.reset(&mut ChaCha8Rng::seed_from_u64(0));
            assert_eq!(a, b);
            assert_eq!(a.t, 0);
        }
    }

    #[test]
    fn point_reset_covers_arena() {
        let spec = large();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for _ in 0..10_000 {
            let s = spec.reset(&mut rng);
            for p in [&s.obs, &s.goal] {
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
        }
        for d in 0..2 {
            assert!(lo[d] >= -5.0 && lo[d] <= -4.9, "{lo:?}");
            assert!(hi[d] <= 5.0 && hi[d] >= 4.9, "{hi:?}");
        }
    }

    #[test]
    fn fourroom_reset_avoids_walls() {
        let spec = GoalEnvSpec::new(EnvKind::Point2DFourRoom);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let s = spec.reset(&mut rng);
            assert!(!fourroom::in_wall([s.obs[0], s.obs[1]]));
            assert!(!fourroom::in_wall([s.goal[0], s.goal[1]]));
        }
    }

    #[test]
    fn point_displacement_and_clamp() {
        let spec = large();
        assert_eq!(spec.transition(&[0.0, 0.0], &[0.5, -0.5]).unwrap(), vec![0.5, -0.5]);
        assert_eq!(spec.transition(&[4.8, 0.0], &[1.0, 0.0]).unwrap(), vec![5.0, 0.0]);
        assert!(spec.transition(&[0.0, 0.0], &[1.5, 0.0]).is_err());
    }

    #[test]
    fn fourroom_wall_face() {
        let spec = GoalEnvSpec::new(EnvKind::Point2DFourRoom);
        let next = spec.transition(&[-0.5, 2.0], &[1.0, 0.0]).unwrap();
        assert!((next[0] + fourroom::COLLISION_MARGIN).abs() < 1e-12);
        assert_eq!(next[1], 2.0);
    }

    #[test]
    fn step_counts() {
        let spec = large();
        let s = spec.reset(&mut ChaCha8Rng::seed_from_u64(3));
        let s1 = spec.step(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(s1.t, 1);
        assert_eq!(s1.goal, s.goal);
    }

    #[test]
    fn reward_examples() {
        let spec = large();
        assert_eq!(spec.sparse_reward(&[0.0, 0.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(spec.sparse_reward(&[0.0, 0.0], &[2.0, 2.0]).unwrap(), -1.0);
        assert_eq!(spec.sparse_reward(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(spec.sparse_reward(&[0.0, 0.0], &[0.6, 0.8]).unwrap(), -1.0);
        assert!(spec.sparse_reward(&[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(large().phi(&[1.2, -3.0]), vec![1.2, -3.0]);
        let arm = GoalEnvSpec::new(EnvKind::PlanarReacher);
        let s = arm::state_from_angles(0.0, 0.0, 0.0, 0.0);
        assert_eq!(arm.phi(&s), vec![arm::LINK1 + arm::LINK2, 0.0]);
    }

    #[test]
    fn phi_of_reset_is_in_goal_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let arm = GoalEnvSpec::new(EnvKind::PlanarReacher);
        for _ in 0..2_000 {
            let g = arm.phi(&arm.reset(&mut rng).obs);
            assert!(g[0].hypot(g[1]) <= arm::GOAL_RADIUS);
            let p = large().phi(&large().reset(&mut rng).obs);
            assert!(p.iter().all(|v| v.abs() <= 5.0));
        }
    }

    #[test]
    fn success_examples() {
        let spec = large();
        assert!(spec.is_success(&[1.0, 1.0], &[1.0, 1.0]));
        assert!(!spec.is_success(&[0.0, 0.0], &[2.0, 0.0]));
    }

    proptest! {
        #[test]
        fn success_iff_zero_reward(
            kind in prop::sample::select(EnvKind::ALL.to_vec()),
            seed in any::<u64>(),
        ) {
            let spec = GoalEnvSpec::new(kind);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = spec.reset(&mut rng);
            let g = if rand::Rng::random::<bool>(&mut rng) { spec.phi(&s.obs) } else { spec.sample_goal(&mut rng) };
            let r = spec.sparse_reward(&spec.phi(&s.obs), &g).unwrap();
            prop_assert!(r == 0.0 || r == -1.0);
            prop_assert_eq!(r == 0.0, spec.is_success(&s.obs, &g));
        }

        #[test]
        fn point_step_is_translation_away_from_border(
            x in -3.9f64..3.9, y in -3.9f64..3.9, ax in -1.0f64..=1.0, ay in -1.0f64..=1.0,
        ) {
            let next = large().transition(&[x, y], &[ax, ay]).unwrap();
            prop_assert_eq!(next, vec![x + ax, y + ay]);
        }

        #[test]
        fn arm_tip_in_reachable_annulus(
            seed in any::<u64>(), t1 in -1.0f64..=1.0, t2 in -1.0f64..=1.0,
        ) {
            let spec = GoalEnvSpec::new(EnvKind::PlanarReacher);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = spec.reset(&mut rng);
            for _ in 0..20 {
                s = spec.step(&s, &[t1, t2]).unwrap();
                let r = s.obs[4].hypot(s.obs[5]);
                prop_assert!(r >= (arm::LINK1 - arm::LINK2).abs() - 1e-12);
                prop_assert!(r <= arm::LINK1 + arm::LINK2 + 1e-12);
                prop_assert_eq!(&s.obs[4..], &arm::forward_kinematics(s.obs[0], s.obs[1]));
            }
        }
    }
}
