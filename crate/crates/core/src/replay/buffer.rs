use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use crate::error::{ensure, Error, Result};

/// One step of goal-conditioned experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub goal: Vec<f64>,
    pub episode_id: u64,
    /// Index within the episode, `0..horizon`.
    pub t: usize,
}

#[derive(Debug, Clone)]
struct Episode {
    id: u64,
    transitions: Vec<Transition>,
}

/// FIFO replay store that keeps whole episodes so later states stay addressable.
#[derive(Debug, Clone)]
pub struct EpisodeBuffer {
    capacity: usize,
    horizon: usize,
    episodes: VecDeque<Episode>,
    next_id: u64,
}

impl EpisodeBuffer {
    pub fn new(capacity: usize, horizon: usize) -> Result<Self> {
        ensure!(horizon > 0, InvalidArgument, "horizon must be positive");
        ensure!(
            capacity >= horizon,
            InvalidArgument,
            "capacity {capacity} cannot hold one {horizon}-step episode"
        );
        Ok(Self {
            capacity,
            horizon,
            episodes: VecDeque::new(),
            next_id: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of stored transitions.
    pub fn len(&self) -> usize {
        self.episodes.len() * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Appends a full-horizon trajectory, evicting the oldest episodes when
    /// over capacity. Episode ids and step indices are assigned here.
    pub fn store_episode(&mut self, mut trajectory: Vec<Transition>) -> Result<u64> {
        ensure!(
            trajectory.len() == self.horizon,
            InvalidArgument,
            "trajectory has {} steps, horizon is {}",
            trajectory.len(),
            self.horizon
        );
        let goal = trajectory[0].goal.clone();
        ensure!(
            trajectory.iter().all(|tr| tr.goal == goal),
            InvalidArgument,
            "desired goal changes within the trajectory"
        );
        let id = self.next_id;
        self.next_id += 1;
        for (t, tr) in trajectory.iter_mut().enumerate() {
            tr.episode_id = id;
            tr.t = t;
        }
        while self.len() + self.horizon > self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(Episode {
            id,
            transitions: trajectory,
        });
        Ok(id)
    }

    fn episode(&self, id: u64) -> Option<&Episode> {
        let front = self.episodes.front()?.id;
        let offset = id.checked_sub(front)? as usize;
        self.episodes.get(offset)
    }

    pub fn contains_episode(&self, id: u64) -> bool {
        self.episode(id).is_some()
    }

    pub fn transition(&self, index: usize) -> &Transition {
        &self.episodes[index / self.horizon].transitions[index % self.horizon]
    }

    pub fn episode_transitions(&self, id: u64) -> Option<&[Transition]> {
        self.episode(id).map(|e| e.transitions.as_slice())
    }

    /// State `s_index` of an episode, for `index` in `1..=horizon`.
    pub fn state_at(&self, id: u64, index: usize) -> Option<&[f64]> {
        if index == 0 {
            return self.episode(id).map(|e| e.transitions[0].state.as_slice());
        }
        self.episode(id)
            .and_then(|e| e.transitions.get(index - 1))
            .map(|tr| tr.next_state.as_slice())
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        ensure!(n > 0, InvalidArgument, "batch size must be positive");
        let len = self.len();
        Ok((0..n).map(|_| rng.random_range(0..len)).collect())
    }

    pub fn sample_transitions<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.transition(i).clone())
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| e.transitions.iter())
    }

    /// One CSV row per transition:
    /// `episode_id,t,state_0..,action_0..,reward,goal_0..`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path)?;
        if let Some(first) = self.iter().next() {
            let mut header = vec!["episode_id".to_string(), "t".to_string()];
            header.extend((0..first.state.len()).map(|i| format!("state_{i}")));
            header.extend((0..first.action.len()).map(|i| format!("action_{i}")));
            header.push("reward".into());
            header.extend((0..first.goal.len()).map(|i| format!("goal_{i}")));
            writer.write_record(&header)?;
        }
        for tr in self.iter() {
            let mut row = vec![tr.episode_id.to_string(), tr.t.to_string()];
            row.extend(tr.state.iter().map(f64::to_string));
            row.extend(tr.action.iter().map(f64::to_string));
            row.push(tr.reward.to_string());
            row.extend(tr.goal.iter().map(f64::to_string));
            writer.write_record(&row)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}
