use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Algo, RunConfig};
use super::eval::{rollout_eval, EvalSet};
use super::metrics::{write_metrics, MetricsRow, RelabelDump, RelabelRecord};
use crate::agents::{ActorCritic, GcslAgent, PolicyNet};
use crate::dynamics::{mbr_relabel, stack_rows, DynamicsModel};
use crate::envs::GoalEnvSpec;
use crate::error::{Error, Result};
use crate::replay::{
    perturb_goals, relabel_baseline, relabel_her_future, BaselineMode, EpisodeBuffer, RelabelMode, RelabeledBatch,
    Transition,
};

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 1,
    AgentInit = 2,
    Explore = 3,
    Sample = 4,
    Relabel = 5,
    ModelRelabel = 6,
    Eval = 7,
    Model = 8,
    GoalNoise = 9,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone)]
pub enum Learner {
    ActorCritic(Box<ActorCritic>),
    Gcsl(Box<GcslAgent>),
}

impl Learner {
    pub fn policy(&self) -> &PolicyNet {
        match self {
            Learner::ActorCritic(a) => &a.policy,
            Learner::Gcsl(g) => &g.policy,
        }
    }

    pub fn actor_critic(&self) -> Option<&ActorCritic> {
        match self {
            Learner::ActorCritic(a) => Some(a),
            Learner::Gcsl(_) => None,
        }
    }

    fn observe_episode(&mut self, env: &GoalEnvSpec, episode: &[Transition]) -> Result<()> {
        let mut states: Vec<&Vec<f64>> = episode.iter().map(|t| &t.state).collect();
        if let Some(last) = episode.last() {
            states.push(&last.next_state);
        }
        let goals: Vec<&Vec<f64>> = episode
            .iter()
            .map(|t| &t.goal)
            .chain(episode.last().map(|t| &t.goal))
            .collect();
        let s = stack_rows(states, env.state_dim);
        let g = stack_rows(goals, env.goal_dim);
        match self {
            Learner::ActorCritic(a) => a.observe(s.view(), g.view()),
            Learner::Gcsl(a) => a.observe(s.view(), g.view()),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Learner::ActorCritic(a) => a.save(dir),
            Learner::Gcsl(g) => g.save(dir),
        }
    }
}

/// Collects one episode, choosing each action with `act`.
fn collect_episode<R, F>(env: &GoalEnvSpec, reset_rng: &mut R, mut act: F) -> Result<Vec<Transition>>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    let mut state = env.reset(reset_rng);
    let mut episode = Vec::with_capacity(env.horizon);
    for t in 0..env.horizon {
        let action = act(&state.obs, &state.goal)?;
        let next = env.step(&state, &action)?;
        episode.push(Transition {
            reward: env.sparse_reward(&env.phi(&next.obs), &state.goal)?,
            state: state.obs,
            action,
            next_state: next.obs.clone(),
            goal: state.goal,
            episode_id: 0,
            t,
        });
        state = next;
    }
    Ok(episode)
}

fn uniform_action<R: Rng + ?Sized>(env: &GoalEnvSpec, rng: &mut R) -> Vec<f64> {
    env.action_low
        .iter()
        .zip(&env.action_high)
        .map(|(&lo, &hi)| rng.random_range(lo..=hi))
        .collect()
}

fn model_train_step(model: &mut DynamicsModel, env: &GoalEnvSpec, rows: &[Transition]) -> Result<f64> {
    let s = stack_rows(rows.iter().map(|r| &r.state), env.state_dim);
    let a = stack_rows(rows.iter().map(|r| &r.action), env.action_dim);
    let next = stack_rows(rows.iter().map(|r| &r.next_state), env.state_dim);
    model.train_step(s.view(), a.view(), next.view())
}

/// Fills `buffer` with uniformly random episodes, then fits the model on
/// batches drawn from it. Returns the last pre-step model loss.
pub fn warmup<R: Rng + ?Sized>(
    config: &RunConfig,
    env: &GoalEnvSpec,
    buffer: &mut EpisodeBuffer,
    model: &mut DynamicsModel,
    rng: &mut R,
) -> Result<f64> {
    for _ in 0..config.warmup_episodes {
        let mut actions = Vec::with_capacity(env.horizon);
        for _ in 0..env.horizon {
            actions.push(uniform_action(env, rng));
        }
        let mut actions = actions.into_iter();
        let episode = collect_episode(env, rng, |_, _| Ok(actions.next().expect("one per step")))?;
        buffer.store_episode(episode)?;
    }
    let mut loss = 0.0;
    for _ in 0..config.warmup_updates {
        let batch = buffer.sample_transitions(config.warmup_batch_size, rng)?;
        loss = model_train_step(model, env, &batch)?;
    }
    Ok(loss)
}

#[derive(Debug, Default)]
struct EpochTotals {
    critic: f64,
    q_term: f64,
    sl: f64,
    model: f64,
    updates: usize,
    model_updates: usize,
}

/// State of a run between epochs.
pub struct Trainer {
    pub config: RunConfig,
    pub env: GoalEnvSpec,
    pub learner: Learner,
    pub model: Option<DynamicsModel>,
    pub buffer: EpisodeBuffer,
    pub eval_set: EvalSet,
    pub epoch: usize,
    pub env_steps: u64,
    pub model_updates: u64,
    pub warmup_model_loss: Option<f64>,
    env_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    relabel_rng: ChaCha8Rng,
    model_relabel_rng: ChaCha8Rng,
    goal_noise_rng: ChaCha8Rng,
}

impl Trainer {
    /// Builds networks and buffer; warms the model up if the run uses one.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = GoalEnvSpec::new(config.env);
        let seed = config.seed;
        let mut init_rng = stream_rng(seed, Stream::AgentInit);
        let learner = match config.algo {
            Algo::Gcsl => Learner::Gcsl(Box::new(GcslAgent::new(&env, config.agent.clone(), &mut init_rng)?)),
            _ => Learner::ActorCritic(Box::new(ActorCritic::new(&env, config.agent.clone(), &mut init_rng)?)),
        };
        let mut buffer = EpisodeBuffer::new(config.buffer_capacity, env.horizon)?;
        let eval_set = EvalSet::sample(&env, config.eval_episodes, &mut stream_rng(seed, Stream::Eval));

        let mut trainer_model = None;
        let mut warmup_model_loss = None;
        let mut learner = learner;
        if config.uses_model() {
            let mut model_rng = stream_rng(seed, Stream::Model);
            let mut model = DynamicsModel::for_env(&env, &config.model_hidden(), config.lr_model, &mut model_rng)?;
            warmup_model_loss = Some(warmup(&config, &env, &mut buffer, &mut model, &mut model_rng)?);
            for transitions in buffer_episodes(&buffer) {
                learner.observe_episode(&env, &transitions)?;
            }
            trainer_model = Some(model);
        }
        Ok(Self {
            env_rng: stream_rng(seed, Stream::Env),
            explore_rng: stream_rng(seed, Stream::Explore),
            sample_rng: stream_rng(seed, Stream::Sample),
            relabel_rng: stream_rng(seed, Stream::Relabel),
            model_relabel_rng: stream_rng(seed, Stream::ModelRelabel),
            goal_noise_rng: stream_rng(seed, Stream::GoalNoise),
            model_updates: if trainer_model.is_some() { config.warmup_updates as u64 } else { 0 },
            config,
            env,
            learner,
            model: trainer_model,
            buffer,
            eval_set,
            epoch: 0,
            env_steps: 0,
            warmup_model_loss,
        })
    }

    fn collect(&mut self) -> Result<()> {
        let env = &self.env;
        let learner = &self.learner;
        let config = &self.config.agent;
        let explore_rng = &mut self.explore_rng;
        let episode = collect_episode(env, &mut self.env_rng, |s, g| {
            learner.policy().select_action(env, config, s, g, true, explore_rng)
        })?;
        self.env_steps += episode.len() as u64;
        self.learner.observe_episode(&self.env, &episode)?;
        self.buffer.store_episode(episode)?;
        Ok(())
    }

    fn model_relabel(&mut self, rows: Vec<Transition>) -> Result<RelabeledBatch> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model-based relabeling without a model".into()))?;
        mbr_relabel(
            rows,
            self.learner.policy(),
            model,
            &self.env,
            self.config.agent.n_mbr_steps,
            self.config.agent.p_relabel,
            &mut self.model_relabel_rng,
        )
    }

    fn relabel(&mut self, rows: Vec<Transition>) -> Result<RelabeledBatch> {
        let agent = &self.config.agent;
        match agent.relabel_mode {
            RelabelMode::None => Ok(RelabeledBatch::unchanged(rows)),
            RelabelMode::HerFuture => {
                relabel_her_future(rows, &self.buffer, &self.env, agent.p_relabel, &mut self.relabel_rng)
            }
            RelabelMode::Random => relabel_baseline(
                rows,
                &self.buffer,
                &self.env,
                BaselineMode::Random,
                agent.p_relabel,
                agent.goal_noise_std,
                &mut self.relabel_rng,
            ),
            RelabelMode::GoalNoise => {
                let mut batch =
                    relabel_her_future(rows, &self.buffer, &self.env, agent.p_relabel, &mut self.relabel_rng)?;
                perturb_goals(&mut batch, &self.env, agent.goal_noise_std, &mut self.goal_noise_rng)?;
                Ok(batch)
            }
            RelabelMode::Mbr => self.model_relabel(rows),
        }
    }

    fn train_batch(&mut self, totals: &mut EpochTotals, records: &mut Vec<RelabelRecord>) -> Result<()> {
        let rows = self
            .buffer
            .sample_transitions(self.config.batch_size, &mut self.sample_rng)?;
        if let Some(model) = self.model.as_mut() {
            for _ in 0..self.config.model_updates_per_batch {
                totals.model += model_train_step(model, &self.env, &rows)?;
                totals.model_updates += 1;
                self.model_updates += 1;
            }
        }
        let sl_batch = if self.config.split_supervision() {
            Some(self.model_relabel(rows.clone())?)
        } else {
            None
        };
        let batch = self.relabel(rows)?;
        for i in 0..batch.len() {
            if batch.sl_mask[i] {
                records.push(RelabelRecord {
                    epoch: self.epoch + 1,
                    original_goal: batch.original_goals[i].clone(),
                    goal: batch.rows[i].goal.clone(),
                    distance: crate::envs::distance(&batch.rows[i].goal, &batch.original_goals[i]),
                    candidate: batch.candidate_index[i],
                });
            }
        }

        let alpha = self.config.agent.effective_alpha();
        match &mut self.learner {
            Learner::Gcsl(agent) => {
                totals.sl += agent.gcsl_update(&batch)?;
            }
            Learner::ActorCritic(agent) => {
                totals.critic += if self.config.algo == Algo::Mve {
                    let model = self.model.as_ref().expect("value expansion runs carry a model");
                    agent.critic_update_mve(&batch, model)?
                } else {
                    agent.critic_update(&batch)?
                };
                let terms = match &sl_batch {
                    Some(sl) => agent.actor_update_split(&batch, sl, alpha)?,
                    None => agent.actor_update_joint(&batch, alpha)?,
                };
                totals.q_term += terms.q_term;
                totals.sl += terms.sl_term;
                agent.update_targets()?;
            }
        }
        totals.updates += 1;
        Ok(())
    }

    /// Collect, train, evaluate. Returns the epoch's metrics and relabel records.
    pub fn run_epoch(&mut self) -> Result<(MetricsRow, Vec<RelabelRecord>)> {
        let mut totals = EpochTotals::default();
        let mut records = Vec::new();
        for _ in 0..self.config.episodes_per_epoch() {
            self.collect()?;
            for _ in 0..self.config.batches_per_episode {
                self.train_batch(&mut totals, &mut records)?;
            }
        }
        self.epoch += 1;
        let outcome = rollout_eval(self.learner.policy(), &self.env, &self.eval_set, self.config.agent.gamma)?;
        let per_update = |x: f64, n: usize| if n == 0 { 0.0 } else { x / n as f64 };
        let relabel_mean = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.distance).sum::<f64>() / records.len() as f64
        };
        let row = MetricsRow {
            epoch: self.epoch,
            env_steps: self.env_steps,
            success_rate: outcome.success_rate(),
            mean_final_distance: outcome.mean_final_distance(),
            expected_distance: outcome.expected_distance(),
            critic_loss: per_update(totals.critic, totals.updates),
            actor_q_term: per_update(totals.q_term, totals.updates),
            sl_loss: per_update(totals.sl, totals.updates),
            model_loss: per_update(totals.model, totals.model_updates),
            mean_relabel_goal_distance: relabel_mean,
        };
        Ok((row, records))
    }
}

fn buffer_episodes(buffer: &EpisodeBuffer) -> Vec<Vec<Transition>> {
    let mut episodes: Vec<Vec<Transition>> = Vec::new();
    let mut current: Option<u64> = None;
    for t in buffer.iter() {
        if current != Some(t.episode_id) {
            episodes.push(Vec::new());
            current = Some(t.episode_id);
        }
        episodes.last_mut().expect("pushed above").push(t.clone());
    }
    episodes
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub model_updates: u64,
}

/// Runs every epoch. With an output directory, writes `config.json`,
/// `metrics.csv`, `relabel_goals.csv` and the final agent checkpoint; on a
/// numerical failure, `failure.json` describes where the run stopped.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let out = config.out.clone();
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.json");
        fs::write(&path, serde_json::to_string_pretty(config)?).map_err(|e| Error::io(path, e))?;
    }
    let mut trainer = Trainer::new(config.clone())?;
    let mut dump = match &out {
        Some(dir) => Some(RelabelDump::create(dir.join("relabel_goals.csv"), trainer.env.goal_dim)?),
        None => None,
    };
    let mut metrics = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (row, records) = match trainer.run_epoch() {
            Ok(r) => r,
            Err(err) => {
                if let Some(dir) = &out {
                    write_failure(dir, &trainer, &metrics, &err)?;
                }
                return Err(err);
            }
        };
        if let Some(dump) = dump.as_mut() {
            dump.append(&records)?;
        }
        metrics.push(row);
        if let Some(dir) = &out {
            write_metrics(dir.join("metrics.csv"), &metrics)?;
        }
    }
    if let Some(dir) = &out {
        trainer.learner.save(&dir.join("agent"))?;
        if config.dump_buffer {
            trainer.buffer.write_csv(dir.join("buffer.csv"))?;
        }
    }
    Ok(RunOutput {
        metrics,
        model_updates: trainer.model_updates,
    })
}

fn write_failure(dir: &Path, trainer: &Trainer, metrics: &[MetricsRow], err: &Error) -> Result<()> {
    let snapshot = serde_json::json!({
        "error": err.to_string(),
        "epoch": trainer.epoch + 1,
        "env_steps": trainer.env_steps,
        "buffer_transitions": trainer.buffer.len(),
        "actor_finite": trainer.learner.policy().actor.all_finite(),
        "critic_finite": trainer.learner.actor_critic().map(|a| a.critic.all_finite()),
        "last_metrics": metrics.last(),
    });
    let path = dir.join("failure.json");
    fs::write(&path, serde_json::to_string_pretty(&snapshot)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;

    fn tiny(env: EnvKind, algo: Algo) -> RunConfig {
        let mut cfg = RunConfig::new(env, algo);
        cfg.agent.hidden = vec![16, 16];
        cfg.model_layers = 2;
        cfg.model_width = 16;
        cfg.warmup_updates = 5;
        cfg.warmup_batch_size = 64;
        cfg.eval_episodes = 5;
        cfg.epochs = 3;
        cfg
    }

    #[test]
    fn warmup_fills_buffer_and_is_deterministic() {
        let cfg = tiny(EnvKind::Point2DLarge, Algo::Mher);
        let a = Trainer::new(cfg.clone()).unwrap();
        let b = Trainer::new(cfg).unwrap();
        assert_eq!(a.buffer.len(), 1000);
        assert_eq!(a.buffer.num_episodes(), 10);
        assert_eq!(a.env_steps, 0);
        assert_eq!(
            a.model.as_ref().unwrap().network(),
            b.model.as_ref().unwrap().network()
        );
    }

    #[test]
    fn env_steps_advance_by_one_horizon_per_episode() {
        for (env, per_epoch) in [(EnvKind::Point2DLarge, 100), (EnvKind::PlanarReacher, 1500)] {
            let mut cfg = tiny(env, Algo::Her);
            cfg.batches_per_episode = 1;
            let mut trainer = Trainer::new(cfg).unwrap();
            for e in 1..=2 {
                let (row, _) = trainer.run_epoch().unwrap();
                assert_eq!(row.epoch, e);
                assert_eq!(row.env_steps, e as u64 * per_epoch);
                assert!((0.0..=1.0).contains(&row.success_rate));
            }
        }
    }

    #[test]
    fn model_updates_are_gated_by_algorithm() {
        let ddpg = run(&tiny(EnvKind::Point2DLarge, Algo::Ddpg)).unwrap();
        assert_eq!(ddpg.model_updates, 0);
        assert!(ddpg.metrics.iter().all(|r| r.model_loss == 0.0));
        let gcsl = run(&tiny(EnvKind::Point2DLarge, Algo::Gcsl)).unwrap();
        assert_eq!(gcsl.model_updates, 0);
        let mher = run(&tiny(EnvKind::Point2DLarge, Algo::Mher)).unwrap();
        assert_eq!(mher.model_updates, 5 + 3 * 5 * 2);
    }

    #[test]
    fn every_algorithm_runs_and_repeats_exactly() {
        for algo in Algo::ALL {
            let cfg = tiny(EnvKind::Point2DFourRoom, algo);
            let a = run(&cfg).unwrap();
            let b = run(&cfg).unwrap();
            assert_eq!(a.metrics, b.metrics, "{algo}");
            assert_eq!(a.metrics.len(), 3);
        }
    }

    #[test]
    fn relabel_records_match_metrics() {
        let mut trainer = Trainer::new(tiny(EnvKind::Point2DLarge, Algo::Her)).unwrap();
        let (row, records) = trainer.run_epoch().unwrap();
        assert!(!records.is_empty());
        assert!(records.iter().all(|r| r.distance >= 0.0 && r.epoch == 1 && r.candidate.is_none()));
        let mean = records.iter().map(|r| r.distance).sum::<f64>() / records.len() as f64;
        assert_eq!(row.mean_relabel_goal_distance, mean);

        let mut ddpg = Trainer::new(tiny(EnvKind::Point2DLarge, Algo::Ddpg)).unwrap();
        let (row, records) = ddpg.run_epoch().unwrap();
        assert!(records.is_empty());
        assert_eq!(row.mean_relabel_goal_distance, 0.0);
    }

    #[test]
    fn run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(EnvKind::PlanarReacher, Algo::Mher);
        cfg.epochs = 1;
        cfg.dump_buffer = true;
        cfg.out = Some(dir.path().to_path_buf());
        let out = run(&cfg).unwrap();
        for file in ["config.json", "metrics.csv", "relabel_goals.csv", "buffer.csv", "agent/actor.mlp", "agent/agent.json"] {
            assert!(dir.path().join(file).exists(), "{file}");
        }
        let back = crate::harness::metrics::read_metrics(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(back, out.metrics);
        let (_, records) = crate::harness::metrics::read_relabel_dump(dir.path().join("relabel_goals.csv")).unwrap();
        assert!(records.iter().all(|r| r.candidate.is_some_and(|c| c <= 5)));
        assert_eq!(RunConfig::from_json_file(dir.path().join("config.json")).unwrap(), cfg);
    }
}
