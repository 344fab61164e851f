use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::model::TransitionModel;
use crate::envs::GoalEnvSpec;
use crate::error::{ensure, Error, Result};
use crate::replay::{RelabeledBatch, Transition};

/// A deterministic goal-conditioned policy evaluated on batches.
pub trait GoalPolicy {
    fn act_batch(
        &self,
        states: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>>;
}

impl<F> GoalPolicy for F
where
    F: Fn(ArrayView2<'_, f64>, ArrayView2<'_, f64>) -> Array2<f64>,
{
    fn act_batch(
        &self,
        states: ArrayView2<'_, f64>,
        goals: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        Ok(self(states, goals))
    }
}

/// Candidate states of a model rollout: the real seed state followed by `n`
/// model predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualTrajectory {
    pub states: Vec<Vec<f64>>,
    pub goal: Vec<f64>,
}

/// Rolls every row forward `n` steps, acting under the row's own goal.
/// Returns `n + 1` matrices; the first is a copy of `seeds`.
pub fn rollout_batch<M: TransitionModel + ?Sized, P: GoalPolicy + ?Sized>(
    model: &M,
    policy: &P,
    seeds: ArrayView2<'_, f64>,
    goals: ArrayView2<'_, f64>,
    n: usize,
) -> Result<Vec<Array2<f64>>> {
    ensure!(
        seeds.nrows() == goals.nrows(),
        Shape,
        "{} seed states vs {} goals",
        seeds.nrows(),
        goals.nrows()
    );
    let mut candidates = Vec::with_capacity(n + 1);
    candidates.push(seeds.to_owned());
    for _ in 0..n {
        let current = candidates.last().unwrap().view();
        let actions = policy.act_batch(current, goals)?;
        let next = model.predict_next_batch(current, actions.view())?;
        candidates.push(next);
    }
    Ok(candidates)
}

pub fn policy_rollout<M: TransitionModel + ?Sized, P: GoalPolicy + ?Sized>(
    model: &M,
    policy: &P,
    seed_state: &[f64],
    goal: &[f64],
    n: usize,
) -> Result<VirtualTrajectory> {
    let seeds = row_view(seed_state)?;
    let goals = row_view(goal)?;
    let states = rollout_batch(model, policy, seeds, goals, n)?
        .into_iter()
        .map(|m| m.row(0).to_vec())
        .collect();
    Ok(VirtualTrajectory {
        states,
        goal: goal.to_vec(),
    })
}

fn row_view(values: &[f64]) -> Result<ArrayView2<'_, f64>> {
    ArrayView2::from_shape((1, values.len()), values).map_err(|e| Error::Shape(e.to_string()))
}

pub(crate) fn stack_rows<'a, I>(rows: I, width: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a Vec<f64>>,
{
    let flat: Vec<f64> = rows.into_iter().flatten().copied().collect();
    let n = flat.len() / width.max(1);
    Array2::from_shape_vec((n, width), flat).expect("rows share one width")
}

/// Model-based relabeling.
///
/// Each row is relabeled with probability `p_relabel`: starting at its real
/// next state the current policy acts for `n` model steps under the row's
/// original goal, one of the `n + 1` candidates is picked uniformly and its
/// achieved goal becomes the new goal. Only goals are virtual; states, actions
/// and next states stay real.
pub fn mbr_relabel<M, P, R>(
    batch: Vec<Transition>,
    policy: &P,
    model: &M,
    env: &GoalEnvSpec,
    n: usize,
    p_relabel: f64,
    rng: &mut R,
) -> Result<RelabeledBatch>
where
    M: TransitionModel + ?Sized,
    P: GoalPolicy + ?Sized,
    R: Rng + ?Sized,
{
    ensure!(
        (0.0..=1.0).contains(&p_relabel),
        InvalidArgument,
        "relabel probability {p_relabel} outside [0, 1]"
    );
    let mut out = RelabeledBatch::unchanged(batch);
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for i in 0..out.len() {
        if rng.random::<f64>() < p_relabel {
            chosen.push((i, rng.random_range(0..=n)));
        }
    }
    if chosen.is_empty() {
        return Ok(out);
    }
    let seeds = stack_rows(chosen.iter().map(|&(i, _)| &out.rows[i].next_state), env.state_dim);
    let goals = stack_rows(chosen.iter().map(|&(i, _)| &out.rows[i].goal), env.goal_dim);
    let max_depth = chosen.iter().map(|&(_, j)| j).max().unwrap_or(0);
    let candidates = rollout_batch(model, policy, seeds.view(), goals.view(), max_depth)?;
    for (row, &(i, j)) in chosen.iter().enumerate() {
        let state = candidates[j].row(row).to_vec();
        let goal = env.phi(&state);
        out.set_goal(env, i, goal)?;
        out.candidate_index[i] = Some(j);
    }
    Ok(out)
}
