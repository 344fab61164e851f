use mher::dynamics::TransitionModel;
use mher::envs::{EnvKind, GoalEnvSpec};
use mher::harness::aggregate::median;
use mher::harness::{aggregate_files, run, stream_rng, Algo, AggregateStats, RunConfig, Stream, Trainer};
use mher::replay::RelabelMode;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(env: EnvKind, algo: Algo, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(env, algo);
    cfg.agent.hidden = vec![32, 32];
    cfg.model_layers = 2;
    cfg.model_width = 32;
    cfg.eval_episodes = 10;
    cfg.epochs = 3;
    cfg.seed = seed;
    cfg
}

/// Random-action transitions off the border, where `s' − s = a` exactly.
fn interior_held_out(env: &GoalEnvSpec, rows: usize, seed: u64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut a, mut n) = (Vec::new(), Vec::new(), Vec::new());
    let mut kept = 0;
    while kept < rows {
        let mut state = env.reset(&mut rng);
        for _ in 0..env.horizon {
            let action: Vec<f64> = (0..env.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let next = env.step(&state, &action).unwrap();
            let linear = (0..2).all(|j| (next.obs[j] - state.obs[j] - action[j]).abs() < 1e-12);
            if linear && kept < rows {
                s.extend_from_slice(&state.obs);
                a.extend_from_slice(&action);
                n.extend_from_slice(&next.obs);
                kept += 1;
            }
            state = next;
        }
    }
    (
        Array2::from_shape_vec((rows, env.state_dim), s).unwrap(),
        Array2::from_shape_vec((rows, env.action_dim), a).unwrap(),
        Array2::from_shape_vec((rows, env.state_dim), n).unwrap(),
    )
}

#[test]
fn warmup_model_is_accurate_on_point_dynamics() {
    let env = GoalEnvSpec::new(EnvKind::Point2DLarge);
    let (s, a, n) = interior_held_out(&env, 2000, 99);
    let mut errors = Vec::new();
    for seed in 0..5 {
        let mut cfg = RunConfig::new(EnvKind::Point2DLarge, Algo::Mher);
        cfg.seed = seed;
        let trainer = Trainer::new(cfg).unwrap();
        let model = trainer.model.as_ref().unwrap();
        errors.push(model.loss(s.view(), a.view(), n.view()).unwrap());
        let predicted = model.predict_next_batch(s.view(), a.view()).unwrap();
        assert_eq!(predicted.dim(), n.dim());
    }
    let mse = median(&errors);
    assert!(mse < 1e-2, "held-out mse {errors:?}");
}

#[test]
fn stream_labels_are_independent() {
    let mut a = stream_rng(5, Stream::Env);
    let mut b = stream_rng(5, Stream::Explore);
    let xs: Vec<u64> = (0..4).map(|_| a.random()).collect();
    let ys: Vec<u64> = (0..4).map(|_| b.random()).collect();
    assert_ne!(xs, ys);
    let mut again = stream_rng(5, Stream::Env);
    assert_eq!(xs, (0..4).map(|_| again.random()).collect::<Vec<u64>>());
}

#[test]
fn ablation_configs_share_the_plain_ddpg_trajectory() {
    // With no relabeling and no supervised term the MHER learner is DDPG.
    let ddpg = small(EnvKind::Point2DLarge, Algo::Ddpg, 3);
    let mut reduced = small(EnvKind::Point2DLarge, Algo::Mher, 3);
    reduced.agent.relabel_mode = RelabelMode::None;
    reduced.agent.alpha = 0.0;
    assert_eq!(run(&ddpg).unwrap().metrics, run(&reduced).unwrap().metrics);
}

#[test]
fn full_run_is_reproducible_and_files_aggregate() {
    let root = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for seed in 0..3 {
        let mut cfg = small(EnvKind::Point2DLarge, Algo::Her, seed);
        let dir = root.path().join(format!("seed{seed}"));
        cfg.out = Some(dir.clone());
        run(&cfg).unwrap();
        dirs.push(dir);
    }
    let mut cfg = small(EnvKind::Point2DLarge, Algo::Her, 0);
    let again = root.path().join("again");
    cfg.out = Some(again.clone());
    run(&cfg).unwrap();
    assert_eq!(
        std::fs::read(dirs[0].join("metrics.csv")).unwrap(),
        std::fs::read(again.join("metrics.csv")).unwrap()
    );

    let stats = aggregate_files(&dirs).unwrap();
    assert_eq!(stats.rows.len(), 3);
    for row in &stats.rows {
        assert!(row.q25 <= row.median && row.median <= row.q75);
        assert_eq!(row.seeds, 3);
    }
    let mut reversed = dirs.clone();
    reversed.reverse();
    assert_eq!(aggregate_files(&reversed).unwrap(), stats);

    let path = root.path().join("agg.csv");
    stats.write_csv(&path).unwrap();
    assert_eq!(AggregateStats::read_csv(&path).unwrap(), stats);
}

#[test]
fn misaligned_epoch_counts_are_rejected() {
    let root = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for (seed, epochs) in [(0, 2), (1, 3)] {
        let mut cfg = small(EnvKind::Point2DLarge, Algo::Ddpg, seed);
        cfg.epochs = epochs;
        let dir = root.path().join(format!("r{seed}"));
        cfg.out = Some(dir.clone());
        run(&cfg).unwrap();
        dirs.push(dir);
    }
    assert!(matches!(aggregate_files(&dirs), Err(mher::Error::Misaligned(_))));
}
