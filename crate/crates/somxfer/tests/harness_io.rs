//! Output and persistence contracts of the experiment harness.

use std::fs;
use std::path::Path;

use somxfer::harness::{
    load_som, load_value_function, run_transfer_experiment, save_som, save_value_function,
    ExperimentConfig, Strategy, TaskSelection,
};
use somxfer::{Error, LearningParams, SomGrid, TaskValueFunction, WeightVector};

fn tiny_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        tasks: TaskSelection::Explicit(vec!["1".into()]),
        strategies: vec![Strategy::EpsilonGreedy, Strategy::SomGuided],
        episodes: 3,
        runs: 3,
        eval_starts: 2,
        eval_steps: 10,
        step_cap: 80,
        master_seed: 5,
        out_dir: out.to_path_buf(),
        quiet: true,
        ..ExperimentConfig::default()
    }
}

fn csv_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn experiment_writes_one_csv_per_cell_plus_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_transfer_experiment(&tiny_config(dir.path())).unwrap();
    assert_eq!(records.len(), 6);
    assert_eq!(
        csv_names(dir.path()),
        [
            "1_egreedy_run1.csv",
            "1_egreedy_run2.csv",
            "1_egreedy_run3.csv",
            "1_som_run1.csv",
            "1_som_run2.csv",
            "1_som_run3.csv",
            "aggregate.csv",
        ]
    );
    let run_csv = fs::read_to_string(dir.path().join("1_som_run1.csv")).unwrap();
    let mut lines = run_csv.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert!(lines.next().unwrap().starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "episode,steps,online_return,eval_return,best_similarity,winner_index,som_side"
    );
    assert_eq!(lines.count(), 3);
}

/// Data rows of a run CSV, comment and header lines stripped.
fn parse_run_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("episode"))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn aggregate_matches_recomputation_from_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    run_transfer_experiment(&cfg).unwrap();

    let mean_std = |values: &[f64]| {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    };

    let aggregate = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let mut lines = aggregate.lines();
    assert_eq!(
        lines.next().unwrap(),
        "task,strategy,episode,mean_online_return,std_online_return,mean_eval_return,std_eval_return"
    );
    let mut checked = 0;
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        let (task, strategy, episode) = (parts[0], parts[1], parts[2].parse::<usize>().unwrap());
        let per_run: Vec<Vec<Vec<String>>> = (1..=cfg.runs)
            .map(|run| parse_run_rows(&dir.path().join(format!("{task}_{strategy}_run{run}.csv"))))
            .collect();
        let online: Vec<f64> = per_run
            .iter()
            .map(|rows| rows[episode - 1][2].parse().unwrap())
            .collect();
        let eval: Vec<f64> = per_run
            .iter()
            .map(|rows| rows[episode - 1][3].parse().unwrap())
            .collect();
        let (mo, so) = mean_std(&online);
        let (me, se) = mean_std(&eval);
        for (got, want) in [(parts[3], mo), (parts[4], so), (parts[5], me), (parts[6], se)] {
            assert!(
                (got.parse::<f64>().unwrap() - want).abs() <= 1e-9 * want.abs().max(1.0),
                "aggregate {task}/{strategy} episode {episode}: {got} vs recomputed {want}"
            );
        }
        checked += 1;
    }
    // Two (task, strategy) cells, three episodes each.
    assert_eq!(checked, 6);
}

#[test]
fn zero_epsilon_strategies_share_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.learning = LearningParams {
        epsilon: 0.0,
        ..LearningParams::default()
    };
    cfg.runs = 2;
    cfg.episodes = 4;
    let records = run_transfer_experiment(&cfg).unwrap();

    // With no exploratory branch left, matched seeds must produce the same
    // trajectories whether or not a map is attached.
    for run in 1..=cfg.runs {
        let find = |s: Strategy| {
            records
                .iter()
                .find(|r| r.strategy == s && r.run == run)
                .unwrap()
        };
        let eg = find(Strategy::EpsilonGreedy);
        let som = find(Strategy::SomGuided);
        for (a, b) in eg.rows.iter().zip(&som.rows) {
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.online_return, b.online_return);
            assert_eq!(a.eval_return, b.eval_return);
            assert!(a.best_similarity.is_none());
            assert!(b.best_similarity.is_some());
        }
    }
}

#[test]
fn map_side_never_shrinks_over_a_task_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        tasks: TaskSelection::Explicit(vec!["1".into(), "2".into(), "3".into()]),
        strategies: vec![Strategy::SomGuided],
        episodes: 3,
        runs: 1,
        eval_starts: 2,
        eval_steps: 10,
        step_cap: 80,
        master_seed: 5,
        out_dir: dir.path().to_path_buf(),
        quiet: true,
        ..ExperimentConfig::default()
    };
    let records = run_transfer_experiment(&cfg).unwrap();
    let sides: Vec<usize> = records
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.som_side.unwrap()))
        .collect();
    assert_eq!(sides[0], cfg.gsom.initial_side);
    assert!(sides.windows(2).all(|w| w[1] >= w[0]), "sides {sides:?}");
}

#[test]
fn ppr_is_not_a_transfer_experiment_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.strategies.push(Strategy::Ppr);
    assert!(matches!(
        run_transfer_experiment(&cfg),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn som_files_reject_truncation_version_skew_and_bad_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let mut grid = SomGrid::random(2, 3, 0.3, 17).unwrap();
    let probe = WeightVector::new(vec![1.0, 0.5, 0.25]).unwrap();
    let winner = grid.find_winner(&probe).unwrap();
    grid.accumulate_error(&probe, winner).unwrap();

    let path = dir.path().join("map.json");
    save_som(&grid, &path).unwrap();
    let loaded = load_som(&path).unwrap();
    assert_eq!(loaded.errors(), grid.errors());

    let text = fs::read_to_string(&path).unwrap();

    let truncated = dir.path().join("truncated.json");
    fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_som(&truncated), Err(Error::Format { .. })));

    let skewed = dir.path().join("skewed.json");
    fs::write(&skewed, text.replace("\"format_version\": 1", "\"format_version\": 999")).unwrap();
    assert!(matches!(
        load_som(&skewed),
        Err(Error::UnsupportedVersion { found: 999, .. })
    ));

    let mis_shaped = dir.path().join("shape.json");
    fs::write(&mis_shaped, text.replace("\"side\": 2", "\"side\": 3")).unwrap();
    assert!(matches!(load_som(&mis_shaped), Err(Error::Format { .. })));
}

#[test]
fn value_function_files_round_trip_and_reject_bad_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let weights = WeightVector::new((0..24).map(|i| i as f64 / 7.0).collect()).unwrap();
    let vf = TaskValueFunction::from_weights(weights, 4, 6).unwrap();
    let path = dir.path().join("vf.json");
    save_value_function(&vf, "3", &path).unwrap();

    let (task_id, loaded) = load_value_function(&path).unwrap();
    assert_eq!(task_id, "3");
    assert_eq!(loaded.n_actions(), 4);
    assert_eq!(loaded.n_features(), 6);
    assert_eq!(loaded.weights().as_slice(), vf.weights().as_slice());

    let text = fs::read_to_string(&path).unwrap();

    let skewed = dir.path().join("skewed.json");
    fs::write(&skewed, text.replace("\"format_version\": 1", "\"format_version\": 999")).unwrap();
    assert!(matches!(
        load_value_function(&skewed),
        Err(Error::UnsupportedVersion { found: 999, .. })
    ));

    let mis_shaped = dir.path().join("shape.json");
    fs::write(&mis_shaped, text.replace("\"n_features\": 6", "\"n_features\": 5")).unwrap();
    assert!(matches!(
        load_value_function(&mis_shaped),
        Err(Error::Format { .. })
    ));
}

#[test]
fn shipped_configs_load_and_mirror_the_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let desk = ExperimentConfig::load(&root.join("configs/desk.json")).unwrap();
    assert_eq!(desk, ExperimentConfig::default());

    let eps_beta = ExperimentConfig::load(&root.join("configs/eps_beta.json")).unwrap();
    assert_eq!(
        eps_beta.strategies,
        [Strategy::EpsilonGreedy, Strategy::EpsilonBetaGreedy]
    );
    assert_eq!(eps_beta.learning.beta, 0.2);
    assert_eq!(eps_beta.episodes, 200);
}

#[test]
fn experiment_config_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    let cfg = ExperimentConfig::default();
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
}
