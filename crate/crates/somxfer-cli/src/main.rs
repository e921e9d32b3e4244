use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use somxfer::harness::{
    self, discover_tasks, load_som, load_value_function, run_ppr_comparison,
    run_scaling_experiment, run_transfer_experiment, save_som, save_value_function, som_summary,
    write_run_csv, write_som_summary_csv, DiscoverSpec, ExperimentConfig, ScalingConfig, Strategy,
};
use somxfer::{
    derive_seed, evaluate_policy, learn_task, learn_task_ppr, EvalSpec, LearnSpec, LearningParams,
    NavEnv, PprParams, SomGrid, TaskObjective, TaskValueFunction,
};

#[derive(Parser)]
#[command(name = "somxfer", version, about = "Store task knowledge in a growing map and reuse it to explore")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random-walk the world and cluster stimulus signatures into tasks
    Discover(DiscoverArgs),
    /// Learn one task, optionally against a stored map
    Learn(LearnArgs),
    /// Run the config-driven multi-strategy transfer experiment
    Experiment(ExperimentArgs),
    /// Track map size while incorporating a stream of task weight vectors
    Scaling(ScalingArgs),
    /// Race SOM-guided exploration against policy reuse on the final task
    ComparePpr(ExperimentArgs),
    /// Evaluate a stored value function greedily
    Eval(EvalArgs),
    /// Label every map node with its most similar task
    SomSummary(SomSummaryArgs),
}

#[derive(Args)]
struct DiscoverArgs {
    /// World layout JSON; omit for the built-in world
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Keep the cluster covering the no-stimulus signature
    #[arg(long)]
    keep_background: bool,
    /// Write the discovered tasks as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    /// Goal id registered in the world
    #[arg(long)]
    task: String,
    #[arg(long)]
    world: Option<PathBuf>,
    /// egreedy, som, eps-beta or ppr
    #[arg(long, default_value = "egreedy")]
    strategy: String,
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[arg(long, default_value_t = 2000)]
    step_cap: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Load the map from this file instead of starting fresh
    #[arg(long)]
    som_in: Option<PathBuf>,
    /// Fold the learned task into the map and save it here
    #[arg(long)]
    som_out: Option<PathBuf>,
    /// Save the learned value function here
    #[arg(long)]
    vf_out: Option<PathBuf>,
    /// Library value functions for the ppr strategy (repeatable)
    #[arg(long = "lib")]
    library: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    eval_starts: usize,
    #[arg(long, default_value_t = 100)]
    eval_steps: usize,
    /// Write the per-episode CSV here
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON; omit for the desk-scale defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// 1000 episodes, 10 runs, evaluation over 100 starts
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    tasks: usize,
    /// Growth threshold (repeatable)
    #[arg(long = "gt", default_values_t = [0.2, 0.3, 0.5])]
    gts: Vec<f64>,
    /// Mix a few learned anchors instead of learning every task
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 4)]
    anchors: usize,
    #[arg(long, default_value_t = 40)]
    anchor_episodes: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    task: String,
    /// Value function JSON saved by learn --vf-out
    #[arg(long)]
    vf: PathBuf,
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    starts: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SomSummaryArgs {
    #[arg(long)]
    som: PathBuf,
    /// Task weight vectors as id=path (repeatable)
    #[arg(long = "vf", value_parser = parse_vf_entry)]
    vfs: Vec<(String, PathBuf)>,
    /// Write CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_vf_entry(raw: &str) -> Result<(String, PathBuf), String> {
    match raw.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => {
            Ok((id.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected id=path, got {raw:?}")),
    }
}

fn load_env(world: &Option<PathBuf>) -> Result<NavEnv> {
    Ok(match world {
        Some(path) => NavEnv::load(path).context("loading world layout")?,
        None => NavEnv::default_world(),
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Discover(args) => discover(args),
        Command::Learn(args) => learn(args),
        Command::Experiment(args) => experiment(args),
        Command::Scaling(args) => scaling(args),
        Command::ComparePpr(args) => compare_ppr(args),
        Command::Eval(args) => eval(args),
        Command::SomSummary(args) => summary(args),
    }
}

fn discover(args: DiscoverArgs) -> Result<()> {
    let env = load_env(&args.world)?;
    let spec = DiscoverSpec {
        steps: args.steps,
        ignore_background: !args.keep_background,
        ..DiscoverSpec::default()
    };
    let (model, tasks) = discover_tasks(&env, &spec, args.seed)?;
    println!(
        "discovered {} task(s) from {} cluster(s)",
        tasks.len(),
        model.clusters().len()
    );
    for t in &tasks {
        let signature: Vec<String> = t.centroid.iter().map(|v| format!("{v:.2}")).collect();
        println!("  {}: centroid [{}]", t.id, signature.join(", "));
    }
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&tasks)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn learn(args: LearnArgs) -> Result<()> {
    let env = load_env(&args.world)?;
    env.goal(&args.task)?;
    let strategy: Strategy = args.strategy.parse()?;
    let task = TaskObjective::Goal(args.task.clone());
    let params = LearningParams {
        epsilon: args.epsilon,
        beta: args.beta,
        ..LearningParams::default()
    };
    let spec = LearnSpec {
        mode: match strategy {
            Strategy::EpsilonGreedy | Strategy::Ppr => somxfer::ExplorationMode::EpsilonGreedy,
            Strategy::SomGuided => somxfer::ExplorationMode::SomGuided,
            Strategy::EpsilonBetaGreedy => somxfer::ExplorationMode::EpsilonBetaGreedy,
        },
        params,
        n_episodes: args.episodes,
        step_cap: args.step_cap,
        eval: Some(EvalSpec {
            n_starts: args.eval_starts,
            n_steps: args.eval_steps,
            seed_base: derive_seed(args.seed, "eval"),
        }),
    };
    let gsom = harness::desk_gsom_params();
    let dim = somxfer::env::N_ACTIONS * env.feature_len();
    let mut som = match (&args.som_in, strategy) {
        (Some(path), _) => Some(load_som(path)?),
        (None, Strategy::SomGuided | Strategy::EpsilonBetaGreedy) => Some(SomGrid::random(
            gsom.initial_side,
            dim,
            gsom.growth_threshold,
            derive_seed(args.seed, "som/init"),
        )?),
        (None, _) if args.som_out.is_some() => Some(SomGrid::random(
            gsom.initial_side,
            dim,
            gsom.growth_threshold,
            derive_seed(args.seed, "som/init"),
        )?),
        _ => None,
    };

    let (vf, rows) = match strategy {
        Strategy::Ppr => {
            if args.library.is_empty() {
                bail!("the ppr strategy needs at least one --lib value function");
            }
            let library: Vec<TaskValueFunction> = args
                .library
                .iter()
                .map(|p| Ok(load_value_function(p)?.1))
                .collect::<Result<_>>()?;
            learn_task_ppr(
                &env,
                &task,
                &library,
                &PprParams::default(),
                &spec,
                args.seed,
            )?
        }
        _ => learn_task(&env, &task, som.as_ref(), &spec, args.seed)?,
    };

    if let Some(grid) = som.as_mut() {
        grid.incorporate(vf.weights(), &gsom, derive_seed(args.seed, "incorporate"))?;
        if !args.quiet {
            eprintln!("[somxfer] map side after incorporation: {}", grid.side());
        }
    }
    if let Some(path) = &args.som_out {
        let grid = som.as_ref().expect("som exists whenever som_out is set");
        save_som(grid, path)?;
    }
    if let Some(path) = &args.vf_out {
        save_value_function(&vf, &args.task, path)?;
    }
    if let Some(path) = &args.out {
        write_run_csv(path, &rows)?;
    }
    let last = rows.last().expect("episodes >= 1");
    println!(
        "task {} ({}): final eval return {:.2} after {} episodes",
        args.task,
        strategy,
        last.eval_return.unwrap_or(f64::NAN),
        rows.len()
    );
    Ok(())
}

fn load_experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    if args.paper_scale {
        cfg = cfg.paper_scale();
    }
    cfg.quiet |= args.quiet;
    Ok(cfg)
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let cfg = load_experiment_config(&args)?;
    let records = run_transfer_experiment(&cfg)?;
    println!(
        "wrote {} run file(s) and aggregate.csv to {}",
        records.len(),
        harness::resolve_out_dir(&cfg.out_dir).display()
    );
    Ok(())
}

fn compare_ppr(args: ExperimentArgs) -> Result<()> {
    let cfg = load_experiment_config(&args)?;
    let records = run_ppr_comparison(&cfg)?;
    let final_mean = |s: Strategy| {
        let finals: Vec<f64> = records
            .iter()
            .filter(|r| r.strategy == s)
            .filter_map(|r| r.rows.last().and_then(|row| row.eval_return))
            .collect();
        finals.iter().sum::<f64>() / finals.len() as f64
    };
    println!(
        "final eval return, mean over {} run(s): som {:.2}, ppr {:.2} (ppr_compare.csv written to {})",
        cfg.runs,
        final_mean(Strategy::SomGuided),
        final_mean(Strategy::Ppr),
        harness::resolve_out_dir(&cfg.out_dir).display()
    );
    Ok(())
}

fn scaling(args: ScalingArgs) -> Result<()> {
    let cfg = ScalingConfig {
        world: args.world,
        n_tasks: args.tasks,
        gts: args.gts,
        synthetic: args.synthetic,
        anchors: args.anchors,
        anchor_episodes: args.anchor_episodes,
        master_seed: args.seed,
        out_dir: args.out_dir,
        quiet: args.quiet,
        ..ScalingConfig::default()
    };
    let rows = run_scaling_experiment(&cfg)?;
    for gt in &cfg.gts {
        if let Some(last) = rows
            .iter()
            .filter(|r| r.gt == *gt)
            .max_by_key(|r| r.tasks_incorporated)
        {
            println!(
                "G_T {}: {} nodes after {} tasks",
                gt, last.node_count, last.tasks_incorporated
            );
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let env = load_env(&args.world)?;
    env.goal(&args.task)?;
    let (_, vf) = load_value_function(&args.vf)?;
    let avg = evaluate_policy(
        &env,
        &TaskObjective::Goal(args.task.clone()),
        &vf,
        args.starts,
        args.steps,
        args.seed,
    )?;
    println!(
        "task {}: average return {avg} over {} greedy start(s) of {} step(s)",
        args.task, args.starts, args.steps
    );
    Ok(())
}

fn summary(args: SomSummaryArgs) -> Result<()> {
    let grid = load_som(&args.som)?;
    if args.vfs.is_empty() {
        bail!("som-summary needs at least one --vf id=path");
    }
    let tasks: Vec<(String, somxfer::WeightVector)> = args
        .vfs
        .iter()
        .map(|(id, path)| Ok((id.clone(), load_value_function(path)?.1.weights().clone())))
        .collect::<Result<_>>()?;
    let rows = som_summary(&grid, &tasks)?;
    match &args.out {
        Some(path) => write_som_summary_csv(path, &rows)?,
        None => {
            println!("node_row,node_col,task_id,similarity");
            for r in &rows {
                println!("{},{},{},{}", r.node_row, r.node_col, r.task_id, r.similarity);
            }
        }
    }
    Ok(())
}
