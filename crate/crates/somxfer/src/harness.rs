//! Experiment drivers, artifact persistence and CSV reporting.
//!
//! Everything the CLI does goes through here: the transfer experiment
//! (several exploration strategies over a task sequence, with the SOM folded
//! forward after every task), the policy-reuse comparison, the map-scaling
//! study, task discovery by random walk, and the JSON/CSV file formats.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{
    learn_task, learn_task_ppr, EpisodeRow, EvalSpec, ExplorationMode, LearnSpec, LearningParams,
    PprParams, TaskObjective, TaskValueFunction,
};
use crate::discovery::{tasks_from_clusters, ClusterModel, ClusterTask};
use crate::env::{GoalRegion, NavEnv, N_ACTIONS};
use crate::error::{Error, Result};
use crate::gsom::{GsomParams, SomGrid};
use crate::seeding;
use crate::similarity::{cosine_similarity, WeightVector};

/// Exploration strategy names as they appear in configs, CLI flags and CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "egreedy")]
    EpsilonGreedy,
    #[serde(rename = "som")]
    SomGuided,
    #[serde(rename = "eps-beta")]
    EpsilonBetaGreedy,
    #[serde(rename = "ppr")]
    Ppr,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::EpsilonGreedy => "egreedy",
            Strategy::SomGuided => "som",
            Strategy::EpsilonBetaGreedy => "eps-beta",
            Strategy::Ppr => "ppr",
        }
    }

    fn exploration_mode(&self) -> Option<ExplorationMode> {
        match self {
            Strategy::EpsilonGreedy => Some(ExplorationMode::EpsilonGreedy),
            Strategy::SomGuided => Some(ExplorationMode::SomGuided),
            Strategy::EpsilonBetaGreedy => Some(ExplorationMode::EpsilonBetaGreedy),
            Strategy::Ppr => None,
        }
    }

    fn uses_som(&self) -> bool {
        matches!(self, Strategy::SomGuided | Strategy::EpsilonBetaGreedy)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "egreedy" => Ok(Strategy::EpsilonGreedy),
            "som" => Ok(Strategy::SomGuided),
            "eps-beta" => Ok(Strategy::EpsilonBetaGreedy),
            "ppr" => Ok(Strategy::Ppr),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy {other:?}; expected egreedy, som, eps-beta or ppr"
            ))),
        }
    }
}

/// Random-walk task discovery settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoverSpec {
    /// Total observations to stream into the cluster model.
    pub steps: usize,
    /// Restart the walk from a fresh random state this often (0 = never).
    pub restart_every: usize,
    pub k_std: f64,
    pub var0: f64,
    /// Drop the cluster that covers the no-stimulus signature.
    pub ignore_background: bool,
}

impl Default for DiscoverSpec {
    fn default() -> Self {
        DiscoverSpec {
            steps: 20_000,
            restart_every: 250,
            k_std: 2.0,
            var0: 0.05,
            ignore_background: true,
        }
    }
}

/// The task sequence of an experiment: named goal regions, or clusters
/// discovered by a random walk before any learning starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskSelection {
    Explicit(Vec<String>),
    Discover(DiscoverSpec),
}

/// Grid parameters tuned for the shipped experiments.
///
/// Differs from `GsomParams::default()` in three ways. The stock tau2
/// freezes kappa within the first couple of iterations of a pass, which
/// leaves the map unable to absorb anything. The stock sigma0 dwarfs the
/// small grids these runs produce, so every node would chase every input and
/// the map would collapse into near-identical blends; a neighborhood on the
/// order of the grid side keeps updates local and lets nodes specialize.
/// The side cap keeps incorporation cost bounded over long task sequences.
pub fn desk_gsom_params() -> GsomParams {
    GsomParams {
        sigma0: 2.0,
        tau2: 250.0,
        max_side: Some(10),
        ..GsomParams::default()
    }
}

/// Full configuration of a transfer experiment; the JSON config file mirrors
/// this struct field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// World layout file; `None` uses the built-in default world.
    pub world: Option<PathBuf>,
    pub tasks: TaskSelection,
    pub strategies: Vec<Strategy>,
    pub episodes: usize,
    pub runs: usize,
    pub eval_starts: usize,
    pub eval_steps: usize,
    pub step_cap: usize,
    pub master_seed: u64,
    pub learning: LearningParams,
    pub gsom: GsomParams,
    pub ppr: PprParams,
    pub out_dir: PathBuf,
    /// Suppress progress lines on stderr.
    pub quiet: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: None,
            tasks: TaskSelection::Explicit(
                ["1", "2", "3", "4", "5"].map(String::from).to_vec(),
            ),
            strategies: vec![Strategy::EpsilonGreedy, Strategy::SomGuided],
            episodes: 200,
            runs: 5,
            eval_starts: 100,
            eval_steps: 100,
            step_cap: 2000,
            master_seed: 7,
            learning: LearningParams::default(),
            gsom: desk_gsom_params(),
            ppr: PprParams::default(),
            out_dir: PathBuf::from("out"),
            quiet: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Scales the run up to the full protocol: 1000 episodes, 10 runs,
    /// evaluation over 100 starts of 100 steps.
    pub fn paper_scale(mut self) -> Self {
        self.episodes = 1000;
        self.runs = 10;
        self.eval_starts = 100;
        self.eval_steps = 100;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.episodes == 0 {
            return Err(Error::InvalidParameter(
                "runs and episodes must be >= 1".into(),
            ));
        }
        if self.eval_starts == 0 || self.eval_steps == 0 {
            return Err(Error::InvalidParameter(
                "eval_starts and eval_steps must be >= 1".into(),
            ));
        }
        if self.step_cap == 0 {
            return Err(Error::InvalidParameter("step_cap must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::EmptyCandidates("no strategies configured"));
        }
        if let TaskSelection::Explicit(ids) = &self.tasks {
            if ids.is_empty() {
                return Err(Error::EmptyCandidates("no tasks configured"));
            }
        }
        if let Some(world) = &self.world {
            if !world.exists() {
                return Err(Error::Io {
                    path: world.clone(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "world file not found",
                    ),
                });
            }
        }
        self.learning.validate()?;
        self.gsom.validate()?;
        self.ppr.validate()
    }

    fn env(&self) -> Result<NavEnv> {
        match &self.world {
            Some(path) => NavEnv::load(path),
            None => Ok(NavEnv::default_world()),
        }
    }
}

/// All per-episode rows of one (task, strategy, run) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub task: String,
    pub strategy: Strategy,
    /// 1-based run index.
    pub run: usize,
    pub rows: Vec<EpisodeRow>,
}

/// Walks the world at random, streaming stimulus signatures into a cluster
/// model; returns the model and the surviving candidate tasks.
pub fn discover_tasks(
    env: &NavEnv,
    spec: &DiscoverSpec,
    seed: u64,
) -> Result<(ClusterModel, Vec<ClusterTask>)> {
    if spec.steps == 0 {
        return Err(Error::InvalidParameter("discovery needs steps >= 1".into()));
    }
    let mut model = ClusterModel::new(spec.k_std, spec.var0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = env.sample_free_state(&mut rng)?;
    for step in 0..spec.steps {
        if spec.restart_every > 0 && step % spec.restart_every == 0 {
            s = env.sample_free_state(&mut rng)?;
        }
        model.observe(&env.env_features(&s))?;
        let action = rng.gen_range(0..N_ACTIONS);
        s = env.step(&s, action).0;
    }
    let mut tasks = tasks_from_clusters(&model);
    if spec.ignore_background {
        tasks.retain(|t| !t.is_background());
    }
    Ok((model, tasks))
}

fn resolve_objectives(cfg: &ExperimentConfig, env: &NavEnv) -> Result<Vec<TaskObjective>> {
    match &cfg.tasks {
        TaskSelection::Explicit(ids) => ids
            .iter()
            .map(|id| {
                env.goal(id)?;
                Ok(TaskObjective::Goal(id.clone()))
            })
            .collect(),
        TaskSelection::Discover(spec) => {
            let (_, tasks) =
                discover_tasks(env, spec, seeding::derive(cfg.master_seed, "discover"))?;
            if tasks.is_empty() {
                return Err(Error::EmptyCandidates("discovery produced no tasks"));
            }
            Ok(tasks.into_iter().map(TaskObjective::Cluster).collect())
        }
    }
}

/// Sub-seed for one component of one task cell, shared across strategies so
/// that matched runs see matched streams.
fn task_seed(master: u64, component: &str, task: &str, run: usize) -> u64 {
    seeding::mix(
        seeding::derive(master, &format!("{component}/{task}")),
        run as u64,
    )
}

/// Runs every configured strategy over the task sequence.
///
/// Each (strategy, run) pair learns the tasks in order with its own map where
/// the strategy uses one, folding each finished task's weights into it.
/// Writes one CSV per (task, strategy, run) plus `aggregate.csv`.
pub fn run_transfer_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.strategies.contains(&Strategy::Ppr) {
        return Err(Error::InvalidParameter(
            "the ppr strategy runs under compare-ppr, not experiment".into(),
        ));
    }
    let env = cfg.env()?;
    let objectives = resolve_objectives(cfg, &env)?;
    let units: Vec<(Strategy, usize)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| (1..=cfg.runs).map(move |r| (s, r)))
        .collect();
    let nested: Vec<Vec<RunRecord>> = units
        .par_iter()
        .map(|&(strategy, run)| run_task_sequence(&env, &objectives, cfg, strategy, run))
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = nested.into_iter().flatten().collect();

    let out = resolve_out_dir(&cfg.out_dir);
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    for rec in &records {
        write_run_csv(&out.join(run_csv_name(rec)), &rec.rows)?;
    }
    write_aggregate_csv(&out.join("aggregate.csv"), &records)?;
    Ok(records)
}

fn run_task_sequence(
    env: &NavEnv,
    objectives: &[TaskObjective],
    cfg: &ExperimentConfig,
    strategy: Strategy,
    run: usize,
) -> Result<Vec<RunRecord>> {
    let mode = strategy
        .exploration_mode()
        .ok_or_else(|| Error::InvalidParameter("ppr has no step-level exploration mode".into()))?;
    let dim = N_ACTIONS * env.feature_len();
    let mut som = if strategy.uses_som() {
        Some(SomGrid::random(
            cfg.gsom.initial_side,
            dim,
            cfg.gsom.growth_threshold,
            seeding::mix(seeding::derive(cfg.master_seed, "som/init"), run as u64),
        )?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(objectives.len());
    for obj in objectives {
        let spec = LearnSpec {
            mode,
            params: cfg.learning,
            n_episodes: cfg.episodes,
            step_cap: cfg.step_cap,
            eval: Some(EvalSpec {
                n_starts: cfg.eval_starts,
                n_steps: cfg.eval_steps,
                seed_base: task_seed(cfg.master_seed, "eval", obj.id(), run),
            }),
        };
        let (vf, rows) = learn_task(
            env,
            obj,
            som.as_ref(),
            &spec,
            task_seed(cfg.master_seed, "learn", obj.id(), run),
        )?;
        if let Some(grid) = som.as_mut() {
            grid.incorporate(
                vf.weights(),
                &cfg.gsom,
                task_seed(cfg.master_seed, "incorporate", obj.id(), run),
            )?;
        }
        if !cfg.quiet {
            eprintln!(
                "[somxfer] {strategy} run {run} task {}: {} episodes{}",
                obj.id(),
                rows.len(),
                som.as_ref()
                    .map(|g| format!(", map side {}", g.side()))
                    .unwrap_or_default()
            );
        }
        records.push(RunRecord {
            task: obj.id().to_string(),
            strategy,
            run,
            rows,
        });
    }
    Ok(records)
}

/// Learns a library on all tasks but the last, then races a SOM-guided
/// learner against policy reuse on the last task with matched seeds.
///
/// Both arms see exactly the library's knowledge: the reuse learner gets the
/// value functions verbatim, the SOM learner gets them folded into a fresh
/// map. Writes `ppr_compare.csv` with mean and std curves per strategy.
pub fn run_ppr_comparison(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let env = cfg.env()?;
    let objectives = resolve_objectives(cfg, &env)?;
    if objectives.len() < 2 {
        return Err(Error::InvalidParameter(
            "compare-ppr needs at least two tasks: a library and a target".into(),
        ));
    }
    let (target, library_objs) = objectives.split_last().expect("checked non-empty");
    let dim = N_ACTIONS * env.feature_len();

    let nested: Vec<Vec<RunRecord>> = (1..=cfg.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<RunRecord>> {
            let lib_spec = LearnSpec {
                mode: ExplorationMode::EpsilonGreedy,
                params: cfg.learning,
                n_episodes: cfg.episodes,
                step_cap: cfg.step_cap,
                eval: None,
            };
            let mut library = Vec::with_capacity(library_objs.len());
            for obj in library_objs {
                let (vf, _) = learn_task(
                    &env,
                    obj,
                    None,
                    &lib_spec,
                    task_seed(cfg.master_seed, "learn", obj.id(), run),
                )?;
                library.push(vf);
            }
            let mut som = SomGrid::random(
                cfg.gsom.initial_side,
                dim,
                cfg.gsom.growth_threshold,
                seeding::mix(seeding::derive(cfg.master_seed, "som/init"), run as u64),
            )?;
            for (obj, vf) in library_objs.iter().zip(&library) {
                som.incorporate(
                    vf.weights(),
                    &cfg.gsom,
                    task_seed(cfg.master_seed, "incorporate", obj.id(), run),
                )?;
            }
            let spec = LearnSpec {
                mode: ExplorationMode::SomGuided,
                params: cfg.learning,
                n_episodes: cfg.episodes,
                step_cap: cfg.step_cap,
                eval: Some(EvalSpec {
                    n_starts: cfg.eval_starts,
                    n_steps: cfg.eval_steps,
                    seed_base: task_seed(cfg.master_seed, "eval", target.id(), run),
                }),
            };
            let seed = task_seed(cfg.master_seed, "learn", target.id(), run);
            let (_, som_rows) = learn_task(&env, target, Some(&som), &spec, seed)?;
            let (_, ppr_rows) = learn_task_ppr(&env, target, &library, &cfg.ppr, &spec, seed)?;
            if !cfg.quiet {
                eprintln!(
                    "[somxfer] compare-ppr run {run}: target {} done",
                    target.id()
                );
            }
            Ok(vec![
                RunRecord {
                    task: target.id().to_string(),
                    strategy: Strategy::SomGuided,
                    run,
                    rows: som_rows,
                },
                RunRecord {
                    task: target.id().to_string(),
                    strategy: Strategy::Ppr,
                    run,
                    rows: ppr_rows,
                },
            ])
        })
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = nested.into_iter().flatten().collect();

    let out = resolve_out_dir(&cfg.out_dir);
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    write_ppr_csv(&out.join("ppr_compare.csv"), &records)?;
    Ok(records)
}

/// Map-scaling study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub world: Option<PathBuf>,
    /// How many task weight vectors to incorporate per growth threshold.
    pub n_tasks: usize,
    pub gts: Vec<f64>,
    /// Synthesize tasks as convex mixtures of a few learned anchors instead
    /// of learning every task from scratch.
    pub synthetic: bool,
    pub anchors: usize,
    pub anchor_episodes: usize,
    pub anchor_step_cap: usize,
    pub master_seed: u64,
    pub learning: LearningParams,
    pub gsom: GsomParams,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            world: None,
            n_tasks: 100,
            gts: vec![0.2, 0.3, 0.5],
            synthetic: true,
            anchors: 4,
            anchor_episodes: 40,
            anchor_step_cap: 400,
            master_seed: 7,
            learning: LearningParams::default(),
            gsom: GsomParams {
                max_side: None,
                ..desk_gsom_params()
            },
            out_dir: PathBuf::from("out"),
            quiet: false,
        }
    }
}

/// Node count after each incorporation, per growth threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub gt: f64,
    pub tasks_incorporated: usize,
    pub node_count: usize,
}

/// Incorporates one shared stream of task weight vectors into a fresh map
/// per growth threshold and tracks the node count; writes `scaling.csv`.
pub fn run_scaling_experiment(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.n_tasks == 0 {
        return Err(Error::InvalidParameter("n_tasks must be >= 1".into()));
    }
    if cfg.gts.is_empty() {
        return Err(Error::EmptyCandidates("no growth thresholds"));
    }
    if cfg.gts.iter().any(|gt| !(*gt > 0.0)) {
        return Err(Error::InvalidParameter(
            "growth thresholds must be positive".into(),
        ));
    }
    if cfg.synthetic && cfg.anchors == 0 {
        return Err(Error::InvalidParameter(
            "synthetic mode needs anchors >= 1".into(),
        ));
    }
    cfg.learning.validate()?;
    cfg.gsom.validate()?;
    let env = match &cfg.world {
        Some(path) => NavEnv::load(path)?,
        None => NavEnv::default_world(),
    };
    let stream = build_task_stream(&env, cfg)?;
    let dim = N_ACTIONS * env.feature_len();
    let init_seed = seeding::derive(cfg.master_seed, "scaling/som-init");
    let incorporate_base = seeding::derive(cfg.master_seed, "scaling/incorporate");

    let nested: Vec<Vec<ScalingRow>> = cfg
        .gts
        .par_iter()
        .map(|&gt| -> Result<Vec<ScalingRow>> {
            let params = GsomParams {
                growth_threshold: gt,
                ..cfg.gsom.clone()
            };
            let mut som = SomGrid::random(params.initial_side, dim, gt, init_seed)?;
            let mut rows = Vec::with_capacity(stream.len());
            for (k, w) in stream.iter().enumerate() {
                som.incorporate(w, &params, seeding::mix(incorporate_base, k as u64))?;
                rows.push(ScalingRow {
                    gt,
                    tasks_incorporated: k + 1,
                    node_count: som.node_count(),
                });
            }
            if !cfg.quiet {
                eprintln!(
                    "[somxfer] scaling G_T {gt}: {} tasks -> {} nodes",
                    stream.len(),
                    som.node_count()
                );
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ScalingRow> = nested.into_iter().flatten().collect();

    let out = resolve_out_dir(&cfg.out_dir);
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let mut buf = String::from("gt,tasks_incorporated,node_count\n");
    for r in &rows {
        buf.push_str(&format!("{},{},{}\n", r.gt, r.tasks_incorporated, r.node_count));
    }
    fs::write(out.join("scaling.csv"), buf).map_err(|e| Error::Io {
        path: out.join("scaling.csv"),
        source: e,
    })?;
    Ok(rows)
}

/// The shared stream of task weight vectors for the scaling study: either one
/// small-budget learned policy per randomly placed goal, or convex mixtures
/// of a few such anchors.
fn build_task_stream(env: &NavEnv, cfg: &ScalingConfig) -> Result<Vec<WeightVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(cfg.master_seed, "scaling/stream"));
    let n_anchors = if cfg.synthetic { cfg.anchors } else { cfg.n_tasks };
    let mut anchors = Vec::with_capacity(n_anchors);
    for k in 0..n_anchors {
        anchors.push(learn_random_goal_task(env, cfg, k, &mut rng)?);
        if !cfg.quiet {
            eprintln!("[somxfer] scaling anchor {}/{n_anchors} learned", k + 1);
        }
    }
    if !cfg.synthetic {
        return Ok(anchors);
    }
    let dim = anchors[0].len();
    let mut stream = Vec::with_capacity(cfg.n_tasks);
    for _ in 0..cfg.n_tasks {
        let mut coefs: Vec<f64> = (0..anchors.len()).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = coefs.iter().sum();
        for c in &mut coefs {
            *c /= total;
        }
        let mut w = vec![0.0; dim];
        for (c, anchor) in coefs.iter().zip(&anchors) {
            for (wi, ai) in w.iter_mut().zip(anchor.iter()) {
                *wi += c * ai;
            }
        }
        stream.push(WeightVector::new(w)?);
    }
    Ok(stream)
}

fn learn_random_goal_task(
    env: &NavEnv,
    cfg: &ScalingConfig,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<WeightVector> {
    let pos = env.sample_free_state(rng)?;
    let id = format!("scaling-{k}");
    let mut layout = env.layout().clone();
    layout.goals.insert(
        id.clone(),
        GoalRegion {
            x: pos.x,
            y: pos.y,
            r: 3.0,
        },
    );
    let goal_env = NavEnv::from_layout(layout)?;
    let spec = LearnSpec {
        mode: ExplorationMode::EpsilonGreedy,
        params: cfg.learning,
        n_episodes: cfg.anchor_episodes,
        step_cap: cfg.anchor_step_cap,
        eval: None,
    };
    let (vf, _) = learn_task(&goal_env, &TaskObjective::Goal(id), None, &spec, rng.gen())?;
    Ok(vf.weights().clone())
}

/// Output directory, honoring the `SOMXFER_OUT` override.
pub fn resolve_out_dir(configured: &Path) -> PathBuf {
    match std::env::var_os("SOMXFER_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

fn safe_component(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn run_csv_name(rec: &RunRecord) -> String {
    format!(
        "{}_{}_run{}.csv",
        safe_component(&rec.task),
        rec.strategy,
        rec.run
    )
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one run's per-episode rows.
///
/// Returns are undiscounted sums; `eval_return` averages greedy rollouts from
/// random starts. Absent map columns stay empty.
pub fn write_run_csv(path: &Path, rows: &[EpisodeRow]) -> Result<()> {
    let mut buf = String::from(
        "# returns are undiscounted sums; eval_return averages greedy rollouts from random starts;\n\
         # best_similarity/winner_index snapshot the SOM match as each episode begins\n",
    );
    buf.push_str("episode,steps,online_return,eval_return,best_similarity,winner_index,som_side\n");
    for r in rows {
        buf.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.episode,
            r.steps,
            r.online_return,
            fmt_opt_f64(r.eval_return),
            fmt_opt_f64(r.best_similarity),
            fmt_opt_usize(r.winner_index),
            fmt_opt_usize(r.som_side),
        ));
    }
    fs::write(path, buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn group_cells<'a>(
    records: &'a [RunRecord],
) -> Vec<((Strategy, &'a str), Vec<&'a RunRecord>)> {
    let mut cells: Vec<((Strategy, &str), Vec<&RunRecord>)> = Vec::new();
    for rec in records {
        let key = (rec.strategy, rec.task.as_str());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(rec),
            None => cells.push((key, vec![rec])),
        }
    }
    cells
}

/// Writes per-episode mean and population std over runs, one block per
/// (task, strategy) cell in first-appearance order.
pub fn write_aggregate_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut buf = String::from(
        "task,strategy,episode,mean_online_return,std_online_return,mean_eval_return,std_eval_return\n",
    );
    for ((strategy, task), members) in group_cells(records) {
        let episodes = members[0].rows.len();
        for ep in 0..episodes {
            let online: Vec<f64> = members.iter().map(|m| m.rows[ep].online_return).collect();
            let eval: Vec<f64> = members
                .iter()
                .map(|m| {
                    m.rows[ep]
                        .eval_return
                        .expect("experiment rows always carry an eval return")
                })
                .collect();
            let (mo, so) = mean_std(&online);
            let (me, se) = mean_std(&eval);
            buf.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                task,
                strategy,
                ep + 1,
                mo,
                so,
                me,
                se
            ));
        }
    }
    fs::write(path, buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_ppr_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut buf = String::from("episode,strategy,mean_return,std_return\n");
    for ((strategy, _), members) in group_cells(records) {
        let episodes = members[0].rows.len();
        for ep in 0..episodes {
            let eval: Vec<f64> = members
                .iter()
                .map(|m| {
                    m.rows[ep]
                        .eval_return
                        .expect("comparison rows always carry an eval return")
                })
                .collect();
            let (mean, std) = mean_std(&eval);
            buf.push_str(&format!("{},{},{},{}\n", ep + 1, strategy, mean, std));
        }
    }
    fs::write(path, buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub const SOM_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct SomFile {
    format_version: u64,
    side: usize,
    dim: usize,
    nodes: Vec<Vec<f64>>,
    error: Vec<f64>,
    growth_threshold: f64,
}

pub fn save_som(grid: &SomGrid, path: &Path) -> Result<()> {
    let file = SomFile {
        format_version: SOM_FORMAT_VERSION,
        side: grid.side(),
        dim: grid.dim(),
        nodes: grid.nodes().iter().map(|n| n.to_vec()).collect(),
        error: grid.errors().to_vec(),
        growth_threshold: grid.growth_threshold(),
    };
    write_json(path, &file)
}

pub fn load_som(path: &Path) -> Result<SomGrid> {
    let file: SomFile = read_json(path)?;
    if file.format_version != SOM_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: file.format_version,
        });
    }
    let nodes = file
        .nodes
        .into_iter()
        .map(WeightVector::new)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: format!("nodes: {e}"),
        })?;
    SomGrid::from_parts(file.side, file.dim, nodes, file.error, file.growth_threshold).map_err(
        |e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        },
    )
}

pub const VF_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct VfFile {
    format_version: u64,
    task_id: String,
    n_actions: usize,
    n_features: usize,
    weights: Vec<f64>,
}

pub fn save_value_function(vf: &TaskValueFunction, task_id: &str, path: &Path) -> Result<()> {
    let file = VfFile {
        format_version: VF_FORMAT_VERSION,
        task_id: task_id.to_string(),
        n_actions: vf.n_actions(),
        n_features: vf.n_features(),
        weights: vf.weights().to_vec(),
    };
    write_json(path, &file)
}

pub fn load_value_function(path: &Path) -> Result<(String, TaskValueFunction)> {
    let file: VfFile = read_json(path)?;
    if file.format_version != VF_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: file.format_version,
        });
    }
    let weights = WeightVector::new(file.weights).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: format!("weights: {e}"),
    })?;
    let vf = TaskValueFunction::from_weights(weights, file.n_actions, file.n_features).map_err(
        |e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        },
    )?;
    Ok((file.task_id, vf))
}

/// One map node matched to its most similar task weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SomSummaryRow {
    pub node_row: usize,
    pub node_col: usize,
    pub task_id: String,
    pub similarity: f64,
}

/// Labels every node with the task whose weights it resembles most.
pub fn som_summary(
    grid: &SomGrid,
    tasks: &[(String, WeightVector)],
) -> Result<Vec<SomSummaryRow>> {
    if tasks.is_empty() {
        return Err(Error::EmptyCandidates("no task weight vectors to match"));
    }
    let mut rows = Vec::with_capacity(grid.node_count());
    for (i, node) in grid.nodes().iter().enumerate() {
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (j, (_, w)) in tasks.iter().enumerate() {
            let sim = cosine_similarity(node, w)?.value;
            if sim > best_sim {
                best_sim = sim;
                best = j;
            }
        }
        let (node_row, node_col) = grid.coords(i);
        rows.push(SomSummaryRow {
            node_row,
            node_col,
            task_id: tasks[best].0.clone(),
            similarity: best_sim,
        });
    }
    Ok(rows)
}

pub fn write_som_summary_csv(path: &Path, rows: &[SomSummaryRow]) -> Result<()> {
    let mut buf = String::from("node_row,node_col,task_id,similarity\n");
    for r in rows {
        buf.push_str(&format!(
            "{},{},{},{}\n",
            r.node_row, r.node_col, r.task_id, r.similarity
        ));
    }
    fs::write(path, buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::EpsilonGreedy,
            Strategy::SomGuided,
            Strategy::EpsilonBetaGreedy,
            Strategy::Ppr,
        ] {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
            assert_eq!(serde_json::from_str::<Strategy>(&json).unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn task_selection_parses_both_shapes() {
        let explicit: TaskSelection = serde_json::from_str(r#"["1", "2"]"#).unwrap();
        assert_eq!(
            explicit,
            TaskSelection::Explicit(vec!["1".into(), "2".into()])
        );
        let discover: TaskSelection = serde_json::from_str(r#"{"steps": 500}"#).unwrap();
        match discover {
            TaskSelection::Discover(spec) => {
                assert_eq!(spec.steps, 500);
                assert_eq!(spec.k_std, DiscoverSpec::default().k_std);
            }
            other => panic!("parsed as {other:?}"),
        }
    }

    #[test]
    fn experiment_config_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let sparse: ExperimentConfig = serde_json::from_str(r#"{"episodes": 7}"#).unwrap();
        assert_eq!(sparse.episodes, 7);
        assert_eq!(sparse.runs, cfg.runs);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let cfg = ExperimentConfig {
            runs: 0,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            strategies: vec![],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            world: Some(PathBuf::from("/nonexistent/world.json")),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mean_std_match_naive_formulas() {
        let values = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        let (mean, std) = mean_std(&values);
        assert!((mean - 5.0).abs() < 1e-12);
        assert!((std - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_name_sanitizes_path_hostile_ids() {
        let rec = RunRecord {
            task: "a/b c".into(),
            strategy: Strategy::SomGuided,
            run: 3,
            rows: vec![],
        };
        assert_eq!(run_csv_name(&rec), "a-b-c_som_run3.csv");
    }

    #[test]
    fn out_dir_override_comes_from_the_environment() {
        let configured = PathBuf::from("cfg-out");
        std::env::remove_var("SOMXFER_OUT");
        assert_eq!(resolve_out_dir(&configured), configured);
        std::env::set_var("SOMXFER_OUT", "/tmp/somxfer-override");
        assert_eq!(
            resolve_out_dir(&configured),
            PathBuf::from("/tmp/somxfer-override")
        );
        std::env::remove_var("SOMXFER_OUT");
    }

    #[test]
    fn discovery_on_the_default_world_finds_landmark_tasks() {
        let env = NavEnv::default_world();
        let spec = DiscoverSpec {
            steps: 4000,
            ..DiscoverSpec::default()
        };
        let (model, tasks) = discover_tasks(&env, &spec, 11).unwrap();
        assert!(!model.clusters().is_empty());
        assert!(tasks.iter().all(|t| !t.is_background()));
        // Binary signatures and a tight band mean every distinct visited
        // signature forms its own cluster, so centroids stay exactly binary.
        for t in &tasks {
            assert!(t.centroid.iter().all(|v| *v == 0.0 || *v == 1.0));
        }
        let (model2, _) = discover_tasks(&env, &spec, 11).unwrap();
        assert_eq!(model, model2);
    }
}
