//! Linear value functions, Watkins Q(lambda) learning and the exploration
//! strategies that can steer it: plain epsilon-greedy, SOM-advised
//! exploration, the combined epsilon-beta scheme, and policy reuse over an
//! explicit library.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discovery::ClusterTask;
use crate::env::{AgentState, NavEnv, GOAL_REWARD, N_ACTIONS};
use crate::error::{Error, Result};
use crate::gsom::SomGrid;
use crate::seeding;
use crate::similarity::{cosine_similarity, WeightVector};

/// Action-value function linear in the state features, one weight block per
/// action.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskValueFunction {
    weights: WeightVector,
    n_actions: usize,
    n_features: usize,
}

impl TaskValueFunction {
    pub fn zeros(n_actions: usize, n_features: usize) -> Self {
        assert!(n_actions > 0 && n_features > 0);
        TaskValueFunction {
            weights: WeightVector::zeros(n_actions * n_features),
            n_actions,
            n_features,
        }
    }

    pub fn from_weights(weights: WeightVector, n_actions: usize, n_features: usize) -> Result<Self> {
        if n_actions == 0 || n_features == 0 {
            return Err(Error::InvalidParameter(
                "n_actions and n_features must be >= 1".into(),
            ));
        }
        if weights.len() != n_actions * n_features {
            return Err(Error::DimensionMismatch {
                expected: n_actions * n_features,
                found: weights.len(),
            });
        }
        Ok(TaskValueFunction {
            weights,
            n_actions,
            n_features,
        })
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Q(s, a) for every action.
    pub fn q_values(&self, features: &WeightVector) -> Result<Vec<f64>> {
        q_values_from(&self.weights, self.n_actions, self.n_features, features)
    }

    /// Greedy action; ties take the lowest index.
    pub fn greedy_action(&self, features: &WeightVector) -> Result<usize> {
        Ok(argmax(&self.q_values(features)?))
    }
}

fn q_values_from(
    weights: &[f64],
    n_actions: usize,
    n_features: usize,
    features: &WeightVector,
) -> Result<Vec<f64>> {
    if features.len() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: features.len(),
        });
    }
    let mut q = Vec::with_capacity(n_actions);
    for a in 0..n_actions {
        let block = &weights[a * n_features..(a + 1) * n_features];
        q.push(block.iter().zip(features.iter()).map(|(w, x)| w * x).sum());
    }
    Ok(q)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        if *v > best_v {
            best_v = *v;
            best = i;
        }
    }
    best
}

/// Learning and exploration parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// Extra SOM-advice probability for the epsilon-beta scheme.
    pub beta: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            alpha: 0.3,
            gamma: 0.9,
            lambda: 0.9,
            epsilon: 0.3,
            beta: 0.0,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter("alpha must be in (0, 1]".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter("gamma must be in [0, 1)".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter("lambda must be in [0, 1]".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter("epsilon must be in [0, 1]".into()));
        }
        if !(self.beta >= 0.0 && self.beta <= 1.0) || self.epsilon + self.beta > 1.0 {
            return Err(Error::InvalidParameter(
                "beta must be in [0, 1] with epsilon + beta <= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Policy-reuse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PprParams {
    /// Initial reuse probability.
    pub psi0: f64,
    /// Per-step (and per-episode) decay of the reuse probability.
    pub nu: f64,
    /// Initial softmax temperature over library returns.
    pub tau0: f64,
    /// Per-episode temperature increment.
    pub dtau: f64,
}

impl Default for PprParams {
    fn default() -> Self {
        PprParams {
            psi0: 1.0,
            nu: 0.95,
            tau0: 0.0,
            dtau: 0.05,
        }
    }
}

impl PprParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.psi0 >= 0.0 && self.psi0 <= 1.0) {
            return Err(Error::InvalidParameter("psi0 must be in [0, 1]".into()));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidParameter("nu must be in (0, 1]".into()));
        }
        if !(self.tau0 >= 0.0) || !(self.dtau >= 0.0) {
            return Err(Error::InvalidParameter(
                "tau0 and dtau must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// How exploratory actions are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExplorationMode {
    /// With probability epsilon, a uniform random action.
    #[serde(rename = "egreedy")]
    EpsilonGreedy,
    /// With probability epsilon, the greedy action of the most similar SOM
    /// node.
    #[serde(rename = "som")]
    SomGuided,
    /// Random with probability epsilon, SOM-advised with probability beta,
    /// greedy otherwise.
    #[serde(rename = "eps-beta")]
    EpsilonBetaGreedy,
}

/// Which branch produced an action. A SOM consultation reports the advising
/// node and its similarity so callers can track advice quality over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdviceSource {
    Greedy,
    Random,
    Som { winner: usize, similarity: f64 },
}

/// Draws one action under the given exploration mode.
///
/// The SOM is consulted only when the advice branch actually fires; the
/// advising node is re-selected on every call because the value function
/// changes between steps.
pub fn select_action<R: Rng>(
    vf: &TaskValueFunction,
    features: &WeightVector,
    som: Option<&SomGrid>,
    mode: ExplorationMode,
    p: &LearningParams,
    rng: &mut R,
) -> Result<(usize, AdviceSource)> {
    let u: f64 = rng.gen();
    match mode {
        ExplorationMode::EpsilonGreedy => {
            if u < p.epsilon {
                Ok((rng.gen_range(0..vf.n_actions), AdviceSource::Random))
            } else {
                Ok((vf.greedy_action(features)?, AdviceSource::Greedy))
            }
        }
        ExplorationMode::SomGuided => {
            if u < p.epsilon {
                som_advice(vf, features, som)
            } else {
                Ok((vf.greedy_action(features)?, AdviceSource::Greedy))
            }
        }
        ExplorationMode::EpsilonBetaGreedy => {
            if u < p.epsilon {
                Ok((rng.gen_range(0..vf.n_actions), AdviceSource::Random))
            } else if u < p.epsilon + p.beta {
                som_advice(vf, features, som)
            } else {
                Ok((vf.greedy_action(features)?, AdviceSource::Greedy))
            }
        }
    }
}

fn som_advice(
    vf: &TaskValueFunction,
    features: &WeightVector,
    som: Option<&SomGrid>,
) -> Result<(usize, AdviceSource)> {
    let som = som.ok_or(Error::EmptyCandidates(
        "SOM advice requested without a map",
    ))?;
    let winner = som.find_winner(vf.weights())?;
    let node = &som.nodes()[winner];
    let similarity = cosine_similarity(vf.weights(), node)?.value;
    let action = argmax(&q_values_from(
        node,
        vf.n_actions,
        vf.n_features,
        features,
    )?);
    Ok((action, AdviceSource::Som { winner, similarity }))
}

/// The advice context a learning episode starts from: the best-matching node
/// for the weights as they stand before the episode's first update.
fn advice_snapshot(vf: &TaskValueFunction, som: Option<&SomGrid>) -> Result<SomSnapshot> {
    match som {
        Some(g) => {
            let winner = g.find_winner(vf.weights())?;
            let similarity = cosine_similarity(vf.weights(), &g.nodes()[winner])?.value;
            Ok(SomSnapshot {
                best_similarity: Some(similarity),
                winner_index: Some(winner),
                som_side: Some(g.side()),
            })
        }
        None => Ok(SomSnapshot::default()),
    }
}

#[derive(Debug, Default)]
struct SomSnapshot {
    best_similarity: Option<f64>,
    winner_index: Option<usize>,
    som_side: Option<usize>,
}

/// One experienced transition. `next_features: None` marks a terminal step.
#[derive(Debug)]
pub struct Transition<'a> {
    pub features: &'a WeightVector,
    pub action: usize,
    pub reward: f64,
    pub next_features: Option<&'a WeightVector>,
}

/// Watkins Q(lambda) update with replacing traces; returns the TD error.
///
/// The trace carried in from earlier steps survives (decayed by
/// gamma * lambda) only if the action being updated is greedy under the
/// current value function; an exploratory action cuts it. The taken action's
/// feature block is then written into the trace, and the weights move by
/// alpha * delta along the trace.
pub fn td_update(
    vf: &mut TaskValueFunction,
    eligibility: &mut WeightVector,
    t: &Transition<'_>,
    p: &LearningParams,
) -> Result<f64> {
    if t.action >= vf.n_actions {
        return Err(Error::InvalidParameter(format!(
            "action {} out of range for {} actions",
            t.action, vf.n_actions
        )));
    }
    if eligibility.len() != vf.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: vf.weights.len(),
            found: eligibility.len(),
        });
    }
    let q_s = vf.q_values(t.features)?;
    let q_sa = q_s[t.action];
    let was_greedy = q_sa == q_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let decay = if was_greedy { p.gamma * p.lambda } else { 0.0 };
    for e in eligibility.as_mut_slice() {
        *e *= decay;
    }
    let offset = t.action * vf.n_features;
    {
        let e = eligibility.as_mut_slice();
        for (k, x) in t.features.iter().enumerate() {
            if *x != 0.0 {
                e[offset + k] = *x;
            }
        }
    }
    let target = match t.next_features {
        Some(next) => {
            let q_next = vf.q_values(next)?;
            t.reward + p.gamma * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }
        None => t.reward,
    };
    let delta = target - q_sa;
    let step = p.alpha * delta;
    for (w, e) in vf.weights.as_mut_slice().iter_mut().zip(eligibility.iter()) {
        *w += step * e;
    }
    Ok(delta)
}

/// What the agent is trying to reach: a registered goal region or a
/// discovered stimulus-signature cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskObjective {
    Goal(String),
    Cluster(ClusterTask),
}

impl TaskObjective {
    pub fn id(&self) -> &str {
        match self {
            TaskObjective::Goal(id) => id,
            TaskObjective::Cluster(t) => &t.id,
        }
    }

    pub fn is_terminal(&self, env: &NavEnv, s: &AgentState) -> Result<bool> {
        match self {
            TaskObjective::Goal(id) => env.is_terminal(id, s),
            TaskObjective::Cluster(t) => Ok(t.matches(&env.env_features(s))),
        }
    }

    pub fn reward(&self, env: &NavEnv, s_next: &AgentState, collided: bool) -> Result<f64> {
        match self {
            TaskObjective::Goal(id) => env.reward(id, s_next, collided),
            TaskObjective::Cluster(_) => {
                if self.is_terminal(env, s_next)? {
                    Ok(GOAL_REWARD)
                } else if collided {
                    Ok(crate::env::COLLISION_PENALTY)
                } else {
                    Ok(crate::env::LIVING_PENALTY)
                }
            }
        }
    }
}

/// Greedy evaluation settings applied after each learning episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub n_starts: usize,
    pub n_steps: usize,
    /// Base seed; episode k evaluates with a sub-seed mixed from it.
    pub seed_base: u64,
}

/// Everything a learning run needs besides the environment and task.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnSpec {
    pub mode: ExplorationMode,
    pub params: LearningParams,
    pub n_episodes: usize,
    /// Hard per-episode step limit.
    pub step_cap: usize,
    pub eval: Option<EvalSpec>,
}

impl Default for LearnSpec {
    fn default() -> Self {
        LearnSpec {
            mode: ExplorationMode::EpsilonGreedy,
            params: LearningParams::default(),
            n_episodes: 200,
            step_cap: 2000,
            eval: None,
        }
    }
}

/// Per-episode metrics. The SOM columns are present only when the run had a
/// map to compare against.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    /// 1-based episode index.
    pub episode: usize,
    pub steps: usize,
    pub online_return: f64,
    pub eval_return: Option<f64>,
    /// Cosine similarity between the weights entering this episode and their
    /// best-matching node, so the first row reflects the untrained start.
    pub best_similarity: Option<f64>,
    /// The node advising at the start of this episode.
    pub winner_index: Option<usize>,
    pub som_side: Option<usize>,
}

/// Learns one task from scratch and reports per-episode metrics.
pub fn learn_task(
    env: &NavEnv,
    task: &TaskObjective,
    som: Option<&SomGrid>,
    spec: &LearnSpec,
    seed: u64,
) -> Result<(TaskValueFunction, Vec<EpisodeRow>)> {
    spec.params.validate()?;
    if spec.n_episodes == 0 || spec.step_cap == 0 {
        return Err(Error::InvalidParameter(
            "n_episodes and step_cap must be >= 1".into(),
        ));
    }
    let mut vf = TaskValueFunction::zeros(N_ACTIONS, env.feature_len());
    if let Some(g) = som {
        if g.dim() != vf.weights().len() {
            return Err(Error::DimensionMismatch {
                expected: vf.weights().len(),
                found: g.dim(),
            });
        }
    }
    if matches!(
        spec.mode,
        ExplorationMode::SomGuided | ExplorationMode::EpsilonBetaGreedy
    ) && som.is_none()
    {
        return Err(Error::EmptyCandidates("SOM-guided mode requires a map"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(spec.n_episodes);
    for ep in 1..=spec.n_episodes {
        let snapshot = advice_snapshot(&vf, som)?;
        let (steps, online_return) = learning_episode(env, task, &mut vf, som, spec, &mut rng)?;
        rows.push(finish_episode(
            env,
            task,
            &vf,
            spec,
            ep,
            steps,
            online_return,
            snapshot,
        )?);
    }
    Ok((vf, rows))
}

fn learning_episode<R: Rng>(
    env: &NavEnv,
    task: &TaskObjective,
    vf: &mut TaskValueFunction,
    som: Option<&SomGrid>,
    spec: &LearnSpec,
    rng: &mut R,
) -> Result<(usize, f64)> {
    let mut s = env.sample_free_state(rng)?;
    if task.is_terminal(env, &s)? {
        return Ok((0, GOAL_REWARD));
    }
    let mut eligibility = WeightVector::zeros(vf.weights().len());
    let mut features = env.full_features(&s);
    let mut online_return = 0.0;
    let mut steps = 0;
    loop {
        let (action, _) = select_action(vf, &features, som, spec.mode, &spec.params, rng)?;
        let (s_next, collided) = env.step(&s, action);
        let reward = task.reward(env, &s_next, collided)?;
        let terminal = task.is_terminal(env, &s_next)?;
        let next_features = if terminal {
            None
        } else {
            Some(env.full_features(&s_next))
        };
        td_update(
            vf,
            &mut eligibility,
            &Transition {
                features: &features,
                action,
                reward,
                next_features: next_features.as_ref(),
            },
            &spec.params,
        )?;
        online_return += reward;
        steps += 1;
        if terminal || steps >= spec.step_cap {
            return Ok((steps, online_return));
        }
        s = s_next;
        features = next_features.expect("non-terminal step has features");
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_episode(
    env: &NavEnv,
    task: &TaskObjective,
    vf: &TaskValueFunction,
    spec: &LearnSpec,
    episode: usize,
    steps: usize,
    online_return: f64,
    snapshot: SomSnapshot,
) -> Result<EpisodeRow> {
    let eval_return = match &spec.eval {
        Some(e) => Some(evaluate_policy(
            env,
            task,
            vf,
            e.n_starts,
            e.n_steps,
            seeding::mix(e.seed_base, episode as u64),
        )?),
        None => None,
    };
    Ok(EpisodeRow {
        episode,
        steps,
        online_return,
        eval_return,
        best_similarity: snapshot.best_similarity,
        winner_index: snapshot.winner_index,
        som_side: snapshot.som_side,
    })
}

/// Average undiscounted return of the greedy policy over random starts.
///
/// Each rollout runs until the goal or `n_steps`; a start already inside the
/// goal scores the goal reward outright.
pub fn evaluate_policy(
    env: &NavEnv,
    task: &TaskObjective,
    vf: &TaskValueFunction,
    n_starts: usize,
    n_steps: usize,
    seed: u64,
) -> Result<f64> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_starts {
        let mut s = env.sample_free_state(&mut rng)?;
        if task.is_terminal(env, &s)? {
            total += GOAL_REWARD;
            continue;
        }
        let mut ret = 0.0;
        for _ in 0..n_steps {
            let action = vf.greedy_action(&env.full_features(&s))?;
            let (s_next, collided) = env.step(&s, action);
            ret += task.reward(env, &s_next, collided)?;
            s = s_next;
            if task.is_terminal(env, &s)? {
                break;
            }
        }
        total += ret;
    }
    Ok(total / n_starts as f64)
}

/// Softmax selection weights over library average returns: p_j is
/// proportional to exp(tau * W_j), so tau = 0 is uniform and larger tau
/// concentrates on the best-performing policy.
pub fn library_selection_probs(avg_returns: &[f64], tau: f64) -> Vec<f64> {
    assert!(!avg_returns.is_empty());
    let max = avg_returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = avg_returns.iter().map(|w| (tau * (w - max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One policy-reuse action draw: the active library policy's greedy action
/// with probability psi, an epsilon-greedy action on the current value
/// function otherwise.
pub fn ppr_select_action<R: Rng>(
    current: &TaskValueFunction,
    library: &[TaskValueFunction],
    active: usize,
    features: &WeightVector,
    psi: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if library.is_empty() {
        return Err(Error::EmptyCandidates("empty policy library"));
    }
    assert!(active < library.len(), "active library index out of range");
    if rng.gen::<f64>() < psi {
        library[active].greedy_action(features)
    } else if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..current.n_actions))
    } else {
        current.greedy_action(features)
    }
}

/// Learns a task while reusing a library of past policies.
///
/// Each episode picks one library policy by softmax over running average
/// returns (temperature tau0 + dtau per episode), starts the reuse
/// probability at psi0 * nu^episode and decays it by nu per step.
pub fn learn_task_ppr(
    env: &NavEnv,
    task: &TaskObjective,
    library: &[TaskValueFunction],
    ppr: &PprParams,
    spec: &LearnSpec,
    seed: u64,
) -> Result<(TaskValueFunction, Vec<EpisodeRow>)> {
    spec.params.validate()?;
    ppr.validate()?;
    if library.is_empty() {
        return Err(Error::EmptyCandidates("empty policy library"));
    }
    let mut vf = TaskValueFunction::zeros(N_ACTIONS, env.feature_len());
    for policy in library {
        if policy.weights().len() != vf.weights().len() {
            return Err(Error::DimensionMismatch {
                expected: vf.weights().len(),
                found: policy.weights().len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut avg_returns = vec![0.0f64; library.len()];
    let mut uses = vec![0u64; library.len()];
    let mut rows = Vec::with_capacity(spec.n_episodes);
    for ep in 1..=spec.n_episodes {
        let tau = ppr.tau0 + ppr.dtau * (ep - 1) as f64;
        let probs = library_selection_probs(&avg_returns, tau);
        let active = sample_index(&probs, &mut rng);
        let mut psi = ppr.psi0 * ppr.nu.powi(ep as i32 - 1);

        let mut s = env.sample_free_state(&mut rng)?;
        let mut online_return = 0.0;
        let mut steps = 0;
        if task.is_terminal(env, &s)? {
            online_return = GOAL_REWARD;
        } else {
            let mut eligibility = WeightVector::zeros(vf.weights().len());
            let mut features = env.full_features(&s);
            loop {
                let action =
                    ppr_select_action(&vf, library, active, &features, psi, spec.params.epsilon, &mut rng)?;
                psi *= ppr.nu;
                let (s_next, collided) = env.step(&s, action);
                let reward = task.reward(env, &s_next, collided)?;
                let terminal = task.is_terminal(env, &s_next)?;
                let next_features = if terminal {
                    None
                } else {
                    Some(env.full_features(&s_next))
                };
                td_update(
                    &mut vf,
                    &mut eligibility,
                    &Transition {
                        features: &features,
                        action,
                        reward,
                        next_features: next_features.as_ref(),
                    },
                    &spec.params,
                )?;
                online_return += reward;
                steps += 1;
                if terminal || steps >= spec.step_cap {
                    break;
                }
                s = s_next;
                features = next_features.expect("non-terminal step has features");
            }
        }
        avg_returns[active] = (avg_returns[active] * uses[active] as f64 + online_return)
            / (uses[active] + 1) as f64;
        uses[active] += 1;
        rows.push(finish_episode(
            env,
            task,
            &vf,
            spec,
            ep,
            steps,
            online_return,
            SomSnapshot::default(),
        )?);
    }
    Ok((vf, rows))
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
