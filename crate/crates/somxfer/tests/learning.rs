//! Learning-loop checks against a closed-form oracle and the bundled world.

use std::collections::{BTreeMap, BTreeSet};

use somxfer::env::{GoalRegion, Stimulus, WorldLayout};
use somxfer::harness::{discover_tasks, DiscoverSpec};
use somxfer::{learn_task, ExplorationMode, LearnSpec, LearningParams, NavEnv, TaskObjective};

/// A one-unit-high strip. Every northward or diagonal move from the center
/// line leaves the world and is cancelled, so the reachable dynamics collapse
/// to east, west and stay, and shortest paths have a closed form.
fn corridor() -> NavEnv {
    NavEnv::from_layout(WorldLayout {
        width: 50.0,
        height: 1.0,
        obstacles: vec![],
        stimuli: vec![Stimulus {
            x: 5.0,
            y: 0.5,
            r: 1.5,
        }],
        goals: BTreeMap::from([(
            "east".to_string(),
            GoalRegion {
                x: 47.5,
                y: 0.5,
                r: 3.0,
            },
        )]),
        bins_per_dim: 50,
        dt: 0.2,
        speed: 6.0,
    })
    .unwrap()
}

#[test]
fn corridor_policy_reaches_the_shortest_path_count() {
    let env = corridor();
    let task = TaskObjective::Goal("east".to_string());
    let spec = LearnSpec {
        mode: ExplorationMode::EpsilonGreedy,
        params: LearningParams::default(),
        n_episodes: 400,
        step_cap: 250,
        eval: None,
    };
    let (vf, _) = learn_task(&env, &task, None, &spec, 11).unwrap();

    // The goal region reaches down to x = 44.5 on the center line and each
    // step moves at most 1.2 east, so ceil((44.5 - x0) / 1.2) lower-bounds the
    // step count from any start. The starts are chosen so that the quotient
    // never falls near an integer and float drift cannot flip the ceiling.
    let mut optimal = 0;
    for i in 0..14 {
        let x0 = 1.0 + 3.0 * i as f64;
        let oracle = ((44.5 - x0) / 1.2).ceil() as usize;
        let mut s = env.make_state(x0, 0.5).unwrap();
        let mut steps = None;
        for k in 1..=200usize {
            let a = vf.greedy_action(&env.full_features(&s)).unwrap();
            s = env.step(&s, a).0;
            if task.is_terminal(&env, &s).unwrap() {
                steps = Some(k);
                break;
            }
        }
        let steps = steps.unwrap_or(usize::MAX);
        assert!(
            steps >= oracle,
            "start {x0}: {steps} steps beats the physical bound {oracle}"
        );
        if steps == oracle {
            optimal += 1;
        }
    }
    assert!(optimal >= 13, "only {optimal}/14 starts took the shortest path");
}

#[test]
fn random_walk_discovery_finds_the_five_goal_signatures() {
    let env = NavEnv::default_world();
    let (model, tasks) = discover_tasks(&env, &DiscoverSpec::default(), 7).unwrap();

    // The walk must have seen the background signature too; it is filtered
    // from the task list but stays in the model.
    assert!(model.clusters().len() > tasks.len());
    assert_eq!(tasks.len(), 5);

    let signatures: BTreeSet<Vec<u8>> = tasks
        .iter()
        .map(|t| t.centroid.iter().map(|v| v.round() as u8).collect())
        .collect();
    let expected: BTreeSet<Vec<u8>> = [
        vec![1, 0, 0, 0],
        vec![1, 0, 0, 1],
        vec![0, 0, 0, 1],
        vec![0, 1, 0, 0],
        vec![0, 0, 1, 0],
    ]
    .into_iter()
    .collect();
    assert_eq!(signatures, expected);

    // Each discovered task should recognize the goal region it came from.
    for id in ["1", "2", "3", "4", "5"] {
        let g = *env.goal(id).unwrap();
        let f = env.env_features(&somxfer::AgentState { x: g.x, y: g.y });
        let matching = tasks.iter().filter(|t| t.matches(&f)).count();
        assert_eq!(matching, 1, "goal {id} matched {matching} discovered tasks");
    }
}
