//! Simulated 2-D navigation environment.
//!
//! The agent moves through a bounded rectangle with axis-aligned rectangular
//! obstacles. Circular stimulus regions produce binary proximity flags, and
//! per-task circular goal regions define rewards: +100 on reaching the goal,
//! -100 on a collision, -10 per step otherwise.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::WeightVector;

pub const GOAL_REWARD: f64 = 100.0;
pub const COLLISION_PENALTY: f64 = -100.0;
pub const LIVING_PENALTY: f64 = -10.0;

/// Eight compass moves plus stay-in-place.
pub const N_ACTIONS: usize = 9;

/// Unit displacement per action: E, NE, N, NW, W, SW, S, SE, stay.
const DIRECTIONS: [(f64, f64); N_ACTIONS] = [
    (1.0, 0.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (0.0, 1.0),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-1.0, 0.0),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (0.0, 0.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x <= self.x + self.w && y >= self.y && y <= self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

/// On-disk description of a world; see `data/default_world.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldLayout {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Rect>,
    pub stimuli: Vec<Stimulus>,
    pub goals: BTreeMap<String, GoalRegion>,
    pub bins_per_dim: usize,
    pub dt: f64,
    pub speed: f64,
}

/// Continuous agent position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
}

/// A validated world the agent can act in.
#[derive(Debug, Clone, PartialEq)]
pub struct NavEnv {
    layout: WorldLayout,
    step_len: f64,
}

impl NavEnv {
    pub fn from_layout(layout: WorldLayout) -> Result<Self> {
        if !(layout.width > 0.0) || !(layout.height > 0.0) {
            return Err(Error::InvalidParameter(
                "width and height must be positive".into(),
            ));
        }
        if layout.bins_per_dim == 0 {
            return Err(Error::InvalidParameter("bins_per_dim must be >= 1".into()));
        }
        if !(layout.dt > 0.0) || !(layout.speed > 0.0) {
            return Err(Error::InvalidParameter("dt and speed must be positive".into()));
        }
        for (i, rect) in layout.obstacles.iter().enumerate() {
            if !(rect.w > 0.0) || !(rect.h > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "obstacles[{i}]: w and h must be positive"
                )));
            }
        }
        for (i, s) in layout.stimuli.iter().enumerate() {
            if !(s.r > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "stimuli[{i}]: r must be positive"
                )));
            }
            if !(0.0..=layout.width).contains(&s.x) || !(0.0..=layout.height).contains(&s.y) {
                return Err(Error::InvalidParameter(format!(
                    "stimuli[{i}]: center outside world bounds"
                )));
            }
        }
        for (id, g) in &layout.goals {
            if !(g.r > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "goals[{id:?}]: r must be positive"
                )));
            }
            if !(0.0..=layout.width).contains(&g.x) || !(0.0..=layout.height).contains(&g.y) {
                return Err(Error::InvalidParameter(format!(
                    "goals[{id:?}]: center outside world bounds"
                )));
            }
        }
        let step_len = layout.speed * layout.dt;
        Ok(NavEnv { layout, step_len })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let layout: WorldLayout = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        NavEnv::from_layout(layout).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    /// The bundled five-task world.
    pub fn default_world() -> Self {
        let layout: WorldLayout =
            serde_json::from_str(include_str!("../data/default_world.json"))
                .expect("bundled world parses");
        NavEnv::from_layout(layout).expect("bundled world is valid")
    }

    pub fn layout(&self) -> &WorldLayout {
        &self.layout
    }

    pub fn width(&self) -> f64 {
        self.layout.width
    }

    pub fn height(&self) -> f64 {
        self.layout.height
    }

    pub fn bins_per_dim(&self) -> usize {
        self.layout.bins_per_dim
    }

    pub fn n_stimuli(&self) -> usize {
        self.layout.stimuli.len()
    }

    /// Length of the full feature vector: stimulus flags then two one-hot
    /// position encodings.
    pub fn feature_len(&self) -> usize {
        self.layout.stimuli.len() + 2 * self.layout.bins_per_dim
    }

    pub fn step_len(&self) -> f64 {
        self.step_len
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.layout.goals.keys().map(|s| s.as_str())
    }

    pub fn goal(&self, task_id: &str) -> Result<&GoalRegion> {
        self.layout
            .goals
            .get(task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_string()))
    }

    /// Validated state constructor.
    pub fn make_state(&self, x: f64, y: f64) -> Result<AgentState> {
        if !x.is_finite() || !y.is_finite() || !self.in_bounds(x, y) {
            return Err(Error::InvalidParameter(format!(
                "state ({x}, {y}) outside world bounds"
            )));
        }
        if self.in_obstacle(x, y) {
            return Err(Error::InvalidParameter(format!(
                "state ({x}, {y}) inside an obstacle"
            )));
        }
        Ok(AgentState { x, y })
    }

    fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && x <= self.layout.width && y >= 0.0 && y <= self.layout.height
    }

    pub fn in_obstacle(&self, x: f64, y: f64) -> bool {
        self.layout.obstacles.iter().any(|r| r.contains(x, y))
    }

    /// Executes one action; returns the next state and a collision flag.
    ///
    /// A move whose path would cross an obstacle or leave the world is
    /// cancelled: the agent keeps its position and the flag is set.
    pub fn step(&self, s: &AgentState, action: usize) -> (AgentState, bool) {
        assert!(action < N_ACTIONS, "action index out of range");
        let (ux, uy) = DIRECTIONS[action];
        if ux == 0.0 && uy == 0.0 {
            return (*s, false);
        }
        let nx = s.x + ux * self.step_len;
        let ny = s.y + uy * self.step_len;
        if !self.in_bounds(nx, ny) {
            return (*s, true);
        }
        for rect in &self.layout.obstacles {
            if segment_hits_rect(s.x, s.y, nx, ny, rect) {
                return (*s, true);
            }
        }
        (AgentState { x: nx, y: ny }, false)
    }

    /// Binary stimulus proximity flags.
    pub fn env_features(&self, s: &AgentState) -> WeightVector {
        let values: Vec<f64> = self
            .layout
            .stimuli
            .iter()
            .map(|st| {
                let d = ((s.x - st.x).powi(2) + (s.y - st.y).powi(2)).sqrt();
                if d <= st.r {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        WeightVector::new(values).expect("stimulus flags are finite")
    }

    /// One-hot x-bin and y-bin encodings, concatenated.
    pub fn state_features(&self, s: &AgentState) -> WeightVector {
        let bins = self.layout.bins_per_dim;
        let mut values = vec![0.0; 2 * bins];
        values[self.bin_index(s.x, self.layout.width)] = 1.0;
        values[bins + self.bin_index(s.y, self.layout.height)] = 1.0;
        WeightVector::new(values).expect("one-hot features are finite")
    }

    fn bin_index(&self, coord: f64, extent: f64) -> usize {
        let bins = self.layout.bins_per_dim;
        (((coord / extent) * bins as f64).floor() as usize).min(bins - 1)
    }

    /// Stimulus flags followed by the position one-hots.
    pub fn full_features(&self, s: &AgentState) -> WeightVector {
        let mut values = self.env_features(s).into_vec();
        values.extend_from_slice(&self.state_features(s));
        WeightVector::new(values).expect("features are finite")
    }

    /// Reward for arriving in `s_next`: goal first, then collision, then the
    /// living penalty.
    pub fn reward(&self, task_id: &str, s_next: &AgentState, collided: bool) -> Result<f64> {
        if self.is_terminal(task_id, s_next)? {
            Ok(GOAL_REWARD)
        } else if collided {
            Ok(COLLISION_PENALTY)
        } else {
            Ok(LIVING_PENALTY)
        }
    }

    /// Whether `s` lies in the task's goal region (boundary included).
    pub fn is_terminal(&self, task_id: &str, s: &AgentState) -> Result<bool> {
        let g = self.goal(task_id)?;
        let d = ((s.x - g.x).powi(2) + (s.y - g.y).powi(2)).sqrt();
        Ok(d <= g.r)
    }

    /// Uniform sample over non-obstacle space.
    pub fn sample_free_state<R: Rng>(&self, rng: &mut R) -> Result<AgentState> {
        for _ in 0..10_000 {
            let x = rng.gen_range(0.0..self.layout.width);
            let y = rng.gen_range(0.0..self.layout.height);
            if !self.in_obstacle(x, y) {
                return Ok(AgentState { x, y });
            }
        }
        Err(Error::InvalidParameter(
            "world has no reachable free space to sample".into(),
        ))
    }
}

/// Liang-Barsky test for a segment against a closed axis-aligned box.
fn segment_hits_rect(x0: f64, y0: f64, x1: f64, y1: f64, r: &Rect) -> bool {
    let dx = x1 - x0;
    let dy = y1 - y0;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-dx, x0 - r.x),
        (dx, r.x + r.w - x0),
        (-dy, y0 - r.y),
        (dy, r.y + r.h - y0),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                if t > t1 {
                    return false;
                }
                if t > t0 {
                    t0 = t;
                }
            } else {
                if t < t0 {
                    return false;
                }
                if t < t1 {
                    t1 = t;
                }
            }
        }
    }
    true
}
