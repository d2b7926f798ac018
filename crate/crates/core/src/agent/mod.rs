//! Exploration agents and episode rollout.
//!
//! Rewards only become available once the whole episode has been clustered,
//! so [`run_episode`] rolls the episode out first and applies every
//! learning update afterwards, newest transition first.

mod clustering;

pub use clustering::{cluster_episode, default_components, ClusterConfig, ClusterMode};

use std::collections::HashMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, Encoder};
use crate::envsim::{Action, MazeEnv, RewardRegime, GOAL_REWARD};
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::pseudocount::{combine_rewards, GlobalClusterTable, RewardTrace, DEFAULT_IR_SCALE};
use crate::rng::{prng, unit_f64, Prng};

const N_ACTIONS: usize = Action::ALL.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Random,
    #[default]
    Qlearning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub alpha: f64,
    pub gamma: f64,
    /// Exploration rate at the first episode.
    pub epsilon: f64,
    /// Multiplied into epsilon after every episode.
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    /// Subtract the episode's mean learning reward before updating.
    pub center_rewards: bool,
    /// Constant subtracted from every learning reward. With rewards shifted
    /// below zero, untried actions (valued 0) are preferred over tried ones.
    pub reward_offset: f64,
    /// Action-selection seed; the harness derives it from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::Qlearning,
            alpha: 0.5,
            gamma: 0.99,
            epsilon: 0.7,
            epsilon_decay: 1.0,
            epsilon_min: 0.0,
            center_rewards: false,
            reward_offset: 0.1,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "agent.alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "agent.gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("epsilon_decay", self.epsilon_decay),
            ("epsilon_min", self.epsilon_min),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "agent.{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !self.reward_offset.is_finite() {
            return Err(Error::Config("agent.reward_offset must be finite".into()));
        }
        Ok(())
    }
}

/// Action values per discrete state; unseen states read as zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    values: HashMap<usize, [f64; N_ACTIONS]>,
}

impl QTable {
    pub fn get(&self, state: usize) -> [f64; N_ACTIONS] {
        self.values.get(&state).copied().unwrap_or([0.0; N_ACTIONS])
    }

    pub fn set(&mut self, state: usize, action: Action, value: f64) {
        self.values.entry(state).or_insert([0.0; N_ACTIONS])[action.index()] = value;
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.get(state)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued action, lowest index on ties.
    pub fn greedy(&self, state: usize) -> Action {
        let q = self.get(state);
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if q[a] > q[best] {
                best = a;
            }
        }
        Action::ALL[best]
    }

    /// Number of states with stored values.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&usize, &[f64; N_ACTIONS])> {
        self.values.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: Action,
    pub reward: f64,
    pub next_state: usize,
    /// Terminal transitions bootstrap zero.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    q: QTable,
    epsilon: f64,
    rng: Prng,
}

impl Agent {
    pub fn new(config: AgentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            epsilon: config.epsilon,
            rng: prng(config.seed),
            q: QTable::default(),
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn q_table_mut(&mut self) -> &mut QTable {
        &mut self.q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Uniform for the random agent, epsilon-greedy otherwise.
    pub fn act_with(&self, state: usize, rng: &mut impl RngCore) -> Action {
        let explore = match self.config.kind {
            AgentKind::Random => true,
            AgentKind::Qlearning => self.epsilon > 0.0 && unit_f64(rng) < self.epsilon,
        };
        if explore {
            Action::ALL[rng.gen_range(0..N_ACTIONS)]
        } else {
            self.q.greedy(state)
        }
    }

    /// [`Agent::act_with`] using the agent's own generator.
    pub fn act(&mut self, state: usize) -> Action {
        let mut rng = self.rng.clone();
        let action = self.act_with(state, &mut rng);
        self.rng = rng;
        action
    }

    /// One-step Q-learning; a no-op for the random agent.
    pub fn update(&mut self, t: &Transition) {
        if self.config.kind == AgentKind::Random {
            return;
        }
        let bootstrap = if t.terminal {
            0.0
        } else {
            self.q.max_value(t.next_state)
        };
        let target = t.reward + self.config.gamma * bootstrap;
        let old = self.q.get(t.state)[t.action.index()];
        self.q
            .set(t.state, t.action, old + self.config.alpha * (target - old));
    }

    pub fn end_episode(&mut self) {
        self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_min);
    }
}

/// Rollout settings shared by every episode of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOptions {
    pub clustering: ClusterConfig,
    pub ir_scale: f64,
    pub regime: RewardRegime,
    /// Stops the episode early, e.g. when a run's step budget runs out.
    pub max_steps: Option<usize>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            clustering: ClusterConfig::default(),
            ir_scale: DEFAULT_IR_SCALE,
            regime: RewardRegime::SparseExtrinsic,
            max_steps: None,
        }
    }
}

/// One transition of a rolled-out episode (pixels are not kept).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub action: Action,
    /// Discrete state reached by the step.
    pub state_key: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub extrinsic: f64,
    /// Unscaled `1 / sqrt(pseudo_count)`.
    pub intrinsic: f64,
    pub pseudo_count: u64,
    /// Reward the learner was trained on.
    pub learning_reward: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    /// Embedding of the observation reached by each step.
    pub embeddings: Vec<EmbeddingVector>,
    pub rewards: RewardTrace,
    pub n_episodic_clusters: usize,
    pub reached_goal: bool,
    pub gmm: Option<GmmModel>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn extrinsic_return(&self) -> f64 {
        self.steps.iter().map(|s| s.extrinsic).sum()
    }

    pub fn mean_intrinsic(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.intrinsic).sum::<f64>() / self.steps.len() as f64
    }
}

/// Intrinsic rewards for one episode's embeddings: cluster, then update the table.
pub fn intrinsic_rewards(
    clustering: &ClusterConfig,
    table: &mut GlobalClusterTable,
    embeddings: &[EmbeddingVector],
) -> Result<(RewardTrace, usize, Option<GmmModel>)> {
    let (episodic, model) = cluster_episode(clustering, embeddings)?;
    let rewards = table.process_episode(&episodic)?;
    Ok((rewards, episodic.n_clusters(), model))
}

/// Rolls out one episode from reset, computes intrinsic rewards and then
/// trains the agent on the episode's transitions in reverse order.
pub fn run_episode(
    env: &mut MazeEnv,
    agent: &mut Agent,
    encoder: &Encoder,
    table: &mut GlobalClusterTable,
    options: &EpisodeOptions,
) -> Result<EpisodeTrace> {
    env.reset();
    let limit = options.max_steps.unwrap_or(usize::MAX);
    let mut states = vec![env.state_key()];
    let mut steps = Vec::new();
    let mut embeddings = Vec::new();
    let mut reached_goal = false;
    while steps.len() < limit && !env.state().done {
        let action = agent.act(*states.last().expect("states start non-empty"));
        let (outcome, obs) = env.step(action)?;
        embeddings.push(encoder.encode(&obs)?);
        reached_goal = outcome.reward == GOAL_REWARD;
        states.push(env.state_key());
        steps.push(StepRecord {
            action,
            state_key: env.state_key(),
            x: outcome.state.x,
            y: outcome.state.y,
            heading: outcome.state.heading,
            extrinsic: outcome.reward,
            intrinsic: 0.0,
            pseudo_count: 0,
            learning_reward: 0.0,
        });
    }

    let (rewards, n_episodic_clusters, gmm) =
        intrinsic_rewards(&options.clustering, table, &embeddings)?;
    let extrinsic: Vec<f64> = match options.regime {
        RewardRegime::SparseExtrinsic => steps.iter().map(|s| s.extrinsic).collect(),
        RewardRegime::IntrinsicOnly => vec![0.0; steps.len()],
    };
    let mut learning = combine_rewards(&extrinsic, &rewards, options.ir_scale)?;
    if agent.config.center_rewards && !learning.is_empty() {
        let mean = learning.iter().sum::<f64>() / learning.len() as f64;
        learning.iter_mut().for_each(|r| *r -= mean);
    }
    learning
        .iter_mut()
        .for_each(|r| *r -= agent.config.reward_offset);
    for (i, step) in steps.iter_mut().enumerate() {
        step.intrinsic = rewards.intrinsic[i];
        step.pseudo_count = rewards.pseudo_counts[i];
        step.learning_reward = learning[i];
    }

    for i in (0..steps.len()).rev() {
        agent.update(&Transition {
            state: states[i],
            action: steps[i].action,
            reward: learning[i],
            next_state: states[i + 1],
            terminal: reached_goal && i + 1 == steps.len(),
        });
    }
    agent.end_episode();

    Ok(EpisodeTrace {
        steps,
        embeddings,
        rewards,
        n_episodic_clusters,
        reached_goal,
        gmm,
    })
}
