//! Partially observable Monte Carlo planning over the action grid.
//!
//! The search is written against [`GenerativeModel`] so that the tree logic
//! can be exercised on toy problems. Observation nodes branch only on a small
//! discrete bucket (for flotation: whether the feed was measured), so the
//! action path of a simulation is fixed before any reward is drawn. That lets
//! the model draw all rewards of one simulation jointly.

use std::cell::OnceCell;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefConfig, BeliefState, WorldSampler};
use crate::env::{
    ActionGrid, DecisionContext, FlotationAction, FlotationObservation, MeasurementMode,
    MeasurementSchedule, Policy,
};
use crate::error::{Error, Result};
use crate::gp::Points;
use crate::ground_truth::{combine, GroundTruth};
use crate::kinetic::{kinetic_reward, reward_unchecked, EconomicParams, KineticParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RolloutPolicy {
    UniformRandom,
    #[default]
    KineticGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PomcpConfig {
    pub simulations: usize,
    /// Planning depth in timesteps, tree plus rollout.
    pub max_depth: usize,
    /// UCB1 exploration constant, $M.
    pub exploration: f64,
    pub discount: f64,
    pub rollout: RolloutPolicy,
    /// Probability of a uniformly random action in greedy rollouts.
    pub rollout_epsilon: f64,
    /// Belief samples per decision. At or above `simulations` every
    /// simulation draws its own world lazily; below it, whole worlds are
    /// sampled up front and the simulations cycle through them.
    pub worlds_per_step: usize,
}

impl Default for PomcpConfig {
    fn default() -> Self {
        Self {
            simulations: 1000,
            max_depth: 10,
            exploration: 10.0,
            discount: 0.95,
            rollout: RolloutPolicy::KineticGreedy,
            rollout_epsilon: 0.2,
            worlds_per_step: 1000,
        }
    }
}

impl PomcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.simulations == 0 || self.max_depth == 0 || self.worlds_per_step == 0 {
            return Err(Error::Config("simulations, max_depth and worlds_per_step must be >= 1".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount {} outside (0, 1]", self.discount)));
        }
        if !(self.exploration >= 0.0) || !(0.0..=1.0).contains(&self.rollout_epsilon) {
            return Err(Error::Config("exploration must be >= 0 and epsilon in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Simulator interface used by the search. Actions are dense indices and
/// `path` is the sequence of actions taken from the root.
pub trait GenerativeModel {
    type World;

    /// Steps simulated below the root.
    fn depth(&self) -> usize;

    fn num_actions(&self, path: &[usize]) -> usize;

    /// Observation bucket reached by taking the last action of `path`.
    fn observation(&self, path: &[usize]) -> usize;

    fn sample_world(&self, sim: usize, rng: &mut ChaCha8Rng) -> Result<Self::World>;

    fn rollout_action(&self, world: &Self::World, path: &[usize], rng: &mut ChaCha8Rng) -> usize;

    /// Per-step rewards along `path`.
    fn evaluate(&self, world: &Self::World, path: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

pub const OBSERVATION_BUCKETS: usize = 2;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionNode {
    pub visits: u32,
    /// Running mean of backed-up returns, $M.
    pub value: f64,
    children: [Option<u32>; OBSERVATION_BUCKETS],
}

impl ActionNode {
    fn record(&mut self, ret: f64) {
        self.visits += 1;
        self.value += (ret - self.value) / self.visits as f64;
    }
}

/// A history node. Children are expanded in action order, so `actions[i]`
/// always belongs to action `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub visits: u32,
    pub actions: Vec<ActionNode>,
}

impl SearchNode {
    pub fn with_children(children: Vec<ActionNode>) -> Self {
        let visits = children.iter().map(|c| c.visits).sum();
        Self { visits, actions: children }
    }
}

/// UCB1 over the children of `node`. Any unvisited action is taken first,
/// lowest index first; otherwise ties go to the lowest index.
pub fn ucb_select(node: &SearchNode, num_actions: usize, constant: f64) -> usize {
    if let Some(i) = node.actions.iter().position(|a| a.visits == 0) {
        return i;
    }
    if node.actions.len() < num_actions {
        return node.actions.len();
    }
    let log_n = (node.visits.max(1) as f64).ln();
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, a) in node.actions.iter().enumerate().take(num_actions) {
        let score = a.value + constant * (log_n / a.visits as f64).sqrt();
        if score > best.0 {
            best = (score, i);
        }
    }
    best.1
}

pub fn discounted_return(rewards: &[f64], discount: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + discount * acc)
}

/// Extend `prefix` by `depth` rollout steps in `world` and return the
/// discounted return of those steps alone.
pub fn rollout<M: GenerativeModel>(
    model: &M,
    world: &M::World,
    prefix: &[usize],
    depth: usize,
    discount: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if depth == 0 {
        return Ok(0.0);
    }
    let mut path = prefix.to_vec();
    for _ in 0..depth {
        let a = model.rollout_action(world, &path, rng);
        path.push(a);
    }
    let rewards = model.evaluate(world, &path, rng)?;
    Ok(discounted_return(&rewards[prefix.len()..], discount))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    /// Highest visit count, then higher value, then lowest index.
    pub fn best_action(&self) -> usize {
        let mut best = 0;
        for (i, a) in self.root().actions.iter().enumerate().skip(1) {
            let b = &self.root().actions[best];
            if a.visits > b.visits || (a.visits == b.visits && a.value > b.value) {
                best = i;
            }
        }
        best
    }
}

/// Run `cfg.simulations` simulations from an empty root.
pub fn search<M: GenerativeModel>(model: &M, cfg: &PomcpConfig, rng: &mut ChaCha8Rng) -> Result<SearchTree> {
    cfg.validate()?;
    let depth = model.depth();
    let mut tree = SearchTree { nodes: vec![SearchNode::default()] };
    let mut path = Vec::with_capacity(depth);
    let mut visited = Vec::with_capacity(depth + 1);
    let mut worlds: Vec<M::World> = Vec::new();
    let reuse = cfg.worlds_per_step < cfg.simulations;
    for sim in 0..cfg.simulations {
        path.clear();
        visited.clear();
        let mut node = 0usize;
        let mut expanded = false;
        while path.len() < depth {
            visited.push(node);
            let n = model.num_actions(&path);
            let a = ucb_select(&tree.nodes[node], n, cfg.exploration);
            if a == tree.nodes[node].actions.len() {
                tree.nodes[node].actions.push(ActionNode::default());
            }
            path.push(a);
            if path.len() == depth {
                break;
            }
            let o = model.observation(&path);
            match tree.nodes[node].actions[a].children[o] {
                Some(id) => node = id as usize,
                None => {
                    let id = tree.nodes.len();
                    tree.nodes.push(SearchNode::default());
                    tree.nodes[node].actions[a].children[o] = Some(id as u32);
                    visited.push(id);
                    expanded = true;
                    break;
                }
            }
        }
        let tree_steps = path.len();
        let fresh;
        let world = if reuse {
            let w = sim % cfg.worlds_per_step;
            if w == worlds.len() {
                worlds.push(model.sample_world(sim, rng)?);
            }
            &worlds[w]
        } else {
            fresh = model.sample_world(sim, rng)?;
            &fresh
        };
        while path.len() < depth {
            let a = model.rollout_action(world, &path, rng);
            path.push(a);
        }
        let rewards = model.evaluate(world, &path, rng)?;
        let mut ret = 0.0;
        let mut returns = vec![0.0; rewards.len()];
        for i in (0..rewards.len()).rev() {
            ret = rewards[i] + cfg.discount * ret;
            returns[i] = ret;
        }
        for i in 0..tree_steps {
            let h = visited[i];
            tree.nodes[h].visits += 1;
            tree.nodes[h].actions[path[i]].record(returns[i]);
        }
        if expanded {
            let last = *visited.last().expect("expanded node recorded");
            tree.nodes[last].visits += 1;
        }
    }
    Ok(tree)
}

/// Greedy kinetic-model actions by composition, filled on demand.
#[derive(Debug)]
pub struct GreedyTable {
    grid: ActionGrid,
    kp: KineticParams,
    econ: EconomicParams,
    bins: Vec<OnceCell<u32>>,
}

impl GreedyTable {
    const BIN: f64 = 0.05;

    pub fn new(grid: ActionGrid, kp: KineticParams, econ: EconomicParams) -> Self {
        let n = (kp.c_max / Self::BIN).ceil() as usize + 1;
        Self { grid, kp, econ, bins: (0..n).map(|_| OnceCell::new()).collect() }
    }

    pub fn matches(&self, grid: &ActionGrid, kp: &KineticParams, econ: &EconomicParams) -> bool {
        self.grid == *grid && self.kp == *kp && self.econ == *econ
    }

    /// Index of the kinetic optimum at the bin nearest to `c`.
    pub fn best(&self, c: f64) -> usize {
        let b = ((c / Self::BIN).round().max(0.0) as usize).min(self.bins.len() - 1);
        *self.bins[b].get_or_init(|| {
            let cb = b as f64 * Self::BIN;
            let mut best = (f64::NEG_INFINITY, 0u32);
            for (i, (t, f)) in self.grid.actions().enumerate() {
                let v = kinetic_reward(&self.kp, &self.econ, cb, t, f, false);
                if v > best.0 {
                    best = (v, i as u32);
                }
            }
            best.1
        }) as usize
    }
}

/// World realizations used by [`FlotationModel`].
#[derive(Debug)]
pub enum FlotationWorld {
    /// Compositions for the window; errors are drawn per path.
    Lazy(Vec<f64>),
    Full(Box<GroundTruth>),
}

/// The flotation process as seen from a belief at timestep `step`.
pub struct FlotationModel<'a> {
    sampler: WorldSampler<'a>,
    belief: &'a BeliefState,
    grid: &'a ActionGrid,
    schedule: &'a MeasurementSchedule,
    econ: &'a EconomicParams,
    kp: &'a KineticParams,
    greedy: &'a GreedyTable,
    cfg: &'a PomcpConfig,
    step: usize,
    horizon: usize,
    depth: usize,
    measurements_taken: usize,
}

impl<'a> FlotationModel<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cfg: &'a PomcpConfig,
        belief: &'a BeliefState,
        ctx: &DecisionContext<'a>,
        greedy: &'a GreedyTable,
    ) -> Result<Self> {
        if ctx.step >= ctx.horizon {
            return Err(Error::Terminal(ctx.step));
        }
        let depth = cfg.max_depth.min(ctx.horizon - ctx.step);
        Ok(Self {
            sampler: belief.world_sampler(ctx.step, depth)?,
            belief,
            grid: ctx.grid,
            schedule: ctx.schedule,
            econ: ctx.econ,
            kp: ctx.kp,
            greedy,
            cfg,
            step: ctx.step,
            horizon: ctx.horizon,
            depth,
            measurements_taken: ctx.measurements_taken,
        })
    }

    fn agent_choice(&self) -> bool {
        self.schedule.mode == MeasurementMode::AgentChoice
    }

    /// Grid index and measure flag of a dense action.
    pub fn decode(&self, action: usize) -> (usize, bool) {
        let n = self.grid.len();
        (action % n, action >= n)
    }

    fn measured(&self, path: &[usize], i: usize) -> bool {
        if self.agent_choice() {
            self.decode(path[i]).1
        } else {
            self.schedule.schedule.contains(&(self.step + i))
        }
    }

    fn composition(&self, world: &FlotationWorld, i: usize) -> f64 {
        match world {
            FlotationWorld::Lazy(c) => c[i],
            FlotationWorld::Full(gt) => gt.composition(self.step + i),
        }
    }
}

impl GenerativeModel for FlotationModel<'_> {
    type World = FlotationWorld;

    fn depth(&self) -> usize {
        self.depth
    }

    fn num_actions(&self, path: &[usize]) -> usize {
        let n = self.grid.len();
        if !self.agent_choice() {
            return n;
        }
        let used = self.measurements_taken + (0..path.len()).filter(|&i| self.measured(path, i)).count();
        if used < self.schedule.budget {
            2 * n
        } else {
            n
        }
    }

    fn observation(&self, path: &[usize]) -> usize {
        usize::from(self.measured(path, path.len() - 1))
    }

    fn sample_world(&self, _sim: usize, rng: &mut ChaCha8Rng) -> Result<FlotationWorld> {
        if self.cfg.worlds_per_step < self.cfg.simulations {
            let gt = self.belief.sample_world(self.grid, self.horizon, rng)?;
            Ok(FlotationWorld::Full(Box::new(gt)))
        } else {
            Ok(FlotationWorld::Lazy(self.sampler.draw_compositions(rng)))
        }
    }

    fn rollout_action(&self, world: &FlotationWorld, path: &[usize], rng: &mut ChaCha8Rng) -> usize {
        let n = self.grid.len();
        match self.cfg.rollout {
            RolloutPolicy::UniformRandom => rng.random_range(0..n),
            RolloutPolicy::KineticGreedy => {
                if rng.random::<f64>() < self.cfg.rollout_epsilon {
                    rng.random_range(0..n)
                } else {
                    self.greedy.best(self.composition(world, path.len()))
                }
            }
        }
    }

    fn evaluate(&self, world: &FlotationWorld, path: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let m = path.len();
        let mut points = Points::with_capacity(3, m);
        for (i, &a) in path.iter().enumerate() {
            let (t, f) = self.grid.action(self.decode(a).0);
            points.push(&[self.composition(world, i), t, f])?;
        }
        let (eg, er) = match world {
            FlotationWorld::Lazy(_) => self.sampler.draw_errors(&points, rng)?,
            FlotationWorld::Full(gt) => points
                .iter()
                .map(|x| (gt.grade_error.value_clamped(x[0], x[1], x[2]), gt.recovery_error.value_clamped(x[0], x[1], x[2])))
                .unzip(),
        };
        Ok((0..m)
            .map(|i| {
                let x = points.get(i);
                let (g, r) = combine(self.kp, x[0], x[1], x[2], eg[i], er[i]);
                reward_unchecked(self.econ, g, r, x[1], x[2], self.measured(path, i))
            })
            .collect())
    }
}

/// Root statistics for one grid action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootChild {
    pub t: f64,
    pub f: f64,
    pub measure: bool,
    pub visits: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomcpDecision {
    pub step: usize,
    pub action: FlotationAction,
    pub simulations: u32,
    pub children: Vec<RootChild>,
}

impl PomcpDecision {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Plan one decision from `belief`.
pub fn pomcp_act(
    cfg: &PomcpConfig,
    belief: &BeliefState,
    ctx: &DecisionContext<'_>,
    greedy: &GreedyTable,
    rng: &mut ChaCha8Rng,
) -> Result<PomcpDecision> {
    let model = FlotationModel::new(cfg, belief, ctx, greedy)?;
    let tree = search(&model, cfg, rng)?;
    let (idx, flag) = model.decode(tree.best_action());
    let (t, f) = ctx.grid.action(idx);
    let measure = match ctx.schedule.mode {
        MeasurementMode::AgentChoice => flag,
        MeasurementMode::FixedSchedule => ctx.measurement_available(),
    };
    let children = tree
        .root()
        .actions
        .iter()
        .enumerate()
        .map(|(a, node)| {
            let (i, m) = model.decode(a);
            let (t, f) = ctx.grid.action(i);
            RootChild { t, f, measure: m, visits: node.visits, value: node.value }
        })
        .collect();
    Ok(PomcpDecision {
        step: ctx.step,
        action: FlotationAction::new(t, f, measure),
        simulations: tree.root().visits,
        children,
    })
}

/// POMCP planning on a GP belief that is refit after every batch.
pub struct PomcpPolicy {
    cfg: PomcpConfig,
    belief_config: BeliefConfig,
    belief: Option<BeliefState>,
    greedy: Option<GreedyTable>,
    seed: u64,
    rng: ChaCha8Rng,
    keep_diagnostics: bool,
    diagnostics: Vec<PomcpDecision>,
}

impl PomcpPolicy {
    pub fn new(cfg: PomcpConfig, belief_config: BeliefConfig, seed: u64) -> Self {
        Self {
            cfg,
            belief_config,
            belief: None,
            greedy: None,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            keep_diagnostics: false,
            diagnostics: Vec::new(),
        }
    }

    /// Keep the root statistics of every decision.
    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.keep_diagnostics = on;
        self
    }

    pub fn diagnostics(&self) -> &[PomcpDecision] {
        &self.diagnostics
    }

    pub fn belief(&self) -> Option<&BeliefState> {
        self.belief.as_ref()
    }
}

impl Policy for PomcpPolicy {
    fn name(&self) -> &str {
        "pomcp"
    }

    fn reset(&mut self, ctx: &DecisionContext<'_>) -> Result<()> {
        self.cfg.validate()?;
        self.belief = Some(BeliefState::init(self.belief_config.clone(), *ctx.kp)?);
        if !self.greedy.as_ref().is_some_and(|g| g.matches(ctx.grid, ctx.kp, ctx.econ)) {
            self.greedy = Some(GreedyTable::new(*ctx.grid, *ctx.kp, *ctx.econ));
        }
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.diagnostics.clear();
        Ok(())
    }

    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<FlotationAction> {
        let (Some(belief), Some(greedy)) = (&self.belief, &self.greedy) else {
            return Err(Error::Belief("policy used before reset".into()));
        };
        let decision = pomcp_act(&self.cfg, belief, ctx, greedy, &mut self.rng)?;
        let action = decision.action;
        if self.keep_diagnostics {
            self.diagnostics.push(decision);
        }
        Ok(action)
    }

    fn observe(&mut self, ctx: &DecisionContext<'_>, action: &FlotationAction, obs: &FlotationObservation) -> Result<()> {
        let belief = self.belief.as_ref().ok_or_else(|| Error::Belief("policy used before reset".into()))?;
        let c_used = belief.attributed_composition(ctx.step, obs);
        self.belief = Some(belief.update(ctx.step, action, obs, c_used)?);
        Ok(())
    }
}
