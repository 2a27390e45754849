//! The batch-flotation POMDP: one batch per timestep, action-independent
//! feedstock transitions, and exact observations of grade and recovery.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_truth::{true_outputs, Axis, GroundTruth};
use crate::kinetic::{reward_unchecked, EconomicParams, KineticParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlotationState {
    /// Feedstock composition of the current batch, percent.
    pub c: f64,
    /// Recovery of the last processed batch, percent.
    pub r: f64,
    /// Grade of the last processed batch, percent.
    pub g: f64,
    /// Timestep index.
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlotationAction {
    /// Flotation time, minutes.
    pub t: f64,
    /// Air flow rate, L/hr.
    pub f: f64,
    pub measure: bool,
}

impl FlotationAction {
    pub fn new(t: f64, f: f64, measure: bool) -> Self {
        Self { t, f, measure }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlotationObservation {
    /// Present only when the feedstock was measured this timestep.
    pub composition: Option<f64>,
    pub grade: f64,
    pub recovery: f64,
}

/// Rectangular lattice of admissible (t, f) settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub f_step: f64,
}

impl Default for ActionGrid {
    fn default() -> Self {
        Self { t_min: 0.5, t_max: 10.0, t_step: 0.5, f_min: 5.0, f_max: 200.0, f_step: 5.0 }
    }
}

const GRID_TOL: f64 = 1e-6;

impl ActionGrid {
    /// Default bounds with the given step sizes.
    pub fn with_steps(t_step: f64, f_step: f64) -> Self {
        Self { t_step, f_step, ..Self::default() }
    }

    pub fn single(t: f64, f: f64) -> Self {
        Self { t_min: t, t_max: t, t_step: 1.0, f_min: f, f_max: f, f_step: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_step > 0.0 && self.f_step > 0.0) {
            return Err(Error::Config("action grid steps must be > 0".into()));
        }
        if !(self.t_min >= 0.0 && self.f_min >= 0.0)
            || self.t_max < self.t_min
            || self.f_max < self.f_min
        {
            return Err(Error::Config("action grid bounds are empty or negative".into()));
        }
        Ok(())
    }

    pub fn n_t(&self) -> usize {
        ((self.t_max - self.t_min) / self.t_step + GRID_TOL).floor() as usize + 1
    }

    pub fn n_f(&self) -> usize {
        ((self.f_max - self.f_min) / self.f_step + GRID_TOL).floor() as usize + 1
    }

    pub fn len(&self) -> usize {
        self.n_t() * self.n_f()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_axis(&self) -> Axis {
        Axis::new(self.t_min, self.t_step, self.n_t())
    }

    pub fn f_axis(&self) -> Axis {
        Axis::new(self.f_min, self.f_step, self.n_f())
    }

    /// (t, f) of the action with flat index `idx`; t varies slowest.
    #[inline]
    pub fn action(&self, idx: usize) -> (f64, f64) {
        let nf = self.n_f();
        let (i, j) = (idx / nf, idx % nf);
        (self.t_min + self.t_step * i as f64, self.f_min + self.f_step * j as f64)
    }

    pub fn actions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(|i| self.action(i))
    }

    fn axis_index(x: f64, min: f64, step: f64, n: usize) -> Option<usize> {
        let u = (x - min) / step;
        let i = u.round();
        if (u - i).abs() > GRID_TOL || i < 0.0 || i as usize >= n {
            return None;
        }
        Some(i as usize)
    }

    pub fn index_of(&self, t: f64, f: f64) -> Result<usize> {
        let i = Self::axis_index(t, self.t_min, self.t_step, self.n_t());
        let j = Self::axis_index(f, self.f_min, self.f_step, self.n_f());
        match (i, j) {
            (Some(i), Some(j)) => Ok(i * self.n_f() + j),
            _ => Err(Error::OffGrid { t, f }),
        }
    }

    /// Nearest grid action to an arbitrary (t, f), clamped to the bounds.
    pub fn snap(&self, t: f64, f: f64) -> (f64, f64) {
        let i = ((t - self.t_min) / self.t_step).round().clamp(0.0, (self.n_t() - 1) as f64);
        let j = ((f - self.f_min) / self.f_step).round().clamp(0.0, (self.n_f() - 1) as f64);
        (self.t_min + self.t_step * i, self.f_min + self.f_step * j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    AgentChoice,
    FixedSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSchedule {
    pub mode: MeasurementMode,
    pub budget: usize,
    /// Timesteps at which the feedstock is measured (fixed mode only).
    pub schedule: BTreeSet<usize>,
}

impl MeasurementSchedule {
    pub fn every_step(horizon: usize) -> Self {
        Self::fixed((0..horizon).collect())
    }

    pub fn fixed(schedule: BTreeSet<usize>) -> Self {
        Self { mode: MeasurementMode::FixedSchedule, budget: schedule.len(), schedule }
    }

    /// `n` measurements spread evenly over the horizon.
    pub fn evenly_spaced(n: usize, horizon: usize) -> Self {
        let n = n.min(horizon);
        let schedule = (0..n).map(|i| ((2 * i + 1) * horizon) / (2 * n)).collect();
        Self::fixed(schedule)
    }

    pub fn agent_choice(budget: usize) -> Self {
        Self { mode: MeasurementMode::AgentChoice, budget, schedule: BTreeSet::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == MeasurementMode::FixedSchedule && self.schedule.len() != self.budget {
            return Err(Error::Config("fixed schedule size must equal its budget".into()));
        }
        Ok(())
    }

    /// Whether a measurement happens at `step` given the agent's request.
    pub fn resolve(&self, step: usize, requested: bool, taken: usize) -> bool {
        match self.mode {
            MeasurementMode::FixedSchedule => self.schedule.contains(&step),
            MeasurementMode::AgentChoice => requested && taken < self.budget,
        }
    }
}

/// Outcome of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: FlotationState,
    pub observation: FlotationObservation,
    pub reward: f64,
    pub terminal: bool,
    /// The action actually executed (measure flag after the schedule).
    pub action: FlotationAction,
}

/// Single-episode simulator over a fixed ground truth.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    gt: &'a GroundTruth,
    grid: ActionGrid,
    schedule: MeasurementSchedule,
    kp: KineticParams,
    econ: EconomicParams,
    state: FlotationState,
    measurements_taken: usize,
}

impl<'a> Environment<'a> {
    pub fn new(
        gt: &'a GroundTruth,
        grid: ActionGrid,
        schedule: MeasurementSchedule,
        kp: KineticParams,
        econ: EconomicParams,
    ) -> Result<Self> {
        grid.validate()?;
        schedule.validate()?;
        let mut env = Self {
            gt,
            grid,
            schedule,
            kp,
            econ,
            state: FlotationState { c: 0.0, r: 0.0, g: 0.0, step: 0 },
            measurements_taken: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn reset(&mut self) -> FlotationState {
        self.measurements_taken = 0;
        self.state = FlotationState { c: self.gt.composition(0), r: 0.0, g: 0.0, step: 0 };
        self.state
    }

    pub fn state(&self) -> FlotationState {
        self.state
    }

    pub fn horizon(&self) -> usize {
        self.gt.horizon()
    }

    pub fn is_terminal(&self) -> bool {
        self.state.step >= self.horizon()
    }

    pub fn measurements_taken(&self) -> usize {
        self.measurements_taken
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn schedule(&self) -> &MeasurementSchedule {
        &self.schedule
    }

    pub fn step(&mut self, action: FlotationAction) -> Result<StepOutcome> {
        if self.is_terminal() {
            return Err(Error::Terminal(self.state.step));
        }
        self.grid.index_of(action.t, action.f)?;
        let step = self.state.step;
        let c = self.gt.composition(step);
        let measured = self.schedule.resolve(step, action.measure, self.measurements_taken);
        if measured {
            self.measurements_taken += 1;
        }
        let (g, r) = true_outputs(self.gt, &self.kp, c, action.t, action.f)?;
        let reward = reward_unchecked(&self.econ, g, r, action.t, action.f, measured);
        let next = step + 1;
        self.state = FlotationState { c: self.gt.composition(next), r, g, step: next };
        Ok(StepOutcome {
            state: self.state,
            observation: FlotationObservation {
                composition: measured.then_some(c),
                grade: g,
                recovery: r,
            },
            reward,
            terminal: next == self.horizon(),
            action: FlotationAction { measure: measured, ..action },
        })
    }
}

/// What a policy sees when asked for an action.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub step: usize,
    pub horizon: usize,
    pub grid: &'a ActionGrid,
    pub schedule: &'a MeasurementSchedule,
    pub measurements_taken: usize,
    pub kp: &'a KineticParams,
    pub econ: &'a EconomicParams,
}

impl DecisionContext<'_> {
    /// Whether a measurement will happen at this step if requested.
    pub fn measurement_available(&self) -> bool {
        self.schedule.resolve(self.step, true, self.measurements_taken)
    }
}

/// A decision rule driven only by observations.
pub trait Policy {
    fn name(&self) -> &str;

    /// Called once before the first decision of an episode.
    fn reset(&mut self, ctx: &DecisionContext<'_>) -> Result<()>;

    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<FlotationAction>;

    /// Feedback for the action just executed.
    fn observe(
        &mut self,
        ctx: &DecisionContext<'_>,
        action: &FlotationAction,
        obs: &FlotationObservation,
    ) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub c_true: f64,
    pub measured: bool,
    pub t: f64,
    pub f: f64,
    pub g: f64,
    pub r: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub total_reward: f64,
}

impl EpisodeRecord {
    pub fn mean_grade(&self) -> f64 {
        mean(self.steps.iter().map(|s| s.g))
    }

    pub fn mean_recovery(&self) -> f64 {
        mean(self.steps.iter().map(|s| s.r))
    }

    pub fn measurements(&self) -> usize {
        self.steps.iter().filter(|s| s.measured).count()
    }

    pub const CSV_HEADER: [&'static str; 9] =
        ["seed", "T", "c_true", "measured", "t", "f", "g", "r", "reward"];

    /// Rows without a header, for appending several episodes to one file.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for s in &self.steps {
            w.write_record([
                self.seed.to_string(),
                s.step.to_string(),
                s.c_true.to_string(),
                s.measured.to_string(),
                s.t.to_string(),
                s.f.to_string(),
                s.g.to_string(),
                s.r.to_string(),
                s.reward.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER)?;
        self.write_csv_rows(&mut w)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Run one full episode of `policy` against `gt`.
pub fn run_episode(
    gt: &GroundTruth,
    grid: &ActionGrid,
    schedule: &MeasurementSchedule,
    policy: &mut dyn Policy,
    econ: &EconomicParams,
    kp: &KineticParams,
) -> Result<EpisodeRecord> {
    let mut env = Environment::new(gt, *grid, schedule.clone(), *kp, *econ)?;
    let horizon = env.horizon();
    let ctx_at = |step, taken| DecisionContext {
        step,
        horizon,
        grid,
        schedule,
        measurements_taken: taken,
        kp,
        econ,
    };
    policy.reset(&ctx_at(0, 0))?;
    let mut steps = Vec::with_capacity(horizon);
    let mut total = 0.0;
    while !env.is_terminal() {
        let before = env.state();
        let ctx = ctx_at(before.step, env.measurements_taken());
        let action = policy.act(&ctx)?;
        let out = env.step(action)?;
        policy.observe(&ctx, &out.action, &out.observation)?;
        total += out.reward;
        steps.push(StepRecord {
            step: before.step,
            c_true: before.c,
            measured: out.action.measure,
            t: out.action.t,
            f: out.action.f,
            g: out.observation.grade,
            r: out.observation.recovery,
            reward: out.reward,
        });
    }
    Ok(EpisodeRecord { policy: policy.name().to_string(), seed: gt.seed, steps, total_reward: total })
}
