//! Scenario configuration, replicate execution and study sweeps.

pub mod manifest;
pub mod metrics;
pub mod study;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefConfig;
use crate::env::{run_episode, ActionGrid, EpisodeRecord, MeasurementMode, MeasurementSchedule, Policy};
use crate::error::{Error, Result};
use crate::ground_truth::{ErrorSurfaceConfig, FeedstockSignalConfig, GroundTruth};
use crate::kinetic::{EconomicParams, KineticParams};
use crate::policies::{MpcConfig, MpcPolicy, PidConfig, PidPolicy};
use crate::pomcp::{PomcpConfig, PomcpPolicy};

pub use manifest::{replay, Manifest};
pub use metrics::{
    median, paired_differences, percentile, relative_reward, spearman, Percentiles, PolicySummary,
    SummaryStats,
};
pub use study::{sweep, Study};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Pid,
    Mpc,
    Pomcp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Pid, PolicyKind::Mpc, PolicyKind::Pomcp];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Pid => "pid",
            PolicyKind::Mpc => "mpc",
            PolicyKind::Pomcp => "pomcp",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pid" => Ok(PolicyKind::Pid),
            "mpc" => Ok(PolicyKind::Mpc),
            "pomcp" | "pomdp" => Ok(PolicyKind::Pomcp),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

/// How many feed measurements an episode gets. `None` measures every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementPlan {
    pub mode: MeasurementMode,
    pub n: Option<usize>,
}

impl Default for MeasurementPlan {
    fn default() -> Self {
        Self { mode: MeasurementMode::FixedSchedule, n: None }
    }
}

impl MeasurementPlan {
    pub fn schedule(&self, horizon: usize) -> MeasurementSchedule {
        let n = self.n.unwrap_or(horizon).min(horizon);
        match self.mode {
            MeasurementMode::FixedSchedule if n == horizon => MeasurementSchedule::every_step(horizon),
            MeasurementMode::FixedSchedule => MeasurementSchedule::evenly_spaced(n, horizon),
            MeasurementMode::AgentChoice => MeasurementSchedule::agent_choice(n),
        }
    }
}

/// One cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub feedstock: FeedstockSignalConfig,
    /// Error-surface log-variance sets model accuracy.
    pub errors: ErrorSurfaceConfig,
    pub measurements: MeasurementPlan,
    pub grid: ActionGrid,
    pub policies: Vec<PolicyKind>,
    pub replicates: usize,
    pub base_seed: u64,
    /// Draw error surfaces from `base_seed` for every replicate.
    pub freeze_surfaces: bool,
    pub economics: EconomicParams,
    pub kinetics: KineticParams,
    pub pid: PidConfig,
    pub mpc: MpcConfig,
    pub pomcp: PomcpConfig,
    /// Belief hyperparameters; defaults to the synthesis hyperparameters.
    pub belief: Option<BeliefConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            feedstock: FeedstockSignalConfig::default(),
            errors: ErrorSurfaceConfig::default(),
            measurements: MeasurementPlan::default(),
            grid: ActionGrid::default(),
            policies: PolicyKind::ALL.to_vec(),
            replicates: 20,
            base_seed: 0,
            freeze_surfaces: false,
            economics: EconomicParams::default(),
            kinetics: KineticParams::default(),
            pid: PidConfig::default(),
            mpc: MpcConfig::default(),
            pomcp: PomcpConfig::default(),
            belief: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn horizon(&self) -> usize {
        self.feedstock.horizon
    }

    pub fn validate(&self) -> Result<()> {
        self.kinetics.validate()?;
        self.economics.validate()?;
        self.feedstock.validate(&self.kinetics)?;
        self.errors.validate()?;
        self.grid.validate()?;
        self.pid.validate()?;
        self.mpc.validate()?;
        self.pomcp.validate()?;
        self.measurements.schedule(self.horizon()).validate()?;
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        Ok(())
    }

    pub fn belief_config(&self) -> BeliefConfig {
        self.belief.clone().unwrap_or_else(|| BeliefConfig::well_specified(&self.feedstock, &self.errors))
    }

    pub fn seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }

    pub fn ground_truth(&self, seed: u64) -> Result<GroundTruth> {
        let surface_seed = if self.freeze_surfaces { self.base_seed } else { seed };
        GroundTruth::synthesize_with_surface_seed(
            &self.feedstock,
            &self.errors,
            &self.grid,
            &self.kinetics,
            seed,
            surface_seed,
        )
    }

    pub fn make_policy(&self, kind: PolicyKind, seed: u64) -> Box<dyn Policy> {
        match kind {
            PolicyKind::Pid => Box::new(PidPolicy::new(self.pid)),
            PolicyKind::Mpc => Box::new(MpcPolicy::new(self.mpc, self.belief_config().feedstock)),
            // Planner randomness is decorrelated from the truth streams.
            PolicyKind::Pomcp => Box::new(PomcpPolicy::new(self.pomcp, self.belief_config(), seed ^ 0x9e37_79b9_7f4a_7c15)),
        }
    }

    /// All policies on the ground truth of one seed.
    pub fn run_replicate(&self, seed: u64) -> Result<Vec<EpisodeRecord>> {
        let gt = self.ground_truth(seed)?;
        let schedule = self.measurements.schedule(self.horizon());
        self.policies
            .iter()
            .map(|&kind| {
                let mut policy = self.make_policy(kind, seed);
                let mut ep = run_episode(&gt, &self.grid, &schedule, policy.as_mut(), &self.economics, &self.kinetics)?;
                ep.seed = seed;
                Ok(ep)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    /// Successful replicates in seed order, one record per policy.
    pub episodes: Vec<Vec<EpisodeRecord>>,
    pub failures: Vec<ReplicateFailure>,
}

impl ScenarioResult {
    pub fn seeds(&self) -> Vec<u64> {
        self.episodes.iter().map(|r| r[0].seed).collect()
    }

    fn column(&self, kind: PolicyKind) -> Result<usize> {
        self.config
            .policies
            .iter()
            .position(|&k| k == kind)
            .ok_or_else(|| Error::Config(format!("policy {kind} not in scenario")))
    }

    pub fn episodes_of(&self, kind: PolicyKind) -> Result<Vec<&EpisodeRecord>> {
        let i = self.column(kind)?;
        Ok(self.episodes.iter().map(|r| &r[i]).collect())
    }

    fn paired(&self, kind: PolicyKind, metric: impl Fn(&EpisodeRecord) -> f64) -> Result<Vec<(u64, f64)>> {
        Ok(self.episodes_of(kind)?.into_iter().map(|e| (e.seed, metric(e))).collect())
    }

    pub fn totals(&self, kind: PolicyKind) -> Result<Vec<(u64, f64)>> {
        self.paired(kind, |e| e.total_reward)
    }

    /// Per-seed reward of `a` minus `b`, $M/yr.
    pub fn relative(&self, a: PolicyKind, b: PolicyKind) -> Result<Vec<f64>> {
        relative_reward(&self.totals(a)?, &self.totals(b)?, &self.config.economics, self.config.horizon())
    }

    pub fn summary(&self) -> Result<SummaryStats> {
        if self.episodes.is_empty() {
            return Err(Error::Config("no successful replicates to summarise".into()));
        }
        let baseline =
            if self.config.policies.contains(&PolicyKind::Pid) { PolicyKind::Pid } else { self.config.policies[0] };
        let grade = |k| self.paired(k, EpisodeRecord::mean_grade);
        let recovery = |k| self.paired(k, EpisodeRecord::mean_recovery);
        let policies = self
            .config
            .policies
            .iter()
            .map(|&k| {
                let totals: Vec<f64> = self.totals(k)?.into_iter().map(|(_, v)| v).collect();
                Ok(PolicySummary {
                    policy: k.name().into(),
                    relative_recovery: median(&paired_differences(&recovery(k)?, &recovery(baseline)?)?)?,
                    relative_grade: median(&paired_differences(&grade(k)?, &grade(baseline)?)?)?,
                    relative_reward: Percentiles::of(&self.relative(k, baseline)?)?,
                    total_reward: Percentiles::of(&totals)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SummaryStats { baseline: baseline.name().into(), replicates: self.episodes.len(), policies })
    }

    /// Every episode in one CSV, with a leading policy column.
    pub fn episodes_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["policy"];
        header.extend(EpisodeRecord::CSV_HEADER);
        w.write_record(&header)?;
        for rep in &self.episodes {
            for ep in rep {
                for s in &ep.steps {
                    w.write_record([
                        ep.policy.clone(),
                        ep.seed.to_string(),
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
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Run every replicate of `cfg` in parallel. A failing replicate is recorded
/// with its seed and the rest still run.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let outcomes: Vec<(u64, Result<Vec<EpisodeRecord>>)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed(i);
            (seed, cfg.run_replicate(seed))
        })
        .collect();
    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    for (seed, out) in outcomes {
        match out {
            Ok(eps) => episodes.push(eps),
            Err(e) => failures.push(ReplicateFailure { seed, message: Error::Replicate { seed, source: Box::new(e) }.to_string() }),
        }
    }
    Ok(ScenarioResult { config: cfg.clone(), episodes, failures })
}
