//! The four parameter sweeps and their output tables.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::manifest::{execute, Manifest};
use super::{MeasurementPlan, ScenarioConfig};
use crate::env::{ActionGrid, MeasurementMode};
use crate::error::{Error, Result};

/// Error-surface log-variance per accuracy level.
pub const ACCURACY_LEVELS: [(&str, f64); 3] = [("high", -3.0), ("medium", -2.0), ("low", 0.0)];
pub const FEED_LOG_VARIANCES: [f64; 4] = [-3.0, -2.0, -1.0, 0.0];
pub const FEED_LOG_CORRELATIONS: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];
pub const MEASUREMENT_COUNTS: [usize; 6] = [0, 1, 3, 10, 30, 100];
/// Feed log-variance and log-correlation-length of the measurement study.
pub const MEASUREMENT_FEED: (f64, f64) = (0.0, 2.0);
/// (t_step, f_step) rows of the grid study.
pub const GRID_STEPS: [(f64, f64); 3] = [(0.1, 1.0), (0.25, 2.5), (0.5, 5.0)];
pub const GRID_ERROR_LOG_VARIANCES: [f64; 4] = [-3.0, -2.0, -1.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    ModelAccuracy,
    FeedstockVariance,
    Measurements,
    ActionGrid,
}

impl Study {
    pub const ALL: [Study; 4] = [Study::ModelAccuracy, Study::FeedstockVariance, Study::Measurements, Study::ActionGrid];

    pub fn name(self) -> &'static str {
        match self {
            Study::ModelAccuracy => "model-accuracy",
            Study::FeedstockVariance => "feedstock-variance",
            Study::Measurements => "measurements",
            Study::ActionGrid => "action-grid",
        }
    }

    pub fn axes(self) -> Vec<String> {
        let axes: &[&str] = match self {
            Study::ModelAccuracy => &["accuracy"],
            Study::FeedstockVariance => &["feed_log10_variance", "feed_log10_correlation_length"],
            Study::Measurements => &["accuracy", "n"],
            Study::ActionGrid => &["grid", "error_log10_variance"],
        };
        axes.iter().map(|s| s.to_string()).collect()
    }

    /// Scenario cells derived from `base`. Each study overrides its axes
    /// and the settings it holds fixed; replicates, seeds, policies and
    /// solver settings come from `base`.
    pub fn cells(self, base: &ScenarioConfig) -> Vec<Cell> {
        let every_step = MeasurementPlan { mode: MeasurementMode::FixedSchedule, n: None };
        let mut out = Vec::new();
        match self {
            Study::ModelAccuracy => {
                for (label, lv) in ACCURACY_LEVELS {
                    let mut c = base.clone();
                    c.errors.log10_variance = lv;
                    c.feedstock.log10_variance = -3.0;
                    c.feedstock.log10_correlation_length = 2.0;
                    c.measurements = every_step;
                    out.push(Cell::new(self, vec![label.into()], c));
                }
            }
            Study::FeedstockVariance => {
                for lv in FEED_LOG_VARIANCES {
                    for lc in FEED_LOG_CORRELATIONS {
                        let mut c = base.clone();
                        c.errors.log10_variance = -2.0;
                        c.feedstock.log10_variance = lv;
                        c.feedstock.log10_correlation_length = lc;
                        c.measurements = every_step;
                        out.push(Cell::new(self, vec![lv.to_string(), lc.to_string()], c));
                    }
                }
            }
            Study::Measurements => {
                for (label, lv) in ACCURACY_LEVELS {
                    for n in MEASUREMENT_COUNTS {
                        let mut c = base.clone();
                        c.errors.log10_variance = lv;
                        c.feedstock.log10_variance = MEASUREMENT_FEED.0;
                        c.feedstock.log10_correlation_length = MEASUREMENT_FEED.1;
                        c.measurements = MeasurementPlan { mode: MeasurementMode::FixedSchedule, n: Some(n) };
                        out.push(Cell::new(self, vec![label.into(), n.to_string()], c));
                    }
                }
            }
            Study::ActionGrid => {
                for (ts, fs) in GRID_STEPS {
                    for lv in GRID_ERROR_LOG_VARIANCES {
                        let mut c = base.clone();
                        c.grid = ActionGrid::with_steps(ts, fs);
                        c.errors.log10_variance = lv;
                        c.feedstock.log10_variance = -3.0;
                        c.feedstock.log10_correlation_length = 2.0;
                        c.measurements = every_step;
                        out.push(Cell::new(self, vec![format!("[{ts}, {fs}]"), lv.to_string()], c));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::UnknownStudy(s.into()))
    }
}

/// One scenario of a sweep with its axis values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub name: String,
    pub labels: Vec<String>,
    pub config: ScenarioConfig,
}

impl Cell {
    pub fn new(study: Study, labels: Vec<String>, mut config: ScenarioConfig) -> Self {
        let name = format!("{}_{}", study.name(), labels.join("_"))
            .chars()
            .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' || ch == '.' { ch } else { '_' })
            .collect::<String>();
        config.name = name.clone();
        Self { name, labels, config }
    }
}

/// Run every cell of `study` and write its tables and manifest under `out_dir`.
pub fn sweep(study: Study, base: &ScenarioConfig, out_dir: &Path) -> Result<Manifest> {
    execute(study.name(), study.axes(), study.cells(base), out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_axes() {
        let base = ScenarioConfig::default();
        assert_eq!(Study::FeedstockVariance.cells(&base).len(), 20);
        assert_eq!(Study::Measurements.cells(&base).len(), 18);
        let grids: Vec<_> = Study::ActionGrid.cells(&base).iter().map(|c| c.labels[0].clone()).collect();
        assert!(grids.contains(&"[0.1, 1]".to_string()) && grids.contains(&"[0.5, 5]".to_string()));
        assert_eq!(Study::ModelAccuracy.cells(&base).len(), 3);
        assert!(matches!("tables".parse::<Study>(), Err(Error::UnknownStudy(_))));
        assert_eq!("action-grid".parse::<Study>().unwrap(), Study::ActionGrid);
    }

    #[test]
    fn cell_names_are_file_safe() {
        let base = ScenarioConfig::default();
        for st in Study::ALL {
            for c in st.cells(&base) {
                assert!(c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || "-._".contains(ch)), "{}", c.name);
            }
        }
    }
}
