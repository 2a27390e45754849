//! Paired-seed comparisons and summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::EconomicParams;

/// Linear interpolation between closest ranks, `q` in percent.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of empty input".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Domain(format!("percentile q={q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 50.0)
}

/// Per-seed differences `policy - baseline` in $M/yr. Totals are $M per
/// episode of `horizon` steps.
pub fn relative_reward(
    policy: &[(u64, f64)],
    baseline: &[(u64, f64)],
    econ: &EconomicParams,
    horizon: usize,
) -> Result<Vec<f64>> {
    let per_year = econ.timesteps_per_year / horizon as f64;
    paired_differences(policy, baseline).map(|d| d.into_iter().map(|x| x * per_year).collect())
}

/// Differences of values paired by seed, in the order of `a`.
pub fn paired_differences(a: &[(u64, f64)], b: &[(u64, f64)]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Unpaired(format!("{} vs {} episodes", a.len(), b.len())));
    }
    a.iter()
        .map(|(seed, x)| {
            b.iter()
                .find(|(s, _)| s == seed)
                .map(|(_, y)| x - y)
                .ok_or_else(|| Error::Unpaired(format!("seed {seed} has no baseline")))
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            out[*k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("spearman needs two equal-length series of length >= 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p20: f64,
    pub p50: f64,
    pub p80: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(Self { p20: percentile(values, 20.0)?, p50: percentile(values, 50.0)?, p80: percentile(values, 80.0)? })
    }
}

/// One policy compared with the baseline on paired seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    /// Median of per-seed differences in episode-mean recovery, pp.
    pub relative_recovery: f64,
    /// Median of per-seed differences in episode-mean grade, pp.
    pub relative_grade: f64,
    /// $M/yr.
    pub relative_reward: Percentiles,
    /// Episode totals, $M.
    pub total_reward: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub baseline: String,
    pub replicates: usize,
    pub policies: Vec<PolicySummary>,
}

impl SummaryStats {
    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == name)
    }
}
