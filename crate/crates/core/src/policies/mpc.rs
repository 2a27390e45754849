//! Reward-maximising control on the kinetic model alone.

use serde::{Deserialize, Serialize};

use crate::env::{ActionGrid, DecisionContext, FlotationAction, FlotationObservation, Policy};
use crate::error::{Error, Result};
use crate::gp::{GpHyperparams, GpPosterior, Points};
use crate::kinetic::{
    grade_unchecked, recovery_unchecked, reward_unchecked, EconomicParams, KineticParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionSource {
    /// Hold the most recent measurement.
    #[default]
    LastObserved,
    /// Posterior mean of a feedstock GP over the measurements so far.
    BeliefMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub composition_source: CompositionSource,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { horizon: 1, composition_source: CompositionSource::LastObserved }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("MPC horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Exhaustive search over the grid for the kinetic-model optimum at
/// composition `c`. Ties go to the first action in grid order, which is the
/// smallest (t, f). The transition does not depend on the action, so every
/// step of the horizon has the same optimum.
pub fn mpc_act(
    cfg: &MpcConfig,
    c: f64,
    grid: &ActionGrid,
    econ: &EconomicParams,
    kp: &KineticParams,
) -> FlotationAction {
    let steps = cfg.horizon.max(1) as f64;
    let mut best = (f64::NEG_INFINITY, grid.t_min, grid.f_min);
    for (t, f) in grid.actions() {
        let g = grade_unchecked(kp, c, t, f);
        let r = recovery_unchecked(kp, t, f);
        let value = steps * reward_unchecked(econ, g, r, t, f, false);
        if value > best.0 {
            best = (value, t, f);
        }
    }
    FlotationAction::new(best.1, best.2, false)
}

#[derive(Debug, Clone)]
pub struct MpcPolicy {
    cfg: MpcConfig,
    feedstock: GpHyperparams,
    measured: Vec<(usize, f64)>,
}

impl MpcPolicy {
    /// `feedstock` supplies the prior mean used before the first measurement
    /// and the GP used by [`CompositionSource::BeliefMean`].
    pub fn new(cfg: MpcConfig, feedstock: GpHyperparams) -> Self {
        Self { cfg, feedstock, measured: Vec::new() }
    }

    pub fn composition_estimate(&self, step: usize) -> Result<f64> {
        match (self.cfg.composition_source, self.measured.last()) {
            (_, None) => Ok(self.feedstock.mean),
            (CompositionSource::LastObserved, Some((_, c))) => Ok(*c),
            (CompositionSource::BeliefMean, Some(_)) => {
                let xs: Vec<f64> = self.measured.iter().map(|(s, _)| *s as f64).collect();
                let ys = self.measured.iter().map(|(_, c)| *c).collect();
                let gp = GpPosterior::fit(self.feedstock.clone(), Points::scalar(&xs), ys)?;
                Ok(gp.predict_unchecked(&[step as f64]).0)
            }
        }
    }
}

impl Policy for MpcPolicy {
    fn name(&self) -> &str {
        "mpc"
    }

    fn reset(&mut self, _ctx: &DecisionContext<'_>) -> Result<()> {
        self.cfg.validate()?;
        self.measured.clear();
        Ok(())
    }

    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<FlotationAction> {
        let c = self.composition_estimate(ctx.step)?.clamp(0.0, ctx.kp.c_max);
        let mut a = mpc_act(&self.cfg, c, ctx.grid, ctx.econ, ctx.kp);
        a.measure = ctx.measurement_available();
        Ok(a)
    }

    fn observe(&mut self, ctx: &DecisionContext<'_>, _action: &FlotationAction, obs: &FlotationObservation) -> Result<()> {
        if let Some(c) = obs.composition {
            self.measured.push((ctx.step, c));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::kinetic_reward;
    use proptest::prelude::*;

    fn brute_force(c: f64, grid: &ActionGrid, econ: &EconomicParams) -> (f64, f64) {
        let kp = KineticParams::default();
        let all: Vec<_> = grid.actions().collect();
        let best = all
            .iter()
            .map(|&(t, f)| kinetic_reward(&kp, econ, c, t, f, false))
            .fold(f64::NEG_INFINITY, f64::max);
        *all.iter().find(|&&(t, f)| kinetic_reward(&kp, econ, c, t, f, false) == best).unwrap()
    }

    #[test]
    fn single_cell_grid() {
        let grid = ActionGrid::single(2.0, 40.0);
        let a = mpc_act(&MpcConfig::default(), 15.0, &grid, &EconomicParams::default(), &KineticParams::default());
        assert_eq!((a.t, a.f), (2.0, 40.0));
    }

    #[test]
    fn matches_brute_force_at_c10() {
        let grid = ActionGrid::default();
        let econ = EconomicParams::default();
        let a = mpc_act(&MpcConfig::default(), 10.0, &grid, &econ, &KineticParams::default());
        assert_eq!((a.t, a.f), brute_force(10.0, &grid, &econ));
    }

    #[test]
    fn horizon_does_not_change_choice() {
        let grid = ActionGrid::default();
        let econ = EconomicParams::default();
        let kp = KineticParams::default();
        let one = mpc_act(&MpcConfig::default(), 15.0, &grid, &econ, &kp);
        let many = mpc_act(&MpcConfig { horizon: 7, ..Default::default() }, 15.0, &grid, &econ, &kp);
        assert_eq!(one, many);
    }

    proptest! {
        #[test]
        fn invariant_to_price_scaling(c in 1.0f64..40.0, scale in 1.0f64..10.0) {
            let grid = ActionGrid::default();
            let kp = KineticParams::default();
            let base = EconomicParams::default();
            let scaled = EconomicParams {
                price_coeff: base.price_coeff * scale,
                opex_time_coeff: base.opex_time_coeff * scale,
                opex_air_coeff: base.opex_air_coeff * scale,
                ..base
            };
            let cfg = MpcConfig::default();
            prop_assert_eq!(mpc_act(&cfg, c, &grid, &base, &kp), mpc_act(&cfg, c, &grid, &scaled, &kp));
        }
    }

    #[test]
    fn holds_last_measurement() {
        let h = GpHyperparams::new(1.0, vec![10.0], 1e-4, 15.0);
        let mut p = MpcPolicy::new(MpcConfig::default(), h.clone());
        assert_eq!(p.composition_estimate(0).unwrap(), 15.0);
        p.measured.push((3, 12.0));
        assert_eq!(p.composition_estimate(10).unwrap(), 12.0);
        let mut q = MpcPolicy::new(MpcConfig { composition_source: CompositionSource::BeliefMean, ..Default::default() }, h);
        q.measured.push((3, 12.0));
        let far = q.composition_estimate(500).unwrap();
        assert!((far - 15.0).abs() < 1e-6);
        assert!((q.composition_estimate(3).unwrap() - 12.0).abs() < 1e-3);
    }
}
