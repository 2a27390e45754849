//! The agent's world model: a GP over the feedstock time series and GPs over
//! the grade and recovery residuals of the kinetic model, refit from the full
//! observation log after every batch.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{ActionGrid, FlotationAction, FlotationObservation};
use crate::error::{Error, Result};
use crate::gp::{cholesky_psd, GpHyperparams, GpPosterior, Points};
use crate::ground_truth::{
    sample_separable, Axis, ErrorSurfaceConfig, FeedstockSignalConfig, GroundTruth, Surface3,
    COMPOSITION_NODES, COMPOSITION_SPAN_STD, MIN_COMPOSITION,
};
use crate::kinetic::{
    grade_unchecked, recovery_unchecked, reward_unchecked, EconomicParams, KineticParams,
};

/// Observation noise used by the belief GPs, pp^2.
pub const BELIEF_NOISE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefConfig {
    /// GP over timestep index.
    pub feedstock: GpHyperparams,
    /// GP over (c, t, f) shared by the grade and recovery residuals.
    pub error: GpHyperparams,
}

impl BeliefConfig {
    /// Hyperparameters matching the processes that generate the truth.
    pub fn well_specified(feed: &FeedstockSignalConfig, errors: &ErrorSurfaceConfig) -> Self {
        Self { feedstock: feed.hyperparams(BELIEF_NOISE), error: errors.hyperparams(BELIEF_NOISE) }
    }
}

/// One residual observation of the kinetic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub c: f64,
    pub t: f64,
    pub f: f64,
    pub grade: f64,
    pub recovery: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog {
    /// (timestep, measured composition)
    pub compositions: Vec<(usize, f64)>,
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone)]
pub struct BeliefState {
    config: BeliefConfig,
    kp: KineticParams,
    feedstock_gp: GpPosterior,
    grade_error_gp: GpPosterior,
    recovery_error_gp: GpPosterior,
    log: ObservationLog,
}

/// Serializable view of a belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub config: BeliefConfig,
    pub kinetic: KineticParams,
    pub log: ObservationLog,
}

impl BeliefState {
    /// Zero-data belief.
    pub fn init(config: BeliefConfig, kp: KineticParams) -> Result<Self> {
        if config.feedstock.dim() != 1 || config.error.dim() != 3 {
            return Err(Error::Config("belief GPs must be 1-d (feedstock) and 3-d (error)".into()));
        }
        let feedstock_gp = GpPosterior::prior(config.feedstock.clone())?;
        let grade_error_gp = GpPosterior::prior(config.error.clone())?;
        let recovery_error_gp = grade_error_gp.clone();
        Ok(Self { config, kp, feedstock_gp, grade_error_gp, recovery_error_gp, log: ObservationLog::default() })
    }

    /// Rebuild a belief from a log; equal to applying every update in turn.
    pub fn from_log(config: BeliefConfig, kp: KineticParams, log: ObservationLog) -> Result<Self> {
        let mut b = Self::init(config, kp)?;
        b.log = log;
        b.refit()?;
        Ok(b)
    }

    pub fn snapshot(&self) -> BeliefSnapshot {
        BeliefSnapshot { config: self.config.clone(), kinetic: self.kp, log: self.log.clone() }
    }

    pub fn from_snapshot(s: BeliefSnapshot) -> Result<Self> {
        Self::from_log(s.config, s.kinetic, s.log)
    }

    pub fn config(&self) -> &BeliefConfig {
        &self.config
    }

    pub fn kinetic(&self) -> &KineticParams {
        &self.kp
    }

    pub fn log(&self) -> &ObservationLog {
        &self.log
    }

    pub fn feedstock_gp(&self) -> &GpPosterior {
        &self.feedstock_gp
    }

    pub fn grade_error_gp(&self) -> &GpPosterior {
        &self.grade_error_gp
    }

    pub fn recovery_error_gp(&self) -> &GpPosterior {
        &self.recovery_error_gp
    }

    fn refit(&mut self) -> Result<()> {
        let wrap = |e: Error| Error::Belief(e.to_string());
        let steps: Vec<f64> = self.log.compositions.iter().map(|(s, _)| *s as f64).collect();
        let comps = self.log.compositions.iter().map(|(_, c)| *c).collect();
        self.feedstock_gp =
            GpPosterior::fit(self.config.feedstock.clone(), Points::scalar(&steps), comps).map_err(wrap)?;
        let mut inputs = Points::with_capacity(3, self.log.residuals.len());
        for r in &self.log.residuals {
            inputs.push(&[r.c, r.t, r.f])?;
        }
        let grade = self.log.residuals.iter().map(|r| r.grade).collect();
        let recovery = self.log.residuals.iter().map(|r| r.recovery).collect();
        self.grade_error_gp = GpPosterior::fit(self.config.error.clone(), inputs, grade).map_err(wrap)?;
        self.recovery_error_gp = self.grade_error_gp.with_targets(recovery).map_err(wrap)?;
        Ok(())
    }

    /// Posterior mean and variance of the feedstock composition at `step`.
    pub fn composition_estimate(&self, step: usize) -> (f64, f64) {
        self.feedstock_gp.predict_unchecked(&[step as f64])
    }

    /// Composition the agent attributes to the batch at `step`: the measured
    /// value if any, otherwise the feedstock posterior mean.
    pub fn attributed_composition(&self, step: usize, obs: &FlotationObservation) -> f64 {
        let c = obs.composition.unwrap_or_else(|| self.composition_estimate(step).0);
        c.clamp(0.0, self.kp.c_max)
    }

    /// New belief including the batch processed at `step`.
    pub fn update(
        &self,
        step: usize,
        action: &FlotationAction,
        obs: &FlotationObservation,
        c_used: f64,
    ) -> Result<Self> {
        if !(0.0..=self.kp.c_max).contains(&c_used) {
            return Err(Error::Belief(format!("attributed composition {c_used} out of range")));
        }
        let mut next = self.clone();
        if let Some(c) = obs.composition {
            next.log.compositions.push((step, c));
        }
        next.log.residuals.push(Residual {
            c: c_used,
            t: action.t,
            f: action.f,
            grade: obs.grade - grade_unchecked(&self.kp, c_used, action.t, action.f),
            recovery: obs.recovery - recovery_unchecked(&self.kp, action.t, action.f),
        });
        next.refit()?;
        Ok(next)
    }

    /// Posterior (mean, variance) of grade and recovery at (c, t, f).
    pub fn predict_outputs(&self, c: f64, t: f64, f: f64) -> ((f64, f64), (f64, f64)) {
        let x = [c, t, f];
        let (eg, vg) = self.grade_error_gp.predict_unchecked(&x);
        let (er, vr) = self.recovery_error_gp.predict_unchecked(&x);
        ((grade_unchecked(&self.kp, c, t, f) + eg, vg), (recovery_unchecked(&self.kp, t, f) + er, vr))
    }

    /// Reward at the posterior-mean outputs, with a first-order variance.
    pub fn predict_reward(&self, c: f64, action: &FlotationAction, econ: &EconomicParams) -> (f64, f64) {
        let ((g, vg), (r, vr)) = self.predict_outputs(c, action.t, action.f);
        let g = g.clamp(0.0, self.kp.c_max);
        let r = r.clamp(0.0, 100.0);
        let mean = reward_unchecked(econ, g, r, action.t, action.f, action.measure);
        let scale = econ.revenue_scale() / 1e4;
        let dg = scale * r;
        let dr = scale * g;
        (mean, dg * dg * vg + dr * dr * vr)
    }

    /// Composition axis for sampled worlds: posterior mean over the horizon
    /// widened by four prior standard deviations.
    fn composition_axis(&self) -> Axis {
        let mean = self.config.feedstock.mean;
        let std = self.config.feedstock.variance.sqrt();
        if std == 0.0 {
            return Axis::new(mean, 0.0, 1);
        }
        let lo = (mean - COMPOSITION_SPAN_STD * std).max(MIN_COMPOSITION);
        let hi = (mean + COMPOSITION_SPAN_STD * std).min(self.kp.c_max);
        Axis::new(lo, (hi - lo) / (COMPOSITION_NODES - 1) as f64, COMPOSITION_NODES)
    }

    /// A full world realization drawn from the belief, shaped like a
    /// [`GroundTruth`]. Error surfaces use pathwise conditioning: a lattice
    /// prior draw corrected towards the residual log.
    pub fn sample_world<R: Rng + ?Sized>(
        &self,
        grid: &ActionGrid,
        horizon: usize,
        rng: &mut R,
    ) -> Result<GroundTruth> {
        let steps: Vec<f64> = (0..horizon).map(|t| t as f64).collect();
        let composition_series = self
            .feedstock_gp
            .sample(&Points::scalar(&steps), rng)?
            .into_iter()
            .map(|c| c.clamp(MIN_COMPOSITION, self.kp.c_max))
            .collect();
        let grade_error = self.sample_surface(&self.grade_error_gp, grid, rng)?;
        let recovery_error = self.sample_surface(&self.recovery_error_gp, grid, rng)?;
        Ok(GroundTruth { composition_series, grade_error, recovery_error, seed: rng.random(), c_max: self.kp.c_max })
    }

    fn sample_surface<R: Rng + ?Sized>(
        &self,
        gp: &GpPosterior,
        grid: &ActionGrid,
        rng: &mut R,
    ) -> Result<Surface3> {
        let h = gp.hyper();
        let ls = &h.length_scales;
        let mut surface = sample_separable(
            h.variance.sqrt(),
            [ls[0], ls[1], ls[2]],
            self.composition_axis(),
            grid.t_axis(),
            grid.f_axis(),
            rng,
        )?;
        if gp.is_empty() || h.variance == 0.0 {
            return Ok(surface);
        }
        let inputs = gp.inputs();
        let rhs: Vec<f64> = (0..gp.len())
            .map(|i| {
                let x = inputs.get(i);
                let prior = surface.value_clamped(x[0], x[1], x[2]);
                let eps: f64 = rng.sample::<f64, _>(StandardNormal) * gp.noise()[i].sqrt();
                gp.targets()[i] - prior - eps
            })
            .collect();
        let weights = gp.solve(&rhs)?;
        let nodes = surface.node_points();
        for (v, x) in surface.values.iter_mut().zip(nodes.iter()) {
            *v += gp.cross_cov(x).iter().zip(&weights).map(|(k, w)| k * w).sum::<f64>();
        }
        Ok(surface)
    }

    /// Sampler for lazily drawn worlds over a short planning window starting
    /// at `start`.
    pub fn world_sampler(&self, start: usize, window: usize) -> Result<WorldSampler<'_>> {
        let window = window.max(1);
        let steps: Vec<f64> = (start..start + window).map(|t| t as f64).collect();
        let pred = self.feedstock_gp.predict_joint(&Points::scalar(&steps))?;
        let scale = self.config.feedstock.variance;
        let chol = if scale == 0.0 { None } else { Some(cholesky_psd(&pred.cov, scale)?) };
        Ok(WorldSampler { belief: self, composition_mean: pred.mean, composition_chol: chol })
    }
}

/// Draws compositions for a planning window and joint residual errors at
/// arbitrary (c, t, f) points, all from the current posterior.
#[derive(Debug)]
pub struct WorldSampler<'a> {
    belief: &'a BeliefState,
    composition_mean: Vec<f64>,
    composition_chol: Option<DMatrix<f64>>,
}

impl WorldSampler<'_> {
    pub fn window(&self) -> usize {
        self.composition_mean.len()
    }

    pub fn belief(&self) -> &BeliefState {
        self.belief
    }

    /// Joint composition draw over the window, clamped to [1, c_max].
    pub fn draw_compositions<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.composition_mean.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = self.composition_mean.clone();
        if let Some(l) = &self.composition_chol {
            for i in 0..m {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += l[(i, j)] * z[j];
                }
                out[i] += acc;
            }
        }
        let c_max = self.belief.kp.c_max;
        out.iter_mut().for_each(|c| *c = c.clamp(MIN_COMPOSITION, c_max));
        out
    }

    /// Joint draw of (grade error, recovery error) at `points`.
    pub fn draw_errors<R: Rng + ?Sized>(&self, points: &Points, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let b = self.belief;
        let scale = b.config.error.variance;
        let m = points.len();
        let zg: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let zr: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let (mut eg, mut er, cov) =
            GpPosterior::predict_joint_pair(&b.grade_error_gp, &b.recovery_error_gp, points)?;
        if scale == 0.0 {
            return Ok((eg, er));
        }
        let l = cholesky_psd(&cov, scale)?;
        for i in 0..m {
            let (mut ag, mut ar) = (0.0, 0.0);
            for j in 0..=i {
                ag += l[(i, j)] * zg[j];
                ar += l[(i, j)] * zr[j];
            }
            eg[i] += ag;
            er[i] += ar;
        }
        Ok((eg, er))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn belief(err_lv: f64) -> BeliefState {
        let feed = FeedstockSignalConfig { log10_variance: 0.0, log10_correlation_length: 1.0, ..Default::default() };
        let errors = ErrorSurfaceConfig::with_log10_variance(err_lv);
        BeliefState::init(BeliefConfig::well_specified(&feed, &errors), KineticParams::default()).unwrap()
    }

    fn obs(g: f64, r: f64, c: Option<f64>) -> FlotationObservation {
        FlotationObservation { composition: c, grade: g, recovery: r }
    }

    #[test]
    fn zero_data_belief_is_the_prior() {
        let b = belief(0.0);
        let kp = KineticParams::default();
        let ((g, vg), (r, vr)) = b.predict_outputs(12.0, 3.0, 80.0);
        assert_eq!(g, grade_unchecked(&kp, 12.0, 3.0, 80.0));
        assert_eq!(r, recovery_unchecked(&kp, 3.0, 80.0));
        assert_eq!((vg, vr), (100.0, 100.0));
        assert_eq!(b.composition_estimate(40), (15.0, 25.0));
        let econ = EconomicParams::default();
        let a = FlotationAction::new(3.0, 80.0, false);
        let expected = reward_unchecked(&econ, g, r, 3.0, 80.0, false);
        assert_eq!(b.predict_reward(12.0, &a, &econ).0, expected);
    }

    #[test]
    fn update_bookkeeping() {
        let b = belief(0.0);
        let kp = KineticParams::default();
        let a = FlotationAction::new(4.0, 60.0, true);
        let (g0, r0) = (grade_unchecked(&kp, 14.0, 4.0, 60.0), recovery_unchecked(&kp, 4.0, 60.0));
        let b1 = b.update(0, &a, &obs(g0, r0, Some(14.0)), 14.0).unwrap();
        let res = b1.log().residuals[0];
        assert!(res.grade.abs() < 1e-12 && res.recovery.abs() < 1e-12);
        let ((g, vg), _) = b1.predict_outputs(14.0, 4.0, 60.0);
        assert!((g - g0).abs() < 1e-6);
        assert!(vg < 100.0);
        assert_eq!(b1.log().compositions, vec![(0, 14.0)]);

        let b2 = b.update(0, &a, &obs(g0 + 5.0, r0, None), 14.0).unwrap();
        assert!(b2.log().compositions.is_empty());
        let ((g, _), _) = b2.predict_outputs(14.0, 4.0, 60.0);
        assert!((g - (g0 + 5.0)).abs() < 1e-3);
    }

    #[test]
    fn attribution_uses_feedstock_mean_when_unmeasured() {
        let b = belief(0.0);
        assert_eq!(b.attributed_composition(3, &obs(1.0, 1.0, None)), 15.0);
        assert_eq!(b.attributed_composition(3, &obs(1.0, 1.0, Some(11.0))), 11.0);
    }

    #[test]
    fn observed_points_have_lower_reward_variance() {
        let mut b = belief(0.0);
        let econ = EconomicParams::default();
        let a = FlotationAction::new(5.0, 100.0, false);
        for s in 0..5 {
            b = b.update(s, &a, &obs(20.0, 70.0, Some(15.0)), 15.0).unwrap();
        }
        let seen = b.predict_reward(15.0, &a, &econ).1;
        let unseen = b.predict_reward(15.0, &FlotationAction::new(0.5, 200.0, false), &econ).1;
        assert!(seen < unseen);
    }

    #[test]
    fn from_log_reproduces_posterior() {
        let mut b = belief(-1.0);
        for s in 0..6 {
            let a = FlotationAction::new(1.0 + s as f64, 20.0 * (s + 1) as f64, true);
            b = b.update(s, &a, &obs(18.0 + s as f64, 60.0, Some(14.0 + 0.1 * s as f64)), 14.0).unwrap();
        }
        let again = BeliefState::from_snapshot(b.snapshot()).unwrap();
        for x in [[14.0, 2.0, 50.0], [16.0, 7.0, 150.0]] {
            let p = b.predict_outputs(x[0], x[1], x[2]);
            let q = again.predict_outputs(x[0], x[1], x[2]);
            assert!((p.0 .0 - q.0 .0).abs() < 1e-12 && (p.1 .1 - q.1 .1).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_world_is_deterministic_and_conditioned() {
        let mut b = belief(0.0);
        for s in 0..100 {
            b = b
                .update(s, &FlotationAction::new(5.0, 100.0, true), &obs(20.0, 70.0, Some(10.0 + 0.05 * s as f64)), 10.0 + 0.05 * s as f64)
                .unwrap();
        }
        let grid = ActionGrid::default();
        let w1 = b.sample_world(&grid, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let w2 = b.sample_world(&grid, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(w1, w2);
        for (s, c) in w1.composition_series.iter().enumerate() {
            assert!((c - (10.0 + 0.05 * s as f64)).abs() < 0.05, "step {s}: {c}");
        }
    }

    #[test]
    fn lazy_error_draw_matches_posterior_at_data() {
        let b = belief(0.0);
        let a = FlotationAction::new(5.0, 100.0, true);
        let b = b.update(0, &a, &obs(25.0, 75.0, Some(15.0)), 15.0).unwrap();
        let sampler = b.world_sampler(1, 3).unwrap();
        let pts = Points::from_rows(3, &[[15.0, 5.0, 100.0]]).unwrap();
        let (eg, er) = sampler.draw_errors(&pts, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let res = b.log().residuals[0];
        assert!((eg[0] - res.grade).abs() < 0.1);
        assert!((er[0] - res.recovery).abs() < 0.1);
        assert_eq!(sampler.draw_compositions(&mut ChaCha8Rng::seed_from_u64(3)).len(), 3);
    }
}
