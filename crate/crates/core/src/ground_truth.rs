//! Hidden "reality" for one episode: a feedstock composition series plus
//! grade and recovery error surfaces added on top of the kinetic model.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::ActionGrid;
use crate::error::{Error, Result};
use crate::gp::{cholesky_psd, GpHyperparams, GpPosterior, Points};
use crate::kinetic::{grade_unchecked, recovery_unchecked, KineticParams};

/// Lower clamp applied to every synthesized composition, percent.
pub const MIN_COMPOSITION: f64 = 1.0;
/// Number of composition nodes in a synthesized error surface.
pub const COMPOSITION_NODES: usize = 9;
/// Half-width of the composition axis, in feedstock standard deviations.
pub const COMPOSITION_SPAN_STD: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedstockSignalConfig {
    /// log10 of the variance in units of `amplitude`^2; `-inf` gives a constant feed.
    pub log10_variance: f64,
    /// log10 of the correlation length in timesteps.
    pub log10_correlation_length: f64,
    pub mean_composition: f64,
    pub amplitude: f64,
    pub horizon: usize,
}

impl Default for FeedstockSignalConfig {
    fn default() -> Self {
        Self {
            log10_variance: -3.0,
            log10_correlation_length: 2.0,
            mean_composition: 15.0,
            amplitude: 5.0,
            horizon: 100,
        }
    }
}

impl FeedstockSignalConfig {
    pub fn variance(&self) -> f64 {
        self.amplitude * self.amplitude * 10f64.powf(self.log10_variance)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn correlation_length(&self) -> f64 {
        10f64.powf(self.log10_correlation_length)
    }

    /// GP over timestep index that generates the signal.
    pub fn hyperparams(&self, noise_variance: f64) -> GpHyperparams {
        GpHyperparams::new(
            self.variance(),
            vec![self.correlation_length()],
            noise_variance,
            self.mean_composition,
        )
    }

    pub fn validate(&self, kp: &KineticParams) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("feedstock horizon must be >= 1".into()));
        }
        if !(self.mean_composition > 0.0 && self.mean_composition < kp.c_max) {
            return Err(Error::Config(format!(
                "mean composition {} outside (0, {})",
                self.mean_composition, kp.c_max
            )));
        }
        if !(self.amplitude >= 0.0) || self.log10_variance.is_nan() {
            return Err(Error::Config("feedstock amplitude/variance invalid".into()));
        }
        if !self.log10_correlation_length.is_finite() {
            return Err(Error::Config("feedstock correlation length must be finite".into()));
        }
        Ok(())
    }

    /// Composition axis used for error surfaces: mean +/- 4 std.
    pub fn composition_axis(&self, kp: &KineticParams) -> Axis {
        let std = self.std();
        if std == 0.0 {
            return Axis::new(self.mean_composition, 0.0, 1);
        }
        let lo = (self.mean_composition - COMPOSITION_SPAN_STD * std).max(MIN_COMPOSITION);
        let hi = (self.mean_composition + COMPOSITION_SPAN_STD * std).min(kp.c_max);
        Axis::new(lo, (hi - lo) / (COMPOSITION_NODES - 1) as f64, COMPOSITION_NODES)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorSurfaceConfig {
    /// log10 of the variance in units of `amplitude`^2; `-inf` disables errors.
    pub log10_variance: f64,
    pub length_scale_t: f64,
    pub length_scale_f: f64,
    pub length_scale_c: f64,
    pub amplitude: f64,
}

impl Default for ErrorSurfaceConfig {
    fn default() -> Self {
        Self {
            log10_variance: -2.0,
            length_scale_t: 3.0,
            length_scale_f: 50.0,
            length_scale_c: 5.0,
            amplitude: 10.0,
        }
    }
}

impl ErrorSurfaceConfig {
    pub fn with_log10_variance(log10_variance: f64) -> Self {
        Self { log10_variance, ..Self::default() }
    }

    pub fn variance(&self) -> f64 {
        self.amplitude * self.amplitude * 10f64.powf(self.log10_variance)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// GP over (c, t, f).
    pub fn hyperparams(&self, noise_variance: f64) -> GpHyperparams {
        GpHyperparams::new(
            self.variance(),
            vec![self.length_scale_c, self.length_scale_t, self.length_scale_f],
            noise_variance,
            0.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if [self.length_scale_t, self.length_scale_f, self.length_scale_c]
            .iter()
            .any(|l| !(*l > 0.0))
        {
            return Err(Error::Config("error surface length scales must be > 0".into()));
        }
        if !(self.amplitude >= 0.0) || self.log10_variance.is_nan() {
            return Err(Error::Config("error surface amplitude/variance invalid".into()));
        }
        Ok(())
    }
}

/// Uniformly spaced axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(min: f64, step: f64, len: usize) -> Self {
        Self { min, step, len }
    }

    pub fn max(&self) -> f64 {
        self.min + self.step * (self.len.saturating_sub(1)) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + self.step * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    fn contains(&self, x: f64) -> bool {
        let tol = 1e-9 * (1.0 + self.max().abs());
        x >= self.min - tol && x <= self.max() + tol
    }

    /// Lower node index and weight of the upper node; `x` is clamped.
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        if self.len <= 1 || self.step <= 0.0 {
            return (0, 0.0);
        }
        let u = ((x - self.min) / self.step).clamp(0.0, (self.len - 1) as f64);
        let i = (u.floor() as usize).min(self.len - 2);
        (i, u - i as f64)
    }
}

/// Node values on a (c, t, f) lattice queried by trilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface3 {
    pub c_axis: Axis,
    pub t_axis: Axis,
    pub f_axis: Axis,
    /// Row-major in (c, t, f).
    pub values: Vec<f64>,
}

impl Surface3 {
    pub fn zeros(c_axis: Axis, t_axis: Axis, f_axis: Axis) -> Self {
        let n = c_axis.len * t_axis.len * f_axis.len;
        Self { c_axis, t_axis, f_axis, values: vec![0.0; n] }
    }

    #[inline]
    pub fn index(&self, ic: usize, it: usize, jf: usize) -> usize {
        (ic * self.t_axis.len + it) * self.f_axis.len + jf
    }

    pub fn node_value(&self, ic: usize, it: usize, jf: usize) -> f64 {
        self.values[self.index(ic, it, jf)]
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// All node coordinates in storage order.
    pub fn node_points(&self) -> Points {
        let mut p = Points::with_capacity(3, self.node_count());
        for c in self.c_axis.nodes() {
            for t in self.t_axis.nodes() {
                for f in self.f_axis.nodes() {
                    p.push(&[c, t, f]).expect("3-d point");
                }
            }
        }
        p
    }

    /// Interpolated value. `t` and `f` must lie on their axes; `c` is clamped
    /// to the composition axis.
    pub fn value(&self, c: f64, t: f64, f: f64) -> Result<f64> {
        if !self.t_axis.contains(t) || !self.f_axis.contains(f) {
            return Err(Error::OutOfBounds(format!(
                "(t={t}, f={f}) outside t=[{}, {}], f=[{}, {}]",
                self.t_axis.min,
                self.t_axis.max(),
                self.f_axis.min,
                self.f_axis.max()
            )));
        }
        Ok(self.value_clamped(c, t, f))
    }

    #[inline]
    pub(crate) fn value_clamped(&self, c: f64, t: f64, f: f64) -> f64 {
        let (ic, wc) = self.c_axis.locate(c);
        let (it, wt) = self.t_axis.locate(t);
        let (jf, wf) = self.f_axis.locate(f);
        let mut acc = 0.0;
        for (dc, a) in [(0, 1.0 - wc), (1, wc)] {
            if a == 0.0 {
                continue;
            }
            for (dt, b) in [(0, 1.0 - wt), (1, wt)] {
                if b == 0.0 {
                    continue;
                }
                for (df, d) in [(0, 1.0 - wf), (1, wf)] {
                    if d == 0.0 {
                        continue;
                    }
                    acc += a * b * d * self.node_value(ic + dc, it + dt, jf + df);
                }
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub composition_series: Vec<f64>,
    pub grade_error: Surface3,
    pub recovery_error: Surface3,
    pub seed: u64,
    pub c_max: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const FEED_STREAM: u64 = 1;
const GRADE_STREAM: u64 = 2;
const RECOVERY_STREAM: u64 = 3;

impl GroundTruth {
    /// Everything derived from one seed.
    pub fn synthesize(
        feed: &FeedstockSignalConfig,
        errors: &ErrorSurfaceConfig,
        grid: &ActionGrid,
        kp: &KineticParams,
        seed: u64,
    ) -> Result<Self> {
        Self::synthesize_with_surface_seed(feed, errors, grid, kp, seed, seed)
    }

    /// Feedstock from `seed`, error surfaces from `surface_seed`, so one
    /// surface can be frozen across replicates.
    pub fn synthesize_with_surface_seed(
        feed: &FeedstockSignalConfig,
        errors: &ErrorSurfaceConfig,
        grid: &ActionGrid,
        kp: &KineticParams,
        seed: u64,
        surface_seed: u64,
    ) -> Result<Self> {
        feed.validate(kp)?;
        errors.validate()?;
        grid.validate()?;
        let composition_series =
            gen_feedstock_signal(feed, kp, &mut stream_rng(seed, FEED_STREAM))?;
        let c_axis = feed.composition_axis(kp);
        let grade_error =
            gen_error_surface(errors, c_axis, grid, &mut stream_rng(surface_seed, GRADE_STREAM))?;
        let recovery_error = gen_error_surface(
            errors,
            c_axis,
            grid,
            &mut stream_rng(surface_seed, RECOVERY_STREAM),
        )?;
        Ok(Self { composition_series, grade_error, recovery_error, seed, c_max: kp.c_max })
    }

    pub fn horizon(&self) -> usize {
        self.composition_series.len()
    }

    pub fn composition(&self, step: usize) -> f64 {
        self.composition_series[step.min(self.composition_series.len() - 1)]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Composition series drawn from a 1-D GP over timesteps, clamped to
/// `[1, c_max]`.
pub fn gen_feedstock_signal<R: Rng + ?Sized>(
    cfg: &FeedstockSignalConfig,
    kp: &KineticParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let raw = gen_feedstock_signal_unclamped(cfg, rng)?;
    Ok(raw.into_iter().map(|c| c.clamp(MIN_COMPOSITION, kp.c_max)).collect())
}

pub fn gen_feedstock_signal_unclamped<R: Rng + ?Sized>(
    cfg: &FeedstockSignalConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let prior = GpPosterior::prior(cfg.hyperparams(0.0))?;
    let steps: Vec<f64> = (0..cfg.horizon).map(|t| t as f64).collect();
    prior.sample(&Points::scalar(&steps), rng)
}

fn unit_factor(nodes: &[f64], length: f64) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let z = (nodes[i] - nodes[j]) / length;
        (-0.5 * z * z).exp()
    });
    cholesky_psd(&k, 1.0)
}

/// Apply a lower-triangular factor along one axis of a row-major 3-tensor.
fn apply_along(values: &mut [f64], dims: [usize; 3], axis: usize, l: &DMatrix<f64>) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut buf = vec![0.0; n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (i, b) in buf.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += l[(i, j)] * values[base + j * stride];
                }
                *b = acc;
            }
            for (i, b) in buf.iter().enumerate() {
                values[base + i * stride] = *b;
            }
        }
    }
}

/// GP draw on the (composition axis) x (action grid) lattice. The separable
/// kernel lets the draw factor into one Cholesky per axis.
pub fn gen_error_surface<R: Rng + ?Sized>(
    cfg: &ErrorSurfaceConfig,
    c_axis: Axis,
    grid: &ActionGrid,
    rng: &mut R,
) -> Result<Surface3> {
    sample_separable(
        cfg.std(),
        [cfg.length_scale_c, cfg.length_scale_t, cfg.length_scale_f],
        c_axis,
        grid.t_axis(),
        grid.f_axis(),
        rng,
    )
}

/// Zero-mean squared-exponential GP draw on a lattice, length scales in
/// (c, t, f) order.
pub(crate) fn sample_separable<R: Rng + ?Sized>(
    std: f64,
    lengths: [f64; 3],
    c_axis: Axis,
    t_axis: Axis,
    f_axis: Axis,
    rng: &mut R,
) -> Result<Surface3> {
    let mut surface = Surface3::zeros(c_axis, t_axis, f_axis);
    let n = surface.node_count();
    let mut values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if std == 0.0 {
        return Ok(surface);
    }
    let dims = [c_axis.len, t_axis.len, f_axis.len];
    let factors = [
        unit_factor(&c_axis.nodes(), lengths[0])?,
        unit_factor(&t_axis.nodes(), lengths[1])?,
        unit_factor(&f_axis.nodes(), lengths[2])?,
    ];
    for (axis, l) in factors.iter().enumerate() {
        apply_along(&mut values, dims, axis, l);
    }
    for v in &mut values {
        *v *= std;
    }
    surface.values = values;
    Ok(surface)
}

/// True grade and recovery: kinetic prediction plus interpolated error,
/// clamped to physical ranges.
pub fn true_outputs(
    gt: &GroundTruth,
    kp: &KineticParams,
    c: f64,
    t: f64,
    f: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=kp.c_max).contains(&c) {
        return Err(Error::OutOfBounds(format!("composition {c} outside [0, {}]", kp.c_max)));
    }
    let eg = gt.grade_error.value(c, t, f)?;
    let er = gt.recovery_error.value(c, t, f)?;
    Ok(combine(kp, c, t, f, eg, er))
}

#[inline]
pub(crate) fn combine(kp: &KineticParams, c: f64, t: f64, f: f64, eg: f64, er: f64) -> (f64, f64) {
    let g = (grade_unchecked(kp, c, t, f) + eg).clamp(0.0, kp.c_max);
    let r = (recovery_unchecked(kp, t, f) + er).clamp(0.0, 100.0);
    (g, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ActionGrid {
        ActionGrid::default()
    }

    #[test]
    fn zero_variance_feed_is_constant() {
        let cfg = FeedstockSignalConfig { log10_variance: f64::NEG_INFINITY, ..Default::default() };
        let kp = KineticParams::default();
        let s = gen_feedstock_signal(&cfg, &kp, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(s.len(), 100);
        assert!(s.iter().all(|c| *c == 15.0));
    }

    #[test]
    fn zero_variance_surface_matches_kinetics() {
        let errors = ErrorSurfaceConfig::with_log10_variance(f64::NEG_INFINITY);
        let kp = KineticParams::default();
        let gt = GroundTruth::synthesize(&FeedstockSignalConfig::default(), &errors, &grid(), &kp, 7)
            .unwrap();
        assert!(gt.grade_error.values.iter().all(|v| *v == 0.0));
        for (t, f) in [(0.5, 5.0), (3.0, 100.0), (10.0, 200.0)] {
            let c = gt.composition(0);
            let (g, r) = true_outputs(&gt, &kp, c, t, f).unwrap();
            assert_eq!(g, grade_unchecked(&kp, c, t, f));
            assert_eq!(r, recovery_unchecked(&kp, t, f));
        }
    }

    #[test]
    fn recovery_clamped_at_100() {
        let kp = KineticParams::default();
        let mut gt = GroundTruth::synthesize(
            &FeedstockSignalConfig::default(),
            &ErrorSurfaceConfig::with_log10_variance(f64::NEG_INFINITY),
            &grid(),
            &kp,
            1,
        )
        .unwrap();
        gt.recovery_error.values.iter_mut().for_each(|v| *v = 50.0);
        let (_, r) = true_outputs(&gt, &kp, 15.0, 10.0, 200.0).unwrap();
        assert_eq!(r, 100.0);
    }

    #[test]
    fn node_queries_are_exact() {
        let kp = KineticParams::default();
        let feed = FeedstockSignalConfig { log10_variance: 0.0, ..Default::default() };
        let gt = GroundTruth::synthesize(
            &feed,
            &ErrorSurfaceConfig::with_log10_variance(0.0),
            &grid(),
            &kp,
            11,
        )
        .unwrap();
        let s = &gt.grade_error;
        for (ic, it, jf) in [(0, 0, 0), (3, 7, 11), (8, 19, 39), (4, 10, 20)] {
            let (c, t, f) = (s.c_axis.node(ic), s.t_axis.node(it), s.f_axis.node(jf));
            let (g, _) = true_outputs(&gt, &kp, c, t, f).unwrap();
            let expected = (grade_unchecked(&kp, c, t, f) + s.node_value(ic, it, jf)).clamp(0.0, kp.c_max);
            assert!((g - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_bounds_actions_rejected() {
        let kp = KineticParams::default();
        let gt = GroundTruth::synthesize(
            &FeedstockSignalConfig::default(),
            &ErrorSurfaceConfig::default(),
            &grid(),
            &kp,
            1,
        )
        .unwrap();
        assert!(matches!(true_outputs(&gt, &kp, 15.0, 20.0, 50.0), Err(Error::OutOfBounds(_))));
        assert!(matches!(true_outputs(&gt, &kp, 15.0, 1.0, 500.0), Err(Error::OutOfBounds(_))));
        assert!(true_outputs(&gt, &kp, 50.0, 1.0, 50.0).is_err());
    }

    #[test]
    fn same_seed_same_truth() {
        let kp = KineticParams::default();
        let feed = FeedstockSignalConfig { log10_variance: -1.0, ..Default::default() };
        let errors = ErrorSurfaceConfig::with_log10_variance(0.0);
        let a = GroundTruth::synthesize(&feed, &errors, &grid(), &kp, 5).unwrap();
        let b = GroundTruth::synthesize(&feed, &errors, &grid(), &kp, 5).unwrap();
        let c = GroundTruth::synthesize(&feed, &errors, &grid(), &kp, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.composition_series, c.composition_series);
        let back = GroundTruth::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let c_axis = Axis::new(10.0, 1.0, 2);
        let t_axis = Axis::new(0.0, 1.0, 2);
        let f_axis = Axis::new(0.0, 10.0, 2);
        let mut s = Surface3::zeros(c_axis, t_axis, f_axis);
        // value = c-offset + t + f/10 on the nodes
        for ic in 0..2 {
            for it in 0..2 {
                for jf in 0..2 {
                    let idx = s.index(ic, it, jf);
                    s.values[idx] = ic as f64 + it as f64 + jf as f64;
                }
            }
        }
        let v = s.value(10.25, 0.5, 7.5).unwrap();
        assert!((v - (0.25 + 0.5 + 0.75)).abs() < 1e-12);
        // composition outside the axis clamps
        assert!((s.value(30.0, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
