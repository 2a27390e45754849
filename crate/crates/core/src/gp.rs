//! Exact Gaussian-process regression with a squared-exponential kernel.
//!
//! Posteriors are immutable: fitting builds a new [`GpPosterior`], and the
//! Cholesky factor of the Gram matrix is reference counted so posteriors over
//! the same inputs (grade and recovery residuals, say) can share it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative diagonal jitter added to every Gram matrix.
pub const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// Signal variance.
    pub variance: f64,
    /// One length scale per input dimension.
    pub length_scales: Vec<f64>,
    /// Observation noise variance.
    pub noise_variance: f64,
    /// Constant prior mean.
    pub mean: f64,
}

impl GpHyperparams {
    pub fn new(variance: f64, length_scales: Vec<f64>, noise_variance: f64, mean: f64) -> Self {
        Self { variance, length_scales, noise_variance, mean }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0) || !(self.noise_variance >= 0.0) {
            return Err(Error::Config("GP variances must be >= 0".into()));
        }
        if self.length_scales.is_empty() || self.length_scales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("GP length scales must be > 0".into()));
        }
        if !self.mean.is_finite() {
            return Err(Error::Config("GP mean must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    fn jitter(&self) -> f64 {
        JITTER * self.variance
    }

    #[inline]
    fn k_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for ((a, b), l) in x1.iter().zip(x2).zip(&self.length_scales) {
            let z = (a - b) / l;
            d2 += z * z;
        }
        self.variance * (-0.5 * d2).exp()
    }
}

/// Squared-exponential covariance between two input points.
pub fn kernel_se(h: &GpHyperparams, x1: &[f64], x2: &[f64]) -> Result<f64> {
    let d = h.dim();
    for x in [x1, x2] {
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
    }
    Ok(h.k_unchecked(x1, x2))
}

/// A flat list of equally sized input points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * n) }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut p = Self::with_capacity(dim, rows.len());
        for r in rows {
            p.push(r.as_ref())?;
        }
        Ok(p)
    }

    /// 1-D points.
    pub fn scalar(xs: &[f64]) -> Self {
        Self { dim: 1, data: xs.to_vec() }
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        self.data.extend_from_slice(x);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

#[derive(Debug)]
struct GramFactor {
    /// Lower Cholesky factor of K + diag(noise) + jitter.
    l: DMatrix<f64>,
}

/// GP conditioned on a training set.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    hyper: GpHyperparams,
    inputs: Points,
    targets: Vec<f64>,
    noise: Vec<f64>,
    factor: Option<Arc<GramFactor>>,
    /// (K + noise)^-1 (y - mean)
    alpha: Vec<f64>,
}

/// Mean vector and covariance matrix of a joint prediction.
#[derive(Debug, Clone)]
pub struct JointPrediction {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

fn cholesky(mut m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    // Symmetrise to keep round-off from tripping the factorisation.
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m.cholesky().map(|c| c.unpack())
}

/// Cholesky with escalating diagonal jitter, for sampling covariances that are
/// only positive semi-definite in exact arithmetic.
pub(crate) fn cholesky_psd(m: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let base = if scale > 0.0 { scale } else { 1.0 };
    let mut jitter = JITTER * base;
    for _ in 0..8 {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(l) = cholesky(a) {
            return Ok(l);
        }
        jitter *= 10.0;
    }
    Err(Error::Conditioning(format!(
        "covariance of size {n} not positive definite after jitter {jitter:e}"
    )))
}

impl GpPosterior {
    /// Prior with no training data.
    pub fn prior(h: GpHyperparams) -> Result<Self> {
        h.validate()?;
        let dim = h.dim();
        Ok(Self {
            hyper: h,
            inputs: Points::new(dim),
            targets: Vec::new(),
            noise: Vec::new(),
            factor: None,
            alpha: Vec::new(),
        })
    }

    /// Fit with homoscedastic noise taken from the hyperparameters.
    pub fn fit(h: GpHyperparams, inputs: Points, targets: Vec<f64>) -> Result<Self> {
        let noise = vec![h.noise_variance; inputs.len()];
        Self::fit_with_noise(h, inputs, targets, noise)
    }

    /// Fit with a per-point noise variance.
    pub fn fit_with_noise(
        h: GpHyperparams,
        inputs: Points,
        targets: Vec<f64>,
        noise: Vec<f64>,
    ) -> Result<Self> {
        h.validate()?;
        if inputs.dim() != h.dim() {
            return Err(Error::Dimension { expected: h.dim(), got: inputs.dim() });
        }
        let n = inputs.len();
        if targets.len() != n || noise.len() != n {
            return Err(Error::Dimension { expected: n, got: targets.len().min(noise.len()) });
        }
        if noise.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("noise variances must be >= 0".into()));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::Domain("GP targets must be finite".into()));
        }
        if n == 0 || h.variance == 0.0 {
            // A zero-variance prior cannot be moved by data.
            let mut p = Self::prior(h)?;
            p.inputs = inputs;
            p.targets = targets;
            p.noise = noise;
            return Ok(p);
        }
        let jitter = h.jitter();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = h.k_unchecked(inputs.get(i), inputs.get(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += noise[i] + jitter;
        }
        let l = cholesky(k).ok_or_else(|| {
            Error::Conditioning(format!(
                "Gram matrix of {n} points is not positive definite (duplicate inputs with zero noise?)"
            ))
        })?;
        let factor = Arc::new(GramFactor { l });
        let alpha = solve_alpha(&factor.l, &targets, h.mean);
        Ok(Self { hyper: h, inputs, targets, noise, factor: Some(factor), alpha })
    }

    /// Same inputs, hyperparameters and factorisation, new targets.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.inputs.len() {
            return Err(Error::Dimension { expected: self.inputs.len(), got: targets.len() });
        }
        let alpha = match &self.factor {
            Some(f) => solve_alpha(&f.l, &targets, self.hyper.mean),
            None => Vec::new(),
        };
        Ok(Self { targets, alpha, ..self.clone() })
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn inputs(&self) -> &Points {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// True when both posteriors use the same Gram factorisation.
    pub fn shares_factor(&self, other: &GpPosterior) -> bool {
        match (&self.factor, &other.factor) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            (None, None) => self.hyper == other.hyper,
            _ => false,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.hyper.dim() {
            return Err(Error::Dimension { expected: self.hyper.dim(), got: x.len() });
        }
        Ok(())
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| self.hyper.k_unchecked(xi, x)),
        )
    }

    /// Posterior mean and latent variance at one point.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> (f64, f64) {
        let prior_var = self.hyper.variance;
        let Some(factor) = &self.factor else {
            return (self.hyper.mean, prior_var);
        };
        let ks = self.cross(x);
        let mean = self.hyper.mean + ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = factor.l.solve_lower_triangular(&ks).expect("non-singular factor");
        let var = (prior_var - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Joint posterior over several points.
    pub fn predict_joint(&self, xs: &Points) -> Result<JointPrediction> {
        let (mut means, cov) = self.predict_joint_multi(xs, &[&self.alpha], &[self.hyper.mean])?;
        Ok(JointPrediction { mean: means.pop().expect("one"), cov })
    }

    fn predict_joint_multi(
        &self,
        xs: &Points,
        alphas: &[&[f64]],
        prior_means: &[f64],
    ) -> Result<(Vec<Vec<f64>>, DMatrix<f64>)> {
        if xs.dim() != self.hyper.dim() {
            return Err(Error::Dimension { expected: self.hyper.dim(), got: xs.dim() });
        }
        let m = xs.len();
        let mut cov = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = self.hyper.k_unchecked(xs.get(i), xs.get(j));
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let mut means: Vec<Vec<f64>> = prior_means.iter().map(|mu| vec![*mu; m]).collect();
        if let Some(factor) = &self.factor {
            let n = self.inputs.len();
            let mut kxs = DMatrix::zeros(n, m);
            for j in 0..m {
                for (i, xi) in self.inputs.iter().enumerate() {
                    kxs[(i, j)] = self.hyper.k_unchecked(xi, xs.get(j));
                }
            }
            for (mean, alpha) in means.iter_mut().zip(alphas) {
                for (j, mj) in mean.iter_mut().enumerate() {
                    *mj += kxs.column(j).iter().zip(alpha.iter()).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let v = factor.l.solve_lower_triangular(&kxs).expect("non-singular factor");
            cov -= v.transpose() * v;
        }
        Ok((means, cov))
    }

    /// Cross-covariances k(X_i, x) against the training inputs.
    pub fn cross_cov(&self, x: &[f64]) -> Vec<f64> {
        self.inputs.iter().map(|xi| self.hyper.k_unchecked(xi, x)).collect()
    }

    /// (K + noise)^-1 rhs using the cached factorisation.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let Some(factor) = &self.factor else {
            return Ok(vec![0.0; rhs.len()]);
        };
        if rhs.len() != self.inputs.len() {
            return Err(Error::Dimension { expected: self.inputs.len(), got: rhs.len() });
        }
        let b = DVector::from_column_slice(rhs);
        let z = factor.l.solve_lower_triangular(&b).expect("non-singular factor");
        let a = factor.l.tr_solve_lower_triangular(&z).expect("non-singular factor");
        Ok(a.iter().copied().collect())
    }

    /// Joint prediction for two posteriors that share one factorisation: the
    /// covariance is computed once, the means once per posterior.
    pub fn predict_joint_pair(
        a: &GpPosterior,
        b: &GpPosterior,
        xs: &Points,
    ) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
        if !a.shares_factor(b) {
            return Err(Error::Config("posteriors do not share a factorisation".into()));
        }
        let (means, cov) = a.predict_joint_multi(xs, &[&a.alpha, &b.alpha], &[a.hyper.mean, b.hyper.mean])?;
        let mut it = means.into_iter();
        Ok((it.next().expect("two"), it.next().expect("two"), cov))
    }

    /// One joint draw of the latent function over `grid`.
    pub fn sample<R: Rng + ?Sized>(&self, grid: &Points, rng: &mut R) -> Result<Vec<f64>> {
        if grid.is_empty() {
            return Err(Error::Domain("sampling grid must be non-empty".into()));
        }
        let pred = self.predict_joint(grid)?;
        sample_mvn(&pred.mean, &pred.cov, self.hyper.variance, rng)
    }
}

fn solve_alpha(l: &DMatrix<f64>, targets: &[f64], mean: f64) -> Vec<f64> {
    let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - mean));
    let z = l.solve_lower_triangular(&y).expect("non-singular factor");
    let a = l.tr_solve_lower_triangular(&z).expect("non-singular factor");
    a.iter().copied().collect()
}

/// Draw from N(mean, cov). A zero `scale` means the covariance is identically
/// zero and the mean is returned untouched.
pub(crate) fn sample_mvn<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &DMatrix<f64>,
    scale: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = mean.len();
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    if scale == 0.0 {
        return Ok(mean.to_vec());
    }
    let l = cholesky_psd(cov, scale)?;
    let mut out = mean.to_vec();
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += l[(i, j)] * z[j];
        }
        out[i] += acc;
    }
    Ok(out)
}
