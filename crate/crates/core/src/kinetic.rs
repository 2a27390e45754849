//! Closed-form flotation kinetics and the per-batch economic reward.
//!
//! Recovery follows a first-order rate law damped by air flow, grade follows a
//! logistic enrichment term that rewards long flotation and penalises high air
//! flow. Both are reported in percent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KineticParams {
    /// Flotation rate constant, 1/min.
    pub k: f64,
    /// Theoretical maximum concentrate grade, percent.
    pub c_max: f64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self { k: 1.0, c_max: 42.2 }
    }
}

impl KineticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !(self.c_max > 0.0) {
            return Err(Error::Config(format!(
                "kinetic params must be positive (k={}, c_max={})",
                self.k, self.c_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EconomicParams {
    /// Concentrate price, $ per tonne per unit grade.
    pub price_coeff: f64,
    /// Production, Mt/yr per unit recovery.
    pub production_coeff: f64,
    pub timesteps_per_year: f64,
    /// $M per minute of flotation.
    pub opex_time_coeff: f64,
    /// $M per L/hr of air.
    pub opex_air_coeff: f64,
    /// $M charged for each feedstock measurement.
    pub measurement_cost: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            price_coeff: 500.0,
            production_coeff: 35.0,
            timesteps_per_year: 100.0,
            opex_time_coeff: 0.5,
            opex_air_coeff: 1.0 / 50.0,
            measurement_cost: 0.0,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            self.price_coeff,
            self.production_coeff,
            self.opex_time_coeff,
            self.opex_air_coeff,
            self.measurement_cost,
        ];
        if coeffs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config("economic coefficients must be >= 0".into()));
        }
        if !(self.timesteps_per_year > 0.0) {
            return Err(Error::Config("timesteps_per_year must be > 0".into()));
        }
        Ok(())
    }

    /// Revenue per unit of (grade fraction x recovery fraction), $M per timestep.
    pub fn revenue_scale(&self) -> f64 {
        self.price_coeff * self.production_coeff / self.timesteps_per_year
    }
}

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// Instantaneous recovery in percent.
pub fn recovery_kinetic(params: &KineticParams, t: f64, f: f64) -> Result<f64> {
    check_non_negative("flotation time", t)?;
    check_non_negative("air flow", f)?;
    Ok(recovery_unchecked(params, t, f))
}

/// Instantaneous concentrate grade in percent.
pub fn grade_kinetic(params: &KineticParams, c: f64, t: f64, f: f64) -> Result<f64> {
    if !(0.0..=params.c_max).contains(&c) {
        return Err(Error::Domain(format!(
            "composition {c} outside [0, {}]",
            params.c_max
        )));
    }
    check_non_negative("flotation time", t)?;
    check_non_negative("air flow", f)?;
    Ok(grade_unchecked(params, c, t, f))
}

#[inline]
pub(crate) fn recovery_unchecked(params: &KineticParams, t: f64, f: f64) -> f64 {
    let kt = params.k * t;
    100.0 * (kt / (1.0 + kt)) * (f / (f + 10.0))
}

#[inline]
pub(crate) fn grade_unchecked(params: &KineticParams, c: f64, t: f64, f: f64) -> f64 {
    let enrichment = 1.0 - c / params.c_max;
    let selectivity = 1.0 - (-params.k * t / 10.0).exp() / (1.0 + (4.0 - 0.04 * f).exp());
    c * (1.0 + enrichment * selectivity)
}

/// Operating cost in $M per timestep.
pub fn opex(params: &EconomicParams, t: f64, f: f64) -> Result<f64> {
    check_non_negative("flotation time", t)?;
    check_non_negative("air flow", f)?;
    Ok(opex_unchecked(params, t, f))
}

#[inline]
pub(crate) fn opex_unchecked(params: &EconomicParams, t: f64, f: f64) -> f64 {
    params.opex_time_coeff * t + params.opex_air_coeff * f
}

/// NPV-proxy reward in $M per timestep. Grade and recovery are given in
/// percent and converted to fractions before the revenue product.
pub fn reward(
    params: &EconomicParams,
    g: f64,
    r: f64,
    t: f64,
    f: f64,
    measured: bool,
) -> Result<f64> {
    if !(0.0..=100.0).contains(&g) || !(0.0..=100.0).contains(&r) {
        return Err(Error::Domain(format!(
            "grade {g} and recovery {r} must lie in [0, 100]"
        )));
    }
    check_non_negative("flotation time", t)?;
    check_non_negative("air flow", f)?;
    Ok(reward_unchecked(params, g, r, t, f, measured))
}

#[inline]
pub(crate) fn reward_unchecked(
    params: &EconomicParams,
    g: f64,
    r: f64,
    t: f64,
    f: f64,
    measured: bool,
) -> f64 {
    let revenue = params.revenue_scale() * (g / 100.0) * (r / 100.0);
    let measurement = if measured { params.measurement_cost } else { 0.0 };
    revenue - opex_unchecked(params, t, f) - measurement
}

/// Reward predicted by the kinetic model alone.
pub fn kinetic_reward(
    kp: &KineticParams,
    econ: &EconomicParams,
    c: f64,
    t: f64,
    f: f64,
    measured: bool,
) -> f64 {
    let g = grade_unchecked(kp, c, t, f);
    let r = recovery_unchecked(kp, t, f);
    reward_unchecked(econ, g, r, t, f, measured)
}
