//! Two decoupled PID loops: grade is steered with air flow, recovery with
//! flotation time.

use serde::{Deserialize, Serialize};

use crate::env::{ActionGrid, DecisionContext, FlotationAction, FlotationObservation, Policy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidConfig {
    /// Percent.
    pub grade_setpoint: f64,
    /// Percent.
    pub recovery_setpoint: f64,
    /// Air flow loop, L/hr per pp of grade error.
    pub grade_loop: LoopGains,
    /// Flotation time loop, min per pp of recovery error.
    pub recovery_loop: LoopGains,
    /// Action the loops are centred on and the first action of an episode.
    pub base_t: f64,
    pub base_f: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            grade_setpoint: 22.7,
            recovery_setpoint: 81.8,
            grade_loop: LoopGains { kp: 4.0, ki: 2.4, kd: 0.0 },
            recovery_loop: LoopGains { kp: 0.5, ki: 0.3, kd: 0.0 },
            base_t: 9.0,
            base_f: 100.0,
        }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.grade_setpoint) || !(0.0..=100.0).contains(&self.recovery_setpoint) {
            return Err(Error::Config("PID setpoints must lie in [0, 100]".into()));
        }
        let gains = [self.grade_loop, self.recovery_loop];
        if gains.iter().any(|g| [g.kp, g.ki, g.kd].iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("PID gains must be finite".into()));
        }
        if !(self.base_t >= 0.0) || !(self.base_f >= 0.0) {
            return Err(Error::Config("PID base action must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

impl LoopState {
    /// One positional PID update. `sign` maps a positive error to the
    /// direction of the actuator. The integral only accumulates until the
    /// output reaches a bound, and stays put while the error pushes past it.
    fn update(&mut self, gains: &LoopGains, error: f64, base: f64, sign: f64, lo: f64, hi: f64) -> f64 {
        let derivative = self.prev_error.map_or(0.0, |p| error - p);
        self.prev_error = Some(error);
        let output = |integral: f64| base + sign * (gains.kp * error + gains.ki * integral + gains.kd * derivative);
        let trial = self.integral + error;
        let u = output(trial);
        let bound = if u > hi && sign * error > 0.0 {
            Some(hi)
        } else if u < lo && sign * error < 0.0 {
            Some(lo)
        } else {
            None
        };
        match bound {
            None => self.integral = trial,
            Some(b) if gains.ki != 0.0 => {
                // integral at which the output sits exactly on the bound
                let at_bound = ((b - base) * sign - gains.kp * error - gains.kd * derivative) / gains.ki;
                let (from, to) = (self.integral, trial);
                if (at_bound - from) * (to - from) > 0.0 {
                    self.integral = at_bound;
                }
            }
            Some(_) => {}
        }
        output(self.integral).clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    /// Drives air flow.
    pub grade: LoopState,
    /// Drives flotation time.
    pub recovery: LoopState,
}

/// Next (t, f) from the last observation. With no observation yet the base
/// action is returned. The measure flag is left false.
pub fn pid_act(
    cfg: &PidConfig,
    state: &mut PidState,
    last_obs: Option<&FlotationObservation>,
    grid: &ActionGrid,
) -> FlotationAction {
    let Some(obs) = last_obs else {
        let (t, f) = grid.snap(cfg.base_t, cfg.base_f);
        return FlotationAction::new(t, f, false);
    };
    // Grade falls as air flow rises, so a grade deficit lowers f.
    let f = state.grade.update(
        &cfg.grade_loop,
        cfg.grade_setpoint - obs.grade,
        cfg.base_f,
        -1.0,
        grid.f_min,
        grid.f_max,
    );
    let t = state.recovery.update(
        &cfg.recovery_loop,
        cfg.recovery_setpoint - obs.recovery,
        cfg.base_t,
        1.0,
        grid.t_min,
        grid.t_max,
    );
    let (t, f) = grid.snap(t, f);
    FlotationAction::new(t, f, false)
}

#[derive(Debug, Clone)]
pub struct PidPolicy {
    cfg: PidConfig,
    state: PidState,
    last_obs: Option<FlotationObservation>,
}

impl PidPolicy {
    pub fn new(cfg: PidConfig) -> Self {
        Self { cfg, state: PidState::default(), last_obs: None }
    }

    pub fn state(&self) -> &PidState {
        &self.state
    }
}

impl Policy for PidPolicy {
    fn name(&self) -> &str {
        "pid"
    }

    fn reset(&mut self, _ctx: &DecisionContext<'_>) -> Result<()> {
        self.cfg.validate()?;
        self.state = PidState::default();
        self.last_obs = None;
        Ok(())
    }

    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<FlotationAction> {
        let mut a = pid_act(&self.cfg, &mut self.state, self.last_obs.as_ref(), ctx.grid);
        a.measure = ctx.measurement_available();
        Ok(a)
    }

    fn observe(&mut self, _ctx: &DecisionContext<'_>, _action: &FlotationAction, obs: &FlotationObservation) -> Result<()> {
        self.last_obs = Some(*obs);
        Ok(())
    }
}
