//! Reference controllers: setpoint-tracking PID and kinetic-model MPC.

pub mod mpc;
pub mod pid;

pub use mpc::{mpc_act, CompositionSource, MpcConfig, MpcPolicy};
pub use pid::{pid_act, LoopGains, PidConfig, PidPolicy, PidState};
