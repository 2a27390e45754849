//! Coarse grid search of the PID gains on a zero-error plant with a
//! drifting feed. Prints the best gain sets by integrated squared tracking
//! error.

use flotation::env::{run_episode, ActionGrid, MeasurementSchedule};
use flotation::ground_truth::{ErrorSurfaceConfig, FeedstockSignalConfig, GroundTruth};
use flotation::kinetic::{EconomicParams, KineticParams};
use flotation::policies::{LoopGains, PidConfig, PidPolicy};

fn main() -> flotation::Result<()> {
    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let grid = ActionGrid::default();
    let feed = FeedstockSignalConfig { log10_variance: -2.0, log10_correlation_length: 1.0, ..Default::default() };
    let errors = ErrorSurfaceConfig::with_log10_variance(f64::NEG_INFINITY);
    let truths: Vec<_> = (0..10).map(|s| GroundTruth::synthesize(&feed, &errors, &grid, &kp, s)).collect::<Result<_, _>>()?;
    let schedule = MeasurementSchedule::every_step(feed.horizon);
    let base = PidConfig::default();

    let mut scored = Vec::new();
    for kp_f in [2.0, 4.0, 8.0, 12.0, 20.0] {
        for kp_t in [0.1, 0.25, 0.5, 1.0, 2.0] {
            for ratio in [0.0, 0.1, 0.3, 0.6] {
                let cfg = PidConfig {
                    grade_loop: LoopGains { kp: kp_f, ki: ratio * kp_f, kd: 0.0 },
                    recovery_loop: LoopGains { kp: kp_t, ki: ratio * kp_t, kd: 0.0 },
                    ..base
                };
                let mut ise = 0.0;
                for gt in &truths {
                    let ep = run_episode(gt, &grid, &schedule, &mut PidPolicy::new(cfg), &econ, &kp)?;
                    ise += ep
                        .steps
                        .iter()
                        .map(|s| (s.g - cfg.grade_setpoint).powi(2) + (s.r - cfg.recovery_setpoint).powi(2))
                        .sum::<f64>();
                }
                scored.push((ise / truths.len() as f64, kp_f, kp_t, ratio));
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    println!("{:>10} {:>6} {:>6} {:>6}", "ise", "kp_f", "kp_t", "ki/kp");
    for (ise, kp_f, kp_t, ratio) in scored.iter().take(10) {
        println!("{ise:10.2} {kp_f:6} {kp_t:6} {ratio:6}");
    }
    Ok(())
}
