//! Run PID and MPC on the same plant and write both traces as CSV.

use flotation::env::{run_episode, ActionGrid, MeasurementSchedule};
use flotation::ground_truth::{ErrorSurfaceConfig, FeedstockSignalConfig, GroundTruth};
use flotation::kinetic::{EconomicParams, KineticParams};
use flotation::policies::{MpcConfig, MpcPolicy, PidConfig, PidPolicy};

fn main() -> flotation::Result<()> {
    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let grid = ActionGrid::default();
    let feed = FeedstockSignalConfig::default();
    let gt = GroundTruth::synthesize(&feed, &ErrorSurfaceConfig::default(), &grid, &kp, 1)?;
    let schedule = MeasurementSchedule::every_step(feed.horizon);

    let pid = run_episode(&gt, &grid, &schedule, &mut PidPolicy::new(PidConfig::default()), &econ, &kp)?;
    let mut mpc_policy = MpcPolicy::new(MpcConfig::default(), feed.hyperparams(1e-4));
    let mpc = run_episode(&gt, &grid, &schedule, &mut mpc_policy, &econ, &kp)?;

    for ep in [&pid, &mpc] {
        println!(
            "{:>4}: total {:8.2} $M, mean grade {:.2}%, mean recovery {:.2}%",
            ep.policy,
            ep.total_reward,
            ep.mean_grade(),
            ep.mean_recovery()
        );
    }
    let dir = std::env::temp_dir();
    for ep in [&pid, &mpc] {
        let path = dir.join(format!("{}_episode.csv", ep.policy));
        std::fs::write(&path, ep.to_csv()?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
