//! Run a reduced model-accuracy sweep into a temporary directory, then
//! replay its manifest and confirm the outputs match.

use flotation::experiments::{replay, sweep, ScenarioConfig, Study};
use flotation::pomcp::PomcpConfig;

fn main() -> flotation::Result<()> {
    let base = ScenarioConfig {
        replicates: 4,
        pomcp: PomcpConfig { simulations: 200, worlds_per_step: 200, ..Default::default() },
        ..Default::default()
    };
    let dir = std::env::temp_dir().join("flotation-sweep");
    let manifest = sweep(Study::ModelAccuracy, &base, &dir)?;
    println!("{}", std::fs::read_to_string(dir.join("model-accuracy.csv"))?);

    let report = replay(&dir.join("manifest.json"), &dir.join("replay"))?;
    println!("{} of {} files reproduced", report.matched.len(), manifest.files.len());
    Ok(())
}
