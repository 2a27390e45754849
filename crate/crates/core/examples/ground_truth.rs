//! Synthesize one hidden plant, query it, and round-trip it through JSON.

use flotation::env::ActionGrid;
use flotation::ground_truth::{true_outputs, ErrorSurfaceConfig, FeedstockSignalConfig, GroundTruth};
use flotation::kinetic::{grade_kinetic, recovery_kinetic, KineticParams};

fn main() -> flotation::Result<()> {
    let kp = KineticParams::default();
    let feed = FeedstockSignalConfig { log10_variance: -1.0, log10_correlation_length: 1.0, ..Default::default() };
    let errors = ErrorSurfaceConfig::with_log10_variance(-1.0);
    let gt = GroundTruth::synthesize(&feed, &errors, &ActionGrid::default(), &kp, 42)?;

    let series: Vec<String> = gt.composition_series.iter().step_by(10).map(|c| format!("{c:.2}")).collect();
    println!("feed composition every 10 steps: {}", series.join(" "));

    let c = gt.composition(0);
    for (t, f) in [(2.0, 50.0), (5.0, 100.0), (9.0, 70.0)] {
        let (g, r) = true_outputs(&gt, &kp, c, t, f)?;
        println!(
            "t {t:>4} f {f:>5}: true grade {g:6.2} (kinetic {:6.2}), true recovery {r:6.2} (kinetic {:6.2})",
            grade_kinetic(&kp, c, t, f)?,
            recovery_kinetic(&kp, t, f)?
        );
    }

    let json = gt.to_json()?;
    assert_eq!(GroundTruth::from_json(&json)?, gt);
    println!("serialized ground truth: {} bytes", json.len());
    Ok(())
}
