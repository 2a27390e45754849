//! Frozen outputs for one seed. A change here means the simulation changed.

use flotation::experiments::{PolicyKind, ScenarioConfig};
use flotation::ground_truth::FeedstockSignalConfig;
use flotation::pomcp::PomcpConfig;

fn config() -> ScenarioConfig {
    ScenarioConfig {
        feedstock: FeedstockSignalConfig { horizon: 20, ..Default::default() },
        policies: vec![PolicyKind::Pid, PolicyKind::Mpc, PolicyKind::Pomcp],
        pomcp: PomcpConfig { simulations: 100, max_depth: 3, ..Default::default() },
        ..Default::default()
    }
}

const GOLDEN: [(&str, f64); 3] =
    [("pid", 512.861142292402), ("mpc", 524.6197776904261), ("pomcp", 338.54630380360624)];

#[test]
fn fixed_seed_totals() {
    let episodes = config().run_replicate(7).unwrap();
    for (ep, (name, total)) in episodes.iter().zip(GOLDEN) {
        assert_eq!(ep.policy, name);
        assert!((ep.total_reward - total).abs() < 1e-9 * total.abs(), "{}: {}", name, ep.total_reward);
    }
}

#[test]
fn fixed_seed_first_steps() {
    let episodes = config().run_replicate(7).unwrap();
    let pid = &episodes[0];
    let first = &pid.steps[0];
    assert_eq!((first.t, first.f), (9.0, 100.0));
    assert!(first.measured);
    let gt = config().ground_truth(7).unwrap();
    for (s, c) in pid.steps.iter().zip(&gt.composition_series) {
        assert_eq!(s.c_true, *c);
    }
}
