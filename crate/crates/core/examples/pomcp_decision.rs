//! Plan a single decision with POMCP after a few observations and dump the
//! most visited root actions.

use flotation::belief::{BeliefConfig, BeliefState};
use flotation::env::{ActionGrid, DecisionContext, FlotationAction, FlotationObservation, MeasurementSchedule};
use flotation::ground_truth::{true_outputs, ErrorSurfaceConfig, FeedstockSignalConfig, GroundTruth};
use flotation::kinetic::{EconomicParams, KineticParams};
use flotation::pomcp::{pomcp_act, GreedyTable, PomcpConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flotation::Result<()> {
    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let grid = ActionGrid::default();
    let feed = FeedstockSignalConfig::default();
    let errors = ErrorSurfaceConfig::with_log10_variance(0.0);
    let gt = GroundTruth::synthesize(&feed, &errors, &grid, &kp, 3)?;
    let schedule = MeasurementSchedule::every_step(feed.horizon);

    let mut belief = BeliefState::init(BeliefConfig::well_specified(&feed, &errors), kp)?;
    for (step, (t, f)) in [(9.0, 70.0), (5.0, 120.0), (2.0, 40.0)].into_iter().enumerate() {
        let c = gt.composition(step);
        let (g, r) = true_outputs(&gt, &kp, c, t, f)?;
        let obs = FlotationObservation { composition: Some(c), grade: g, recovery: r };
        belief = belief.update(step, &FlotationAction::new(t, f, true), &obs, c)?;
    }

    let ctx = DecisionContext { step: 3, horizon: feed.horizon, grid: &grid, schedule: &schedule, measurements_taken: 3, kp: &kp, econ: &econ };
    let greedy = GreedyTable::new(grid, kp, econ);
    let decision = pomcp_act(&PomcpConfig::default(), &belief, &ctx, &greedy, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("chosen: t = {} min, f = {} L/hr after {} simulations", decision.action.t, decision.action.f, decision.simulations);

    let mut children = decision.children.clone();
    children.sort_by(|a, b| b.visits.cmp(&a.visits).then(b.value.total_cmp(&a.value)));
    for c in children.iter().take(5) {
        println!("  t {:>4} f {:>5}: visits {:>3} value {:8.2}", c.t, c.f, c.visits, c.value);
    }
    let json = decision.to_json()?;
    println!("diagnostics: {} bytes of JSON", json.len());
    Ok(())
}
