//! Feed a belief the outputs of a hidden plant and watch the reward
//! prediction sharpen at the visited action.

use flotation::belief::{BeliefConfig, BeliefState};
use flotation::env::{ActionGrid, FlotationAction, FlotationObservation};
use flotation::ground_truth::{true_outputs, ErrorSurfaceConfig, FeedstockSignalConfig, GroundTruth};
use flotation::kinetic::{reward, EconomicParams, KineticParams};

fn main() -> flotation::Result<()> {
    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let feed = FeedstockSignalConfig::default();
    let errors = ErrorSurfaceConfig::with_log10_variance(-1.0);
    let gt = GroundTruth::synthesize(&feed, &errors, &ActionGrid::default(), &kp, 5)?;

    let mut belief = BeliefState::init(BeliefConfig::well_specified(&feed, &errors), kp)?;
    let probe = FlotationAction::new(6.0, 90.0, false);
    let actions = [(6.0, 90.0), (6.5, 90.0), (6.0, 100.0), (5.5, 85.0), (6.0, 90.0)];
    for (step, (t, f)) in actions.into_iter().enumerate() {
        let c = gt.composition(step);
        let (mean, var) = belief.predict_reward(c, &probe, &econ);
        let (g, r) = true_outputs(&gt, &kp, c, probe.t, probe.f)?;
        let truth = reward(&econ, g, r, probe.t, probe.f, false)?;
        println!("step {step}: predicted {mean:7.2} +/- {:5.2}  true {truth:7.2}", var.sqrt());

        let (g, r) = true_outputs(&gt, &kp, c, t, f)?;
        let obs = FlotationObservation { composition: Some(c), grade: g, recovery: r };
        let action = FlotationAction::new(t, f, true);
        let c_used = belief.attributed_composition(step, &obs);
        belief = belief.update(step, &action, &obs, c_used)?;
    }
    println!("{}", serde_json::to_string_pretty(&belief.snapshot().log)?);
    Ok(())
}
