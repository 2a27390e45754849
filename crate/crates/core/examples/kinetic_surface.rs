//! Print the kinetic-model reward over a coarse slice of the action space
//! and the grid optimum at a few feed compositions.

use flotation::env::ActionGrid;
use flotation::kinetic::{grade_kinetic, kinetic_reward, recovery_kinetic, EconomicParams, KineticParams};
use flotation::policies::{mpc_act, MpcConfig};

fn main() -> flotation::Result<()> {
    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let grid = ActionGrid::default();

    println!("reward at c = 15% ($M per batch), rows t, columns f");
    let fs = [10.0, 40.0, 70.0, 100.0, 150.0, 200.0];
    print!("{:>6}", "t\\f");
    for f in fs {
        print!("{f:>8}");
    }
    println!();
    for t in [1.0, 3.0, 5.0, 7.0, 9.0, 10.0] {
        print!("{t:>6}");
        for f in fs {
            print!("{:>8.2}", kinetic_reward(&kp, &econ, 15.0, t, f, false));
        }
        println!();
    }

    println!("\ngrid optimum by composition");
    for c in [5.0, 10.0, 15.0, 20.0, 30.0] {
        let a = mpc_act(&MpcConfig::default(), c, &grid, &econ, &kp);
        println!(
            "c = {c:>4}%  t = {:>4} min  f = {:>5} L/hr  grade {:.2}%  recovery {:.2}%  reward {:.2}",
            a.t,
            a.f,
            grade_kinetic(&kp, c, a.t, a.f)?,
            recovery_kinetic(&kp, a.t, a.f)?,
            kinetic_reward(&kp, &econ, c, a.t, a.f, false)
        );
    }
    Ok(())
}
