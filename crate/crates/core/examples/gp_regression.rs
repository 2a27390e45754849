//! Exact GP regression on a noisy 1-d signal, with a posterior draw.

use flotation::gp::{GpHyperparams, GpPosterior, Points};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flotation::Result<()> {
    let xs = [0.0, 1.0, 2.5, 4.0, 6.0, 8.5];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| (0.7 * x).sin()).collect();
    let hyper = GpHyperparams::new(1.0, vec![1.5], 1e-3, 0.0);
    let gp = GpPosterior::fit(hyper, Points::scalar(&xs), ys)?;

    let query: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    let draw = gp.sample(&Points::scalar(&query), &mut ChaCha8Rng::seed_from_u64(7))?;
    println!("{:>5} {:>8} {:>8} {:>8} {:>8}", "x", "truth", "mean", "std", "draw");
    for (x, d) in query.iter().zip(draw) {
        let (m, v) = gp.predict(&[*x])?;
        println!("{x:>5.1} {:>8.3} {m:>8.3} {:>8.3} {d:>8.3}", (0.7 * x).sin(), v.sqrt());
    }
    Ok(())
}
