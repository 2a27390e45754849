//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line; the scenario sweeps behind criteria 5 to 9 are run once and shared.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use flotation::env::{ActionGrid, DecisionContext, MeasurementSchedule};
use flotation::experiments::{median, run_scenario, spearman, PolicyKind, ScenarioConfig, ScenarioResult, Study};
use flotation::experiments::study::{Cell, ACCURACY_LEVELS, FEED_LOG_VARIANCES, GRID_ERROR_LOG_VARIANCES, MEASUREMENT_COUNTS};
use flotation::gp::{GpHyperparams, GpPosterior, Points};
use flotation::kinetic::{grade_kinetic, kinetic_reward, opex, recovery_kinetic, reward, EconomicParams, KineticParams};
use flotation::policies::{mpc_act, MpcConfig};
use flotation::belief::{BeliefConfig, BeliefState};
use flotation::pomcp::{pomcp_act, search, GenerativeModel, GreedyTable, PomcpConfig};
use flotation::ground_truth::{ErrorSurfaceConfig, FeedstockSignalConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Written straight to stderr so the line shows even when output is captured.
fn report(n: u32, pass: bool, detail: String) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn run_cells(cells: Vec<Cell>) -> Vec<(Cell, ScenarioResult)> {
    cells
        .into_iter()
        .map(|cell| {
            let res = run_scenario(&cell.config).expect("scenario runs");
            assert!(res.failures.is_empty(), "{:?}", res.failures);
            (cell, res)
        })
        .collect()
}

/// Median of per-seed POMCP minus MPC reward, $M/yr.
fn pomdp_vs_mpc(res: &ScenarioResult) -> f64 {
    median(&res.relative(PolicyKind::Pomcp, PolicyKind::Mpc).unwrap()).unwrap()
}

fn base() -> ScenarioConfig {
    ScenarioConfig { replicates: 20, ..Default::default() }
}

#[test]
fn criterion_01_unit_exactness() {
    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let values = [
        (recovery_kinetic(&kp, 1.0, 10.0).unwrap(), 25.0),
        (grade_kinetic(&kp, 10.0, 0.0, 100.0).unwrap(), 13.815_165_876_777_25),
        (opex(&econ, 5.0, 100.0).unwrap(), 4.5),
        (reward(&econ, 30.0, 80.0, 5.0, 100.0, false).unwrap(), 37.5),
    ];
    let worst = values.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    report(1, worst <= 1e-9, format!("max abs deviation {worst:.3e}"));
}

#[test]
fn criterion_02_gp_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = GpHyperparams::new(2.0, vec![1.5, 0.7], 0.0, 0.3);
    let xs: Vec<[f64; 2]> = (0..15).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (x[0] * 0.8).sin() + 0.3 * x[1]).collect();
    let gp = GpPosterior::fit(h, Points::from_rows(2, &xs).unwrap(), ys.clone()).unwrap();
    let interp = xs.iter().zip(&ys).map(|(x, y)| (gp.predict(x).unwrap().0 - y).abs()).fold(0.0, f64::max);

    let mut monotone = true;
    for _ in 0..100 {
        let h = GpHyperparams::new(rng.random_range(0.1..5.0), vec![rng.random_range(0.2..3.0)], rng.random_range(1e-6..0.1), 0.0);
        let n = rng.random_range(1..12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let small = GpPosterior::fit(h.clone(), Points::scalar(&x[..n - 1]), y[..n - 1].to_vec()).unwrap();
        let big = GpPosterior::fit(h, Points::scalar(&x), y).unwrap();
        for _ in 0..10 {
            let q = [rng.random_range(-6.0..6.0)];
            monotone &= big.predict(&q).unwrap().1 <= small.predict(&q).unwrap().1 + 1e-12;
        }
    }

    let prior = GpPosterior::prior(GpHyperparams::new(4.0, vec![1.0], 0.0, 1.0)).unwrap();
    let grid = Points::scalar(&[0.0, 2.5]);
    let draws: Vec<f64> = (0..10_000).map(|_| prior.sample(&grid, &mut rng).unwrap()[1]).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let std = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
    let std_err = (std - 2.0).abs() / 2.0;

    report(
        2,
        interp <= 1e-6 && monotone && std_err <= 0.05,
        format!("interpolation {interp:.2e}, variance monotone {monotone}, prior std rel err {std_err:.4}"),
    );
}

#[test]
fn criterion_03_mpc_oracle() {
    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let grid = ActionGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..50 {
        let c = rng.random_range(1.0..kp.c_max);
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..grid.n_t() {
            for j in 0..grid.n_f() {
                let (t, f) = (grid.t_min + i as f64 * grid.t_step, grid.f_min + j as f64 * grid.f_step);
                let v = kinetic_reward(&kp, &econ, c, t, f, false);
                if v > best.0 {
                    best = (v, t, f);
                }
            }
        }
        let a = mpc_act(&MpcConfig::default(), c, &grid, &econ, &kp);
        if (a.t, a.f) != (best.1, best.2) {
            mismatches += 1;
        }
    }
    report(3, mismatches == 0, format!("{mismatches}/50 mismatches"));
}

struct Bandit;

impl GenerativeModel for Bandit {
    type World = ();
    fn depth(&self) -> usize {
        PomcpConfig::default().max_depth
    }
    fn num_actions(&self, _path: &[usize]) -> usize {
        3
    }
    fn observation(&self, _path: &[usize]) -> usize {
        0
    }
    fn sample_world(&self, _sim: usize, _rng: &mut ChaCha8Rng) -> flotation::Result<()> {
        Ok(())
    }
    fn rollout_action(&self, _w: &(), _path: &[usize], rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(0..3)
    }
    fn evaluate(&self, _w: &(), path: &[usize], _rng: &mut ChaCha8Rng) -> flotation::Result<Vec<f64>> {
        Ok(path.iter().map(|&a| [1.0, 0.5, 0.0][a]).collect())
    }
}

#[test]
fn criterion_04_pomcp_sanity() {
    let cfg = PomcpConfig::default();
    let wins = (0..100).filter(|&s| search(&Bandit, &cfg, &mut ChaCha8Rng::seed_from_u64(s)).unwrap().best_action() == 0).count();

    let kp = KineticParams::default();
    let econ = EconomicParams::default();
    let grid = ActionGrid::default();
    let sched = MeasurementSchedule::every_step(100);
    let greedy = GreedyTable::new(grid, kp, econ);
    let depth_one = PomcpConfig { max_depth: 1, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agree = 0;
    for _ in 0..20 {
        let c = rng.random_range(1.0..kp.c_max - 1.0);
        let feed = FeedstockSignalConfig { mean_composition: c, ..Default::default() };
        let mut bc = BeliefConfig::well_specified(&feed, &ErrorSurfaceConfig::default());
        bc.feedstock.variance = 0.0;
        bc.error.variance = 0.0;
        let belief = BeliefState::init(bc, kp).unwrap();
        let ctx = DecisionContext { step: 0, horizon: 100, grid: &grid, schedule: &sched, measurements_taken: 0, kp: &kp, econ: &econ };
        let d = pomcp_act(&depth_one, &belief, &ctx, &greedy, &mut rng).unwrap();
        let m = mpc_act(&MpcConfig::default(), c, &grid, &econ, &kp);
        agree += usize::from((d.action.t, d.action.f) == (m.t, m.f));
    }
    report(4, wins >= 95 && agree == 20, format!("bandit best arm {wins}/100, depth-1 plan equals MPC {agree}/20"));
}

fn accuracy_runs() -> &'static Vec<(Cell, ScenarioResult)> {
    static RUNS: OnceLock<Vec<(Cell, ScenarioResult)>> = OnceLock::new();
    RUNS.get_or_init(|| run_cells(Study::ModelAccuracy.cells(&base())))
}

#[test]
fn criterion_05_accuracy_ordering() {
    let runs = accuracy_runs();
    let mut medians = BTreeMap::new();
    for (cell, res) in runs {
        let s = res.summary().unwrap();
        let m = s.policy("mpc").unwrap().relative_reward.p50;
        let p = s.policy("pomcp").unwrap().relative_reward.p50;
        medians.insert(cell.labels[0].clone(), (m, p));
    }
    let (lm, lp) = medians["low"];
    let (hm, hp) = medians["high"];
    let pass = lp > lm && lm > 0.0 && hm >= hp && hp > 0.0;
    report(5, pass, format!("low: POMDP {lp:+.1} MPC {lm:+.1}; high: MPC {hm:+.1} POMDP {hp:+.1} ($M/yr vs PID)"));
}

#[test]
fn criterion_06_grade_recovery_signs() {
    let runs = accuracy_runs();
    let mut pass = true;
    let mut detail = Vec::new();
    for (cell, res) in runs {
        let s = res.summary().unwrap();
        for name in ["mpc", "pomcp"] {
            let p = s.policy(name).unwrap();
            pass &= p.relative_recovery < 0.0 && p.relative_grade > 0.0;
            detail.push(format!("{}/{name} rec {:+.2} grade {:+.2}", cell.labels[0], p.relative_recovery, p.relative_grade));
        }
    }
    report(6, pass, detail.join("; "));
}

#[test]
fn criterion_07_feed_variance_trend() {
    let cells: Vec<Cell> = Study::FeedstockVariance
        .cells(&base())
        .into_iter()
        .filter(|c| c.config.feedstock.log10_correlation_length == 2.0)
        .collect();
    let runs = run_cells(cells);
    let lv: Vec<f64> = runs.iter().map(|(c, _)| c.config.feedstock.log10_variance).collect();
    let med: Vec<f64> = runs.iter().map(|(_, r)| pomdp_vs_mpc(r)).collect();
    assert_eq!(lv, FEED_LOG_VARIANCES.to_vec());
    let rho = spearman(&lv, &med).unwrap();
    report(7, rho > 0.0, format!("spearman {rho:+.3}, POMDP-MPC medians {med:.1?}"));
}

#[test]
fn criterion_08_measurement_crossover() {
    let runs = run_cells(Study::Measurements.cells(&base()));
    let mut by_level: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (cell, res) in &runs {
        let level = ACCURACY_LEVELS.iter().find(|(l, _)| *l == cell.labels[0]).unwrap().0;
        by_level.entry(level).or_default().push((cell.config.measurements.n.unwrap(), pomdp_vs_mpc(res)));
    }
    for v in by_level.values() {
        assert_eq!(v.iter().map(|(n, _)| *n).collect::<Vec<_>>(), MEASUREMENT_COUNTS.to_vec());
    }
    let low = &by_level["low"];
    let low_ok = (0..low.len()).any(|i| low[i].0 <= 10 && low[i..].iter().all(|(_, d)| *d > 0.0));
    let high_ok = by_level["high"].iter().all(|(_, d)| *d <= 0.0);
    let zero_ok = by_level.values().all(|v| v[0].1 <= 0.0);
    let fmt = |v: &Vec<(usize, f64)>| v.iter().map(|(n, d)| format!("{n}:{d:+.0}")).collect::<Vec<_>>().join(" ");
    report(
        8,
        low_ok && high_ok && zero_ok,
        format!(
            "low [{}] high [{}] medium [{}] (POMDP-MPC median $M/yr by n)",
            fmt(low),
            fmt(&by_level["high"]),
            fmt(&by_level["medium"])
        ),
    );
}

#[test]
fn criterion_09_grid_threshold() {
    let cells: Vec<Cell> = Study::ActionGrid
        .cells(&base())
        .into_iter()
        .filter(|c| c.config.grid.t_step != 0.25)
        .collect();
    let runs = run_cells(cells);
    let threshold = |t_step: f64| {
        let meds: Vec<(f64, f64)> = runs
            .iter()
            .filter(|(c, _)| c.config.grid.t_step == t_step)
            .map(|(c, r)| (c.config.errors.log10_variance, pomdp_vs_mpc(r)))
            .collect();
        assert_eq!(meds.iter().map(|m| m.0).collect::<Vec<_>>(), GRID_ERROR_LOG_VARIANCES.to_vec());
        let first = meds.iter().find(|(_, d)| *d > 0.0).map_or(f64::INFINITY, |m| m.0);
        (first, meds)
    };
    let (fine, fine_m) = threshold(0.1);
    let (coarse, coarse_m) = threshold(0.5);
    report(9, fine >= coarse, format!("threshold fine {fine} coarse {coarse}; fine {fine_m:.1?} coarse {coarse_m:.1?}"));
}

#[test]
fn criterion_10_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig { replicates: 3, ..Default::default() };
    let m = flotation::experiments::sweep(Study::ModelAccuracy, &cfg, &dir.path().join("run")).unwrap();
    let r = flotation::experiments::replay(&dir.path().join("run/manifest.json"), &dir.path().join("replay")).unwrap();
    let identical = m.files.iter().all(|f| {
        std::fs::read(dir.path().join("run").join(&f.path)).unwrap() == std::fs::read(dir.path().join("replay").join(&f.path)).unwrap()
    });
    report(10, r.ok() && identical && r.matched.len() == m.files.len(), format!("{} of {} files bit-identical", r.matched.len(), m.files.len()));
}
