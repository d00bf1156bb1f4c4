use mixedvalue::montecarlo::{
    self, ExploitParams, FixedSide, PathEnsemble, RandomizationDevice, Role, StrategyProfile,
};
use mixedvalue::problem::{catalog, load_problem, Problem};
use mixedvalue::{MixedStrategy, Partition};
use rand_distr::{Distribution, StandardNormal};

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn run(prob: &Problem, pi: &Partition, profile: &StrategyProfile, x0: &[f64], n: usize, s: usize, seed: u64) -> PathEnsemble {
    montecarlo::simulate(prob, pi, profile, x0, n, s, &RandomizationDevice::new(seed)).unwrap()
}

#[test]
fn ensembles_do_not_depend_on_the_thread_count() {
    let prob = catalog("uv_drift").unwrap();
    let pi = Partition::uniform(5, prob.horizon).unwrap();
    let profile = StrategyProfile::uniform(&prob, &pi);
    let a = pool(1).install(|| run(&prob, &pi, &profile, &[0.3], 3000, 3, 77));
    let b = pool(4).install(|| run(&prob, &pi, &profile, &[0.3], 3000, 3, 77));
    assert_eq!(a.states, b.states);
    assert_eq!(a.controls, b.controls);
    let pa = montecarlo::path_payoffs(&a, &prob).unwrap();
    assert_eq!(montecarlo::pairwise_sum(&pa).to_bits(), montecarlo::pairwise_sum(&montecarlo::path_payoffs(&b, &prob).unwrap()).to_bits());
}

#[test]
fn player_draws_are_uncorrelated() {
    let prob = catalog("uv_running_cost").unwrap();
    let pi = Partition::uniform(4, prob.horizon).unwrap();
    let profile = StrategyProfile::uniform(&prob, &pi);
    let n = 40_000;
    let ens = run(&prob, &pi, &profile, &[0.0], n, 1, 3);
    for j in 0..pi.len() {
        let (mut su, mut sv, mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in 0..n {
            let (ui, vi) = ens.control(p, j);
            let (u, v) = (prob.u_grid.point(ui)[0], prob.v_grid.point(vi)[0]);
            su += u;
            sv += v;
            suv += u * v;
            suu += u * u;
            svv += v * v;
        }
        let nf = n as f64;
        let cov = suv / nf - su * sv / (nf * nf);
        let corr = cov / ((suu / nf - (su / nf).powi(2)) * (svv / nf - (sv / nf).powi(2))).sqrt();
        assert!(corr.abs() <= 3.0 / nf.sqrt(), "interval {j}: correlation {corr}");
    }
}

#[test]
fn pure_profile_matches_a_direct_euler_loop() {
    let prob = catalog("uv_drift").unwrap();
    let pi = Partition::from_times(vec![0.0, 0.25, 0.6, 1.0], 1.0).unwrap();
    let profile = StrategyProfile::constant(&pi, MixedStrategy::pure(2, 1), MixedStrategy::pure(2, 0));
    let (n, s) = (200, 5);
    let device = RandomizationDevice::new(21);
    let ens = montecarlo::simulate(&prob, &pi, &profile, &[0.5], n, s, &device).unwrap();
    for path in 0..n {
        let mut x = 0.5f64;
        for j in 1..=pi.len() {
            let (t0, t1) = pi.interval(j);
            let dt = (t1 - t0) / s as f64;
            let mut rng = device.stream(path, j, Role::Brownian);
            for _ in 0..s {
                let z: f64 = StandardNormal.sample(&mut rng);
                // u = +1, v = -1: drift -1, unit volatility
                x = x - dt + dt.sqrt() * z;
            }
        }
        assert_eq!(ens.terminal_state(path)[0], x, "path {path}");
        assert!(ens.controls[path * pi.len()..(path + 1) * pi.len()].iter().all(|&c| c == (1, 0)));
    }
}

#[test]
fn heat_expectation_within_three_standard_errors() {
    let prob = catalog("heat_cosine").unwrap();
    let pi = Partition::uniform(8, prob.horizon).unwrap();
    let profile = StrategyProfile::uniform(&prob, &pi);
    let ens = run(&prob, &pi, &profile, &[0.0], 50_000, 2, 9);
    let (m, se) = montecarlo::estimate_payoff(&ens, &prob).unwrap();
    assert!((m - (-0.5f64).exp()).abs() <= 3.0 * se, "{m} ± {se}");
}

const OU: &str = r#"{
  "name": "ou_square", "d": 1, "T": 1.0,
  "b": ["-x1"], "sigma": [["1"]], "f": "0", "phi": "x1*x1",
  "U": {"points": [[0]]}, "V": {"points": [[0]]},
  "domain": {"min": [-5.0], "max": [5.0], "boundary": "clamp"},
  "condition41_mode": "sigma_uncontrolled", "nx": 101,
  "bounds": {"sup_b": 5, "sup_sigma": 1, "sup_f": 0, "sup_phi": 25,
             "lip_x_b": 1, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 0, "lip_z_f": 0, "lip_phi": 10}
}"#;

/// Second moment of the Euler chain `X ← (1 - dt) X + √dt ξ` after `k` steps.
fn euler_second_moment(x0: f64, dt: f64, k: usize) -> f64 {
    (0..k).fold(x0 * x0, |m, _| (1.0 - dt) * (1.0 - dt) * m + dt)
}

#[test]
fn euler_bias_matches_the_discrete_chain() {
    let prob = load_problem(OU).unwrap();
    let pi = Partition::uniform(2, 1.0).unwrap();
    let profile = StrategyProfile::uniform(&prob, &pi);
    let exact = (-2.0f64).exp() + 0.5 * (1.0 - (-2.0f64).exp());
    let mut biases = Vec::new();
    for s in [1, 2, 4] {
        let ens = run(&prob, &pi, &profile, &[1.0], 200_000, s, 4);
        let (m, se) = montecarlo::estimate_payoff(&ens, &prob).unwrap();
        let chain = euler_second_moment(1.0, 0.5 / s as f64, 2 * s);
        assert!((m - chain).abs() <= 3.0 * se, "substeps {s}: {m} ± {se} vs {chain}");
        biases.push((chain - exact).abs());
    }
    // weak order one: halving dt roughly halves the bias
    for w in biases.windows(2) {
        let r = w[0] / w[1];
        assert!((1.6..=2.6).contains(&r), "bias ratio {r} in {biases:?}");
    }
}

#[test]
fn uniform_opponent_cannot_be_exploited() {
    let prob = catalog("uv_running_cost").unwrap();
    let pi = Partition::uniform(4, prob.horizon).unwrap();
    let profile = StrategyProfile::uniform(&prob, &pi);
    let params = ExploitParams { cells: 21, samples_per_cell: 100, ..ExploitParams::default() };
    for side in [FixedSide::Player1, FixedSide::Player2] {
        let rep = montecarlo::exploit(&prob, &pi, side, &profile, &[0.0], 20_000, &RandomizationDevice::new(2), &params).unwrap();
        assert!(rep.gain.abs() <= 3.0 * rep.std_error + 1e-12, "{side:?}: {} ± {}", rep.gain, rep.std_error);
    }
}

#[test]
fn point_mass_opponent_is_exploited_by_the_horizon() {
    let prob = catalog("uv_running_cost").unwrap();
    let pi = Partition::uniform(4, prob.horizon).unwrap();
    let params = ExploitParams { cells: 21, samples_per_cell: 100, ..ExploitParams::default() };
    let fixed_v = StrategyProfile::constant(&pi, MixedStrategy::uniform(2), MixedStrategy::pure(2, 0));
    let rep = montecarlo::exploit(&prob, &pi, FixedSide::Player2, &fixed_v, &[0.0], 10_000, &RandomizationDevice::new(3), &params)
        .unwrap();
    assert!((rep.gain - 1.0).abs() <= 0.05, "{} ± {}", rep.gain, rep.std_error);
    let fixed_u = StrategyProfile::constant(&pi, MixedStrategy::pure(2, 1), MixedStrategy::uniform(2));
    let rep = montecarlo::exploit(&prob, &pi, FixedSide::Player1, &fixed_u, &[0.0], 10_000, &RandomizationDevice::new(3), &params)
        .unwrap();
    assert!((rep.gain - 1.0).abs() <= 0.05, "{} ± {}", rep.gain, rep.std_error);
}
