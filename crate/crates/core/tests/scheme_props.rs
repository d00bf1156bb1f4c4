use mixedvalue::pde::{self, FieldLabel, HamiltonianMode, SchemeParams, SpaceGrid, ValueField};
use mixedvalue::problem::{catalog, Problem, CATALOG};
use proptest::prelude::*;

fn field(t: f64, values: Vec<f64>) -> ValueField {
    ValueField { t, values, label: FieldLabel::VMixed }
}

fn setup(name: &str, nx: usize) -> (Problem, SpaceGrid) {
    let prob = catalog(name).unwrap();
    let grid = SpaceGrid::new(&prob, nx);
    (prob, grid)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_step_is_monotone(
        name in prop::sample::select(CATALOG.to_vec()),
        seed in prop::collection::vec(-1.0f64..1.0, 64),
        bumps in prop::collection::vec(0.0f64..0.5, 64),
    ) {
        let (prob, grid) = setup(name, if name == "heat_2d" { 8 } else { 64 });
        let mut low: Vec<f64> = (0..grid.len()).map(|k| seed[k % 64]).collect();
        grid.apply_boundary(&mut low);
        let mut high: Vec<f64> = low.iter().enumerate().map(|(k, v)| v + bumps[(k * 7) % 64]).collect();
        grid.apply_boundary(&mut high);
        let params = SchemeParams::default();
        let a = pde::step_back(&field(prob.horizon, low), &prob, &grid, &params).unwrap();
        let b = pde::step_back(&field(prob.horizon, high), &prob, &grid, &params).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(x <= y, "{x} > {y}");
        }
    }

    #[test]
    fn constants_commute_with_a_step(c in -3.0f64..3.0, name in prop::sample::select(vec!["uv_running_cost", "uv_drift_cosine", "heat_2d"])) {
        let (prob, grid) = setup(name, 21);
        let params = SchemeParams::default();
        let base = pde::terminal_field(&prob, &grid).unwrap();
        let shifted = field(base.t, base.values.iter().map(|v| v + c).collect());
        let a = pde::step_back(&base, &prob, &grid, &params).unwrap();
        let b = pde::step_back(&shifted, &prob, &grid, &params).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((y - x - c).abs() <= 1e-12, "{y} - {x} != {c}");
        }
    }
}

/// Local truncation error of one heat step on `cos`, over `dt`.
fn heat_truncation(nx: usize) -> f64 {
    let (prob, grid) = setup("heat_cosine", nx);
    let params = SchemeParams::default();
    let dt = params.resolve_dt(&prob, &grid).unwrap();
    let v0 = pde::terminal_field(&prob, &grid).unwrap();
    let v1 = pde::step_back(&v0, &prob, &grid, &params).unwrap();
    // the exact solution one step earlier is e^{-dt/2} cos x
    (0..grid.len())
        .map(|k| (v1.values[k] - (-0.5 * dt).exp() * grid.point(k)[0].cos()).abs() / dt)
        .fold(0.0, f64::max)
}

#[test]
fn heat_step_is_second_order_in_space() {
    let (e1, e2) = (heat_truncation(101), heat_truncation(201));
    let ratio = e1 / e2;
    assert!((3.5..=4.5).contains(&ratio), "{e1} {e2} ratio {ratio}");
}

#[test]
fn every_catalog_solution_respects_the_value_bound() {
    for name in CATALOG {
        let prob = catalog(name).unwrap();
        let grid = SpaceGrid::new(&prob, if prob.d == 2 { 21 } else { 81 });
        for mode in [HamiltonianMode::Relaxed, HamiltonianMode::PureLower, HamiltonianMode::PureUpper] {
            let levels = pde::solve(&prob, &grid, &SchemeParams::with_mode(mode)).unwrap();
            let bound = prob.value_bound() + 1e-9;
            for lvl in &levels {
                assert!(lvl.sup_norm() <= bound, "{name} {mode:?} t = {}: {} > {bound}", lvl.t, lvl.sup_norm());
            }
        }
    }
}

#[test]
fn lower_mixed_upper_are_ordered() {
    for name in CATALOG {
        let prob = catalog(name).unwrap();
        let grid = SpaceGrid::new(&prob, if prob.d == 2 { 15 } else { 61 });
        let r = pde::gap_report(&prob, &grid, &SchemeParams::default()).unwrap();
        for k in 0..grid.len() {
            let (l, m, u) = (r.lower.values[k], r.mixed.values[k], r.upper.values[k]);
            assert!(l <= m + 1e-12 && m <= u + 1e-12, "{name} node {k}: {l} {m} {u}");
        }
    }
}

#[test]
fn solutions_do_not_depend_on_the_thread_count() {
    let (prob, grid) = setup("uv_drift_cosine", 81);
    let params = SchemeParams::default();
    let solve = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| pde::solve_initial(&prob, &grid, &params).unwrap())
    };
    assert_eq!(solve(1).values, solve(4).values);
}
