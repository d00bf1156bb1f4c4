use mixedvalue::partition::{self, PartitionParams, SweepOrientation};
use mixedvalue::pde::{self, SchemeParams, SpaceGrid};
use mixedvalue::problem::{catalog, CATALOG};
use mixedvalue::{dpp_sweep, Partition};
use proptest::prelude::*;

fn times_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..100, 1..6)
        .prop_map(|s| std::iter::once(0.0).chain(s.into_iter().map(|k| k as f64 / 100.0)).chain([1.0]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lower_and_upper_sweeps_agree(times in times_strategy(), name in prop::sample::select(vec!["uv_drift", "uv_drift_cosine", "uv_running_cost"])) {
        let prob = catalog(name).unwrap();
        let grid = SpaceGrid::new(&prob, 61);
        let pi = Partition::from_times(times, prob.horizon).unwrap();
        let params = PartitionParams::default();
        let w = dpp_sweep(&prob, &grid, &pi, &params, SweepOrientation::Lower).unwrap();
        let u = dpp_sweep(&prob, &grid, &pi, &params, SweepOrientation::Upper).unwrap();
        let gap = pde::sup_diff(&w.field.values, &u.field.values, &vec![true; grid.len()]);
        prop_assert!(gap <= 1e-7, "|W - U| = {gap}");
    }

    #[test]
    fn partition_values_stay_bounded(times in times_strategy(), name in prop::sample::select(CATALOG.to_vec())) {
        let prob = catalog(name).unwrap();
        let grid = SpaceGrid::new(&prob, if prob.d == 2 { 11 } else { 41 });
        let pi = Partition::from_times(times, prob.horizon).unwrap();
        let r = dpp_sweep(&prob, &grid, &pi, &PartitionParams::default(), SweepOrientation::Lower).unwrap();
        prop_assert_eq!(r.levels.len(), pi.len() + 1);
        for lvl in &r.levels {
            prop_assert!(lvl.sup_norm() <= prob.value_bound() + 1e-9);
        }
    }
}

#[test]
fn one_interval_with_all_steps_is_the_pde_solution() {
    // a single control pair and one interval: the sweep is the PDE march itself
    let prob = catalog("heat_cosine").unwrap();
    let grid = SpaceGrid::new(&prob, 81);
    let params = PartitionParams::default();
    let steps = partition::aligned_reference_steps(&prob, &grid, &params, &[1]);
    let reference = partition::reference_value(&prob, &grid, &params, steps).unwrap();
    let pi = Partition::uniform(1, prob.horizon).unwrap();
    let w = dpp_sweep(&prob, &grid, &pi, &PartitionParams { substeps: Some(steps), ..params }, SweepOrientation::Lower).unwrap();
    let gap = pde::sup_diff(&w.field.values, &reference.field.values, &vec![true; grid.len()]);
    assert!(gap <= 1e-14, "{gap}");
}

#[test]
fn refining_the_partition_moves_toward_the_pde_value() {
    let prob = catalog("uv_drift_cosine").unwrap();
    let grid = SpaceGrid::new(&prob, 81);
    let params = PartitionParams::default();
    let v = pde::solve_initial(&prob, &grid, &SchemeParams::default()).unwrap();
    let mask = grid.window_mask(&prob.interior_window().unwrap());
    let mut pi = Partition::uniform(2, prob.horizon).unwrap();
    let mut errors = Vec::new();
    for t in [0.25, 0.75, 0.125, 0.375, 0.625, 0.875] {
        let w = dpp_sweep(&prob, &grid, &pi, &params, SweepOrientation::Lower).unwrap();
        errors.push(pde::sup_diff(&w.field.values, &v.values, &mask));
        pi = pi.refined_with(t).unwrap();
    }
    assert!(errors.last().unwrap() < &(0.5 * errors[0]), "{errors:?}");
}
