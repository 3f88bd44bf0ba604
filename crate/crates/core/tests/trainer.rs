mod common;

use common::gaussian_two_view;
use mvgp::objective::{eval, grad, ObjectiveState, TradeoffParams};
use mvgp::trainer::{
    grid_search, init_view_hps, optimize, train_baseline, train_mvgp1, train_with_consistent_set, InputViews,
    OptimizerConfig, SearchConfig, StopReason,
};
use mvgp::MultiViewDataset;
use nalgebra::{DMatrix, DVector};

fn small_search() -> SearchConfig {
    SearchConfig { a_values: vec![0.0, 0.5, 1.0], b_values: vec![2f64.powi(-8), 2.0], cv_repeats: 2 }
}

#[test]
fn zero_weight_view_leaves_the_single_view_fit_unchanged() {
    let data = gaussian_two_view(1, 30, [3, 2], [2.0, 2.0], 0.0);
    let config = OptimizerConfig { seed: 3, ..Default::default() };
    let state = ObjectiveState::new(init_view_hps(2, 3), TradeoffParams::two_view(1.0, 0.0).unwrap());
    let (joint, _) = optimize(&state, &data, &config).unwrap();
    let single = train_baseline(&data, InputViews::Single(0), &config).unwrap();
    let (a, b) = (joint.view_hps[0].to_array(), single.view_hps[0].to_array());
    for i in 0..3 {
        assert!((a[i] - b[i]).abs() < 1e-10, "{a:?} vs {b:?}");
    }
    assert_eq!(joint.view_hps[1], state.view_hps[1]);
}

#[test]
fn optimizer_decreases_the_objective_and_stops_at_a_local_minimum() {
    // One-dimensional inputs with a smooth label pattern.
    let x = DMatrix::from_fn(25, 1, |i, _| i as f64 / 6.0);
    let y = DVector::from_fn(25, |i, _| if (i / 5) % 2 == 0 { 1.0 } else { -1.0 });
    let data = MultiViewDataset::from_views(vec![x], y).unwrap();
    let state = ObjectiveState::new(init_view_hps(1, 0), TradeoffParams::single_view());
    let (fitted, log) = optimize(&state, &data, &OptimizerConfig::default()).unwrap();
    assert!(log.records.windows(2).all(|w| w[1].objective <= w[0].objective));
    assert!(log.final_objective < log.initial_objective);
    assert!(matches!(log.stop_reason, StopReason::GradientTolerance | StopReason::ObjectiveTolerance));
    let f0 = eval(&fitted, &data).unwrap();
    assert_eq!(f0, log.final_objective);
    assert!(grad(&fitted, &data).unwrap().iter().all(|g| g.abs() < 1e-3));
    // No nearby point along any coordinate is noticeably better.
    let p = fitted.params();
    for i in 0..p.len() {
        for d in [-0.05, 0.05] {
            let mut q = p.clone();
            q[i] += d;
            assert!(eval(&fitted.with_params(&q).unwrap(), &data).unwrap() >= f0 - 1e-6);
        }
    }
}

#[test]
fn grid_search_is_independent_of_thread_count() {
    let data = gaussian_two_view(2, 30, [2, 2], [2.0, 2.0], 0.1);
    let config = OptimizerConfig { seed: 8, ..Default::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| grid_search(&data, &small_search(), &config, None).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn empty_consistent_set_drops_the_coupling_with_a_warning() {
    let data = gaussian_two_view(4, 24, [2, 2], [2.0, 2.0], 0.0);
    let config = OptimizerConfig { seed: 1, ..Default::default() };
    let m = train_with_consistent_set(&data, Vec::new(), &small_search(), &config).unwrap();
    assert_eq!(m.tradeoff.b(), 0.0);
    assert_eq!(m.consistent_set, Some(Vec::new()));
    assert_eq!(m.training_log.warnings.len(), 1);
}

#[test]
fn training_is_reproducible_for_a_seed_and_varies_across_seeds() {
    let data = gaussian_two_view(5, 30, [3, 2], [2.0, 2.0], 0.0);
    let c = |seed| OptimizerConfig { seed, ..Default::default() };
    let a = train_mvgp1(&data, &small_search(), &c(1)).unwrap();
    let b = train_mvgp1(&data, &small_search(), &c(1)).unwrap();
    assert_eq!(a.view_hps, b.view_hps);
    assert_eq!(a.grid, b.grid);
    let other = train_mvgp1(&data, &small_search(), &c(2)).unwrap();
    assert_ne!(a.grid.unwrap().table, other.grid.unwrap().table);
}

#[test]
fn selected_cell_has_the_best_mean_validation_accuracy() {
    let data = gaussian_two_view(6, 30, [2, 3], [2.0, 1.0], 0.0);
    let g = grid_search(&data, &small_search(), &OptimizerConfig::default(), None).unwrap();
    let best = g.table.iter().map(|c| c.mean_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(g.table[g.best_index].mean_accuracy, best);
    assert_eq!((g.best.a(), g.best.b()), (g.table[g.best_index].a, g.table[g.best_index].b));
}
