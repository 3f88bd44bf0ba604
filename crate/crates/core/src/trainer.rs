//! Hyperparameter fitting and the training pipelines.
//!
//! * [`optimize`] minimizes the objective over the GP hyperparameters with a
//!   limited-memory quasi-Newton direction and Armijo backtracking, so every
//!   accepted step strictly decreases the objective.
//! * [`grid_search`] picks the trade-off parameters `(a, b)` by repeated
//!   random 80/20 train/validation splits of the training data.
//! * [`train_mvgp1`] / [`train_mvgp2`] are the full multi-view pipelines; the
//!   latter restricts the coupling to the consistent set found by the former.
//! * [`train_baseline`] fits single-view GPs on one view or on the
//!   concatenation of all views.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{kfold_indices, restrict_index_set, MultiViewDataset};
use crate::error::{Error, Result};
use crate::gp_view::{FittedView, ViewHyperparams, N_VIEW_PARAMS};
use crate::objective::{self, sign_label, ObjectiveState, TradeoffParams};

/// Stopping rules and initialization seed for [`optimize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop once `‖∇L‖∞` falls below this.
    pub grad_tol: f64,
    /// Stop once an accepted step decreases `L` by less than this, relative
    /// to `max(|L|, 1)`.
    pub objective_tol: f64,
    /// Seeds hyperparameter initialization and validation splits.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { max_iters: 200, grad_tol: 1e-5, objective_tol: 1e-9, seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.grad_tol >= 0.0) || !(self.objective_tol >= 0.0) {
            return Err(Error::invalid("optimizer tolerances must be non-negative"));
        }
        Ok(())
    }
}

/// Initial hyperparameters: every log-domain coordinate uniform on `[-1, 1]`.
pub fn init_view_hps(n_views: usize, seed: u64) -> Vec<ViewHyperparams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_views)
        .map(|_| {
            let mut a = [0.0; N_VIEW_PARAMS];
            for v in a.iter_mut() {
                *v = rng.random_range(-1.0..=1.0);
            }
            ViewHyperparams::from_array(a).expect("finite by construction")
        })
        .collect()
}

/// One accepted optimizer iteration (iteration 0 is the starting point).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step_size: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    /// No step along the search direction gave sufficient decrease.
    LineSearchFailed,
    /// Nothing to optimize (no hyperparameter affects the objective).
    NoParameters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub stop_reason: StopReason,
    /// Objective evaluations whose factorizations needed jitter.
    pub jitter_events: usize,
    pub warnings: Vec<String>,
}

const HISTORY: usize = 8;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Largest change of any log-domain coordinate in a single step.
const MAX_STEP: f64 = 2.0;
/// Trial points with a log-domain coordinate beyond this are rejected.
const PARAM_BOUND: f64 = 20.0;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: `−H g` for the inverse-Hessian estimate `H`.
fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Minimize the objective over the GP hyperparameters of `state`; the
/// trade-off parameters and coupling set are left untouched.
pub fn optimize(
    state: &ObjectiveState,
    data: &MultiViewDataset,
    config: &OptimizerConfig,
) -> Result<(ObjectiveState, TrainingLog)> {
    config.validate()?;
    state.validate(data)?;
    let mut x = state.params();
    let ev = objective::value_and_grad(state, data)?;
    if !ev.value.is_finite() || ev.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "objective is {} at the initial hyperparameters",
            ev.value
        )));
    }
    let (mut f, mut g) = (ev.value, ev.grad);
    let mut jitter_events = ev.jitter_events;
    let mut records = vec![IterationRecord { iteration: 0, objective: f, grad_norm: inf_norm(&g), step_size: 0.0 }];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut stop = StopReason::MaxIterations;
    let mut current = state.clone();

    for it in 1..=config.max_iters {
        let gnorm = inf_norm(&g);
        if gnorm < config.grad_tol {
            stop = if gnorm == 0.0 && it == 1 { StopReason::NoParameters } else { StopReason::GradientTolerance };
            break;
        }
        let mut d = lbfgs_direction(&g, &history);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) || d.iter().any(|v| !v.is_finite()) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut t = if history.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };
        t = t.min(MAX_STEP / inf_norm(&d));

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            if trial.iter().all(|v| v.abs() <= PARAM_BOUND) {
                if let Ok(next) = current.with_params(&trial) {
                    match objective::value_and_grad(&next, data) {
                        Ok(ev) if ev.value.is_finite() && ev.grad.iter().all(|v| v.is_finite()) => {
                            jitter_events += ev.jitter_events;
                            if ev.value <= f + ARMIJO_C1 * t * slope {
                                accepted = Some((trial, next, ev));
                                break;
                            }
                        }
                        Ok(_) => {}
                        Err(e) => debug!("trial point rejected: {e}"),
                    }
                }
            }
            t *= 0.5;
        }
        let Some((x_new, next, ev)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = ev.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        let rel_decrease = (f - ev.value) / f.abs().max(1.0);
        x = x_new;
        current = next;
        f = ev.value;
        g = ev.grad;
        records.push(IterationRecord { iteration: it, objective: f, grad_norm: inf_norm(&g), step_size: t });
        if rel_decrease < config.objective_tol {
            stop = StopReason::ObjectiveTolerance;
            break;
        }
    }
    if stop == StopReason::MaxIterations && inf_norm(&g) < config.grad_tol {
        stop = StopReason::GradientTolerance;
    }

    let log = TrainingLog {
        iterations: records.len() - 1,
        initial_objective: records[0].objective,
        final_objective: f,
        final_grad_norm: inf_norm(&g),
        stop_reason: stop,
        jitter_events,
        warnings: Vec::new(),
        records,
    };
    Ok((current, log))
}

/// The `(a, b)` values searched over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Weight of the first view. With more than two views the remaining
    /// weight `1 − a` is split evenly among the others.
    pub a_values: Vec<f64>,
    /// Coupling strength, applied to every view pair.
    pub b_values: Vec<f64>,
    /// Number of random train/validation partitions per cell.
    pub cv_repeats: usize,
}

impl Default for SearchConfig {
    /// `a ∈ {0, 0.1, …, 1}`, `b ∈ {2⁻¹⁸, 2⁻¹², 2⁻⁸, 2, 2³, 2⁸}`, 10 repeats.
    fn default() -> Self {
        SearchConfig {
            a_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            b_values: [-18, -12, -8, 1, 3, 8].iter().map(|&e| 2f64.powi(e)).collect(),
            cv_repeats: 10,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_values.is_empty() || self.b_values.is_empty() {
            return Err(Error::invalid("search grids must be non-empty"));
        }
        if self.cv_repeats < 1 {
            return Err(Error::invalid("at least one validation repeat is required"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.a_values.len() * self.b_values.len()
    }

    /// Trade-off parameters of every cell, `a` outer and `b` inner.
    pub fn cells(&self, n_views: usize) -> Result<Vec<TradeoffParams>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.n_cells());
        for &a in &self.a_values {
            for &b in &self.b_values {
                out.push(tradeoff_for(n_views, a, b)?);
            }
        }
        Ok(out)
    }
}

/// Trade-off parameters with first-view weight `a` and coupling `b` on all
/// pairs.
pub fn tradeoff_for(n_views: usize, a: f64, b: f64) -> Result<TradeoffParams> {
    match n_views {
        0 | 1 => Err(Error::invalid("multi-view trade-off needs at least two views")),
        2 => TradeoffParams::two_view(a, b),
        k => {
            let rest = (1.0 - a) / (k - 1) as f64;
            let mut w = vec![a];
            w.extend(std::iter::repeat(rest).take(k - 1));
            // Re-normalize the last weight so the sum is exact.
            let s: f64 = w[..k - 1].iter().sum();
            w[k - 1] = (1.0 - s).max(0.0);
            TradeoffParams::uniform_coupling(w, b)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub a: f64,
    pub b: f64,
    /// Validation accuracy of each repeat.
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: TradeoffParams,
    pub best_index: usize,
    pub table: Vec<GridCell>,
}

/// Index of the best cell: highest mean accuracy, then smaller `b`, then `a`
/// nearer 0.5, then the earlier cell.
pub fn select_best_cell(table: &[GridCell]) -> Option<usize> {
    (0..table.len()).min_by(|&i, &j| {
        let (ci, cj) = (&table[i], &table[j]);
        cj.mean_accuracy
            .total_cmp(&ci.mean_accuracy)
            .then(ci.b.total_cmp(&cj.b))
            .then((ci.a - 0.5).abs().total_cmp(&(cj.a - 0.5).abs()))
            .then(i.cmp(&j))
    })
}

/// Derive an independent stream seed from a base seed and a tag (splitmix64).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const CV_SEED_TAG: u64 = 0xC5;

fn accuracy(pred: &[f64], labels: &DVector<f64>) -> f64 {
    let correct = pred.iter().zip(labels.iter()).filter(|(p, y)| p == y).count();
    correct as f64 / labels.len() as f64
}

/// Fit `tradeoff` on `train` starting from `init`, then return hybrid
/// prediction accuracy on `val`.
fn validate_cell(
    train: &MultiViewDataset,
    val: &MultiViewDataset,
    init: &[ViewHyperparams],
    tradeoff: &TradeoffParams,
    coupling_set: Option<Vec<usize>>,
    config: &OptimizerConfig,
) -> Result<f64> {
    let state = ObjectiveState::new(init.to_vec(), tradeoff.clone()).with_coupling_set(coupling_set);
    let (fitted, _) = optimize(&state, train, config)?;
    let means = view_means(&fitted.view_hps, train, val)?;
    let pred = objective::hybrid_predict(&means, tradeoff)?;
    Ok(accuracy(&pred, val.labels()))
}

/// Normalize a coupling set against a dataset of `n` rows: a set covering
/// every row is the same as no restriction.
fn normalize_coupling_set(set: Option<Vec<usize>>, n: usize) -> Option<Vec<usize>> {
    match set {
        Some(t) if t.len() == n => None,
        other => other,
    }
}

/// Choose `(a, b)` by validation accuracy over `search.cv_repeats` random
/// 80/20 partitions of `data_train`. With `consistent_set`, each cell's
/// coupling is restricted to the consistent rows inside its training part.
pub fn grid_search(
    data_train: &MultiViewDataset,
    search: &SearchConfig,
    config: &OptimizerConfig,
    consistent_set: Option<&[usize]>,
) -> Result<GridSearchResult> {
    config.validate()?;
    search.validate()?;
    let k = data_train.n_views();
    let cells = search.cells(k)?;
    let n = data_train.n_examples();
    let repeats = search.cv_repeats;
    // A single repeat still needs a validation split; draw two and use one.
    let folds = kfold_indices(n, repeats.max(2), derive_seed(config.seed, CV_SEED_TAG))?;
    let init = init_view_hps(k, config.seed);

    let parts = folds[..repeats]
        .iter()
        .map(|(tr, va)| {
            if va.is_empty() {
                return Err(Error::Data("empty validation part".into()));
            }
            let restricted = consistent_set.map(|t| restrict_index_set(t, tr));
            Ok((data_train.subset(tr)?, data_train.subset(va)?, restricted))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..repeats).map(move |r| (c, r))).collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (train, val, restricted) = &parts[r];
            let mut tradeoff = cells[c].clone();
            let mut set = restricted.clone();
            if matches!(&set, Some(t) if t.is_empty()) {
                // No consistent rows in this part: drop the coupling.
                tradeoff = tradeoff_for(k, tradeoff.a(), 0.0)?;
                set = None;
            }
            let set = normalize_coupling_set(set, train.n_examples());
            validate_cell(train, val, &init, &tradeoff, set, config)
        })
        .collect::<Result<Vec<f64>>>()?;

    let table: Vec<GridCell> = cells
        .iter()
        .enumerate()
        .map(|(c, t)| {
            let accuracies: Vec<f64> = scores[c * repeats..(c + 1) * repeats].to_vec();
            let mean_accuracy = accuracies.iter().sum::<f64>() / repeats as f64;
            GridCell { a: t.a(), b: t.b(), accuracies, mean_accuracy }
        })
        .collect();
    let best_index = select_best_cell(&table).expect("grid is non-empty");
    debug!(
        "grid search picked a={} b={} (mean validation accuracy {:.4})",
        table[best_index].a, table[best_index].b, table[best_index].mean_accuracy
    );
    Ok(GridSearchResult { best: cells[best_index].clone(), best_index, table })
}

/// How a model derives its input views from a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputViews {
    All,
    Single(usize),
    Concatenated,
}

impl InputViews {
    pub fn apply(&self, data: &MultiViewDataset) -> Result<MultiViewDataset> {
        match *self {
            InputViews::All => Ok(data.clone()),
            InputViews::Single(k) => data.single_view(k),
            InputViews::Concatenated => data.concatenated(),
        }
    }
}

/// Training method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gp1,
    Gp2,
    Gp3,
    MvGp1,
    MvGp2,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gp1, Method::Gp2, Method::Gp3, Method::MvGp1, Method::MvGp2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gp1 => "gp1",
            Method::Gp2 => "gp2",
            Method::Gp3 => "gp3",
            Method::MvGp1 => "mvgp1",
            Method::MvGp2 => "mvgp2",
        }
    }

    pub fn is_multi_view(&self) -> bool {
        matches!(self, Method::MvGp1 | Method::MvGp2)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?} (expected gp1, gp2, gp3, mvgp1 or mvgp2)")))
    }
}

/// Per-view predictive means, combined scores and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub view_means: Vec<DVector<f64>>,
    pub scores: DVector<f64>,
    pub labels: Vec<f64>,
}

impl Predictions {
    pub fn accuracy(&self, truth: &DVector<f64>) -> f64 {
        accuracy(&self.labels, truth)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub method: Method,
    pub input: InputViews,
    pub view_hps: Vec<ViewHyperparams>,
    pub tradeoff: TradeoffParams,
    /// Model inputs (after applying `input`) and labels used for training.
    pub train_data: MultiViewDataset,
    pub consistent_set: Option<Vec<usize>>,
    pub training_log: TrainingLog,
    pub grid: Option<GridSearchResult>,
}

impl TrainedModel {
    /// The objective state of the final fit.
    pub fn objective_state(&self) -> ObjectiveState {
        let set = match &self.consistent_set {
            Some(t) if !t.is_empty() => normalize_coupling_set(Some(t.clone()), self.train_data.n_examples()),
            _ => None,
        };
        ObjectiveState::new(self.view_hps.clone(), self.tradeoff.clone()).with_coupling_set(set)
    }

    pub fn predict(&self, data: &MultiViewDataset) -> Result<Predictions> {
        let inputs = self.input.apply(data)?;
        if inputs.view_dims() != self.train_data.view_dims() {
            return Err(Error::dims(format!(
                "model expects view dimensions {:?}, data has {:?}",
                self.train_data.view_dims(),
                inputs.view_dims()
            )));
        }
        let view_means = view_means(&self.view_hps, &self.train_data, &inputs)?;
        let scores = objective::combined_scores(&view_means, self.tradeoff.weights())?;
        let labels = scores.iter().map(|&s| sign_label(s)).collect();
        Ok(Predictions { view_means, scores, labels })
    }
}

fn view_means(
    hps: &[ViewHyperparams],
    train: &MultiViewDataset,
    query: &MultiViewDataset,
) -> Result<Vec<DVector<f64>>> {
    hps.iter()
        .enumerate()
        .map(|(k, hp)| FittedView::new(*hp, train.view(k), train.labels())?.predict_mean(query.view(k)))
        .collect()
}

fn require_multi_view(data: &MultiViewDataset) -> Result<()> {
    if data.n_views() < 2 {
        return Err(Error::invalid(format!(
            "multi-view training needs at least 2 views (got {})",
            data.n_views()
        )));
    }
    Ok(())
}

/// Grid search followed by a final fit on all of `data_train`.
pub fn train_mvgp1(
    data_train: &MultiViewDataset,
    search: &SearchConfig,
    config: &OptimizerConfig,
) -> Result<TrainedModel> {
    require_multi_view(data_train)?;
    let grid = grid_search(data_train, search, config, None)?;
    let init = init_view_hps(data_train.n_views(), config.seed);
    let state = ObjectiveState::new(init, grid.best.clone());
    let (fitted, log) = optimize(&state, data_train, config)?;
    Ok(TrainedModel {
        method: Method::MvGp1,
        input: InputViews::All,
        view_hps: fitted.view_hps,
        tradeoff: grid.best.clone(),
        train_data: data_train.clone(),
        consistent_set: None,
        training_log: log,
        grid: Some(grid),
    })
}

/// Rows where every view's sign prediction agrees with the true label.
pub fn consistent_set_from_predictions(view_means: &[DVector<f64>], labels: &DVector<f64>) -> Vec<usize> {
    (0..labels.len())
        .filter(|&i| view_means.iter().all(|m| sign_label(m[i]) == labels[i]))
        .collect()
}

/// Training rows on which every view of `model` predicts the true label.
pub fn build_consistent_set(model: &TrainedModel, data_train: &MultiViewDataset) -> Result<Vec<usize>> {
    let pred = model.predict(data_train)?;
    Ok(consistent_set_from_predictions(&pred.view_means, data_train.labels()))
}

/// MvGP1, then the consistent set, then a second grid search and final fit
/// with the coupling restricted to that set.
pub fn train_mvgp2(
    data_train: &MultiViewDataset,
    search: &SearchConfig,
    config: &OptimizerConfig,
) -> Result<TrainedModel> {
    let first = train_mvgp1(data_train, search, config)?;
    train_mvgp2_from(&first, data_train, search, config)
}

/// Second stage of MvGP2 given an already trained MvGP1 model.
pub fn train_mvgp2_from(
    first: &TrainedModel,
    data_train: &MultiViewDataset,
    search: &SearchConfig,
    config: &OptimizerConfig,
) -> Result<TrainedModel> {
    let t = build_consistent_set(first, data_train)?;
    debug!("consistent set holds {} of {} training rows", t.len(), data_train.n_examples());
    train_with_consistent_set(data_train, t, search, config)
}

/// Second stage of MvGP2 for a given consistent set `t`.
///
/// An empty `t` drops the coupling entirely (the search runs with `b = 0`)
/// and records a warning.
pub fn train_with_consistent_set(
    data_train: &MultiViewDataset,
    t: Vec<usize>,
    search: &SearchConfig,
    config: &OptimizerConfig,
) -> Result<TrainedModel> {
    require_multi_view(data_train)?;
    if !crate::dataset::is_valid_index_set(&t, data_train.n_examples()) {
        return Err(Error::invalid("consistent set must be sorted, duplicate-free and within range"));
    }
    let mut warnings = Vec::new();
    let (grid, set) = if t.is_empty() {
        let msg = "consistent set is empty; coupling dropped (b = 0)".to_string();
        warn!("{msg}");
        warnings.push(msg);
        let decoupled = SearchConfig { b_values: vec![0.0], ..search.clone() };
        (grid_search(data_train, &decoupled, config, None)?, None)
    } else {
        let set = normalize_coupling_set(Some(t.clone()), data_train.n_examples());
        (grid_search(data_train, search, config, set.as_deref())?, set)
    };
    let init = init_view_hps(data_train.n_views(), config.seed);
    let state = ObjectiveState::new(init, grid.best.clone()).with_coupling_set(set);
    let (fitted, mut log) = optimize(&state, data_train, config)?;
    log.warnings.extend(warnings);
    Ok(TrainedModel {
        method: Method::MvGp2,
        input: InputViews::All,
        view_hps: fitted.view_hps,
        tradeoff: grid.best.clone(),
        train_data: data_train.clone(),
        consistent_set: Some(t),
        training_log: log,
        grid: Some(grid),
    })
}

/// Single-view GP fitted by minimizing its negative log marginal likelihood.
pub fn train_baseline(
    data_train: &MultiViewDataset,
    input: InputViews,
    config: &OptimizerConfig,
) -> Result<TrainedModel> {
    let method = match input {
        InputViews::Single(0) => Method::Gp1,
        InputViews::Single(_) => Method::Gp2,
        InputViews::Concatenated => Method::Gp3,
        InputViews::All if data_train.n_views() == 1 => Method::Gp1,
        InputViews::All => return Err(Error::invalid("baseline needs a single input view")),
    };
    let inputs = input.apply(data_train)?;
    let init = init_view_hps(1, config.seed);
    let state = ObjectiveState::new(init, TradeoffParams::single_view());
    let (fitted, log) = optimize(&state, &inputs, config)?;
    Ok(TrainedModel {
        method,
        input,
        view_hps: fitted.view_hps,
        tradeoff: TradeoffParams::single_view(),
        train_data: inputs,
        consistent_set: None,
        training_log: log,
        grid: None,
    })
}

/// Train any method.
pub fn train(
    method: Method,
    data_train: &MultiViewDataset,
    search: &SearchConfig,
    config: &OptimizerConfig,
) -> Result<TrainedModel> {
    match method {
        Method::Gp1 => train_baseline(data_train, InputViews::Single(0), config),
        Method::Gp2 => train_baseline(data_train, InputViews::Single(1), config),
        Method::Gp3 => train_baseline(data_train, InputViews::Concatenated, config),
        Method::MvGp1 => train_mvgp1(data_train, search, config),
        Method::MvGp2 => train_mvgp2(data_train, search, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let c = OptimizerConfig { max_iters: 0, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }

    #[test]
    fn default_grid_matches_protocol() {
        let s = SearchConfig::default();
        assert_eq!(s.a_values.len(), 11);
        assert_eq!(s.b_values, vec![2f64.powi(-18), 2f64.powi(-12), 2f64.powi(-8), 2.0, 8.0, 256.0]);
        assert_eq!(s.n_cells() * s.cv_repeats, 660);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_view_hps(3, 11);
        assert_eq!(a, init_view_hps(3, 11));
        assert_ne!(a, init_view_hps(3, 12));
        assert!(a.iter().flat_map(|h| h.to_array()).all(|v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn tie_break_prefers_small_b_then_balanced_a() {
        let cell = |a, b, m| GridCell { a, b, accuracies: vec![m], mean_accuracy: m };
        let t = vec![cell(0.0, 2.0, 0.9), cell(0.9, 0.5, 0.9), cell(0.4, 0.5, 0.9), cell(0.6, 0.5, 0.9), cell(1.0, 9.0, 0.8)];
        assert_eq!(select_best_cell(&t), Some(2));
        let t = vec![cell(0.0, 2.0, 0.7), cell(1.0, 9.0, 0.8)];
        assert_eq!(select_best_cell(&t), Some(1));
    }

    #[test]
    fn hand_built_consistent_set() {
        let v1 = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let v2 = DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(consistent_set_from_predictions(&[v1.clone(), v2], &y), vec![0, 2]);
        assert_eq!(consistent_set_from_predictions(&[v1.clone(), v1.clone()], &y), vec![0, 1, 2, 3]);
        let all_pos = DVector::from_element(4, 1.0);
        let all_neg = DVector::from_element(4, -1.0);
        assert!(consistent_set_from_predictions(&[all_pos, all_neg], &y).is_empty());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("MVGP2".parse::<Method>().unwrap(), Method::MvGp2);
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn three_view_tradeoff_weights_sum_to_one() {
        let t = tradeoff_for(3, 0.3, 2.0).unwrap();
        assert!((t.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t.coupling(1, 2), 2.0);
    }
}
