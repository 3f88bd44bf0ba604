//! The co-regularized multi-view objective
//!
//! ```text
//! L = −Σ_k a_k log p(y | X^k) + Σ_{i<j} (b_ij / 2) [KL(p_i‖p_j) + KL(p_j‖p_i)]
//! ```
//!
//! where `p_k` is the latent posterior of view `k`. When a coupling index set
//! `T` is given, the posteriors inside the KL terms are computed from the rows
//! in `T` only; the likelihood terms always use every training row.
//!
//! The gradient is assembled by the chain rule: per-view likelihood gradients
//! plus the KL parameter gradients contracted against each view's posterior
//! Jacobian.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::{is_valid_index_set, MultiViewDataset};
use crate::divergence::{symmetric_kl, symmetric_kl_with_grad};
use crate::error::{Error, Result};
use crate::gp_view::{FittedView, GaussianPosterior, ViewHyperparams, ViewJacobian, N_VIEW_PARAMS};
use crate::linalg::{select_entries, select_rows};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// View weights `a_k` (on the simplex) and pairwise couplings `b_ij ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffParams {
    weights: Vec<f64>,
    /// Symmetric `K × K`; the diagonal is ignored.
    couplings: Vec<Vec<f64>>,
}

impl TradeoffParams {
    pub fn new(weights: Vec<f64>, couplings: Vec<Vec<f64>>) -> Result<Self> {
        let t = TradeoffParams { weights, couplings };
        t.validate()?;
        Ok(t)
    }

    /// Two views with weights `(a, 1 − a)` and coupling `b`.
    pub fn two_view(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, 1.0 - a], vec![vec![0.0, b], vec![b, 0.0]])
    }

    /// Arbitrary weights with the same coupling `b` on every pair.
    pub fn uniform_coupling(weights: Vec<f64>, b: f64) -> Result<Self> {
        let k = weights.len();
        let couplings = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 0.0 } else { b }).collect())
            .collect();
        Self::new(weights, couplings)
    }

    /// A single view with weight one (baseline models).
    pub fn single_view() -> Self {
        TradeoffParams { weights: vec![1.0], couplings: vec![vec![0.0]] }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::invalid("trade-off parameters need at least one view weight"));
        }
        if let Some(w) = self.weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::invalid(format!("view weight {w} outside [0, 1]")));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("view weights sum to {sum}, not 1")));
        }
        if self.couplings.len() != k || self.couplings.iter().any(|r| r.len() != k) {
            return Err(Error::invalid(format!("coupling matrix must be {k} x {k}")));
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let (b, bt) = (self.couplings[i][j], self.couplings[j][i]);
                if !(b >= 0.0) || !b.is_finite() {
                    return Err(Error::invalid(format!("coupling b[{i}][{j}] = {b} must be finite and >= 0")));
                }
                if b != bt {
                    return Err(Error::invalid(format!("coupling matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.couplings[i][j]
        }
    }

    /// `a`, the weight of the first view.
    pub fn a(&self) -> f64 {
        self.weights[0]
    }

    /// Largest pairwise coupling (`b` itself for two views).
    pub fn b(&self) -> f64 {
        let k = self.n_views();
        (0..k)
            .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
            .map(|(i, j)| self.couplings[i][j])
            .fold(0.0, f64::max)
    }

    /// Pairs `(i, j)`, `i < j`, with a non-zero coupling.
    fn active_pairs(&self) -> Vec<(usize, usize, f64)> {
        let k = self.n_views();
        let mut out = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let b = self.couplings[i][j];
                if b != 0.0 {
                    out.push((i, j, b));
                }
            }
        }
        out
    }
}

/// Everything the objective depends on besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveState {
    pub view_hps: Vec<ViewHyperparams>,
    pub tradeoff: TradeoffParams,
    /// Rows whose posteriors enter the coupling terms; `None` means all rows.
    pub coupling_index_set: Option<Vec<usize>>,
}

impl ObjectiveState {
    pub fn new(view_hps: Vec<ViewHyperparams>, tradeoff: TradeoffParams) -> Self {
        ObjectiveState { view_hps, tradeoff, coupling_index_set: None }
    }

    pub fn with_coupling_set(mut self, set: Option<Vec<usize>>) -> Self {
        self.coupling_index_set = set;
        self
    }

    pub fn n_params(&self) -> usize {
        self.view_hps.len() * N_VIEW_PARAMS
    }

    /// Flattened hyperparameters, view-major: `[ln s_f, ln l, ln σ]` per view.
    pub fn params(&self) -> Vec<f64> {
        self.view_hps.iter().flat_map(|h| h.to_array()).collect()
    }

    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.n_params() {
            return Err(Error::dims(format!("{} parameters for {} views", p.len(), self.view_hps.len())));
        }
        let view_hps = p
            .chunks_exact(N_VIEW_PARAMS)
            .map(|c| ViewHyperparams::from_array([c[0], c[1], c[2]]))
            .collect::<Result<Vec<_>>>()?;
        Ok(ObjectiveState { view_hps, ..self.clone() })
    }

    pub fn validate(&self, data: &MultiViewDataset) -> Result<()> {
        self.tradeoff.validate()?;
        let k = data.n_views();
        if self.view_hps.len() != k || self.tradeoff.n_views() != k {
            return Err(Error::dims(format!(
                "dataset has {k} views but the state has {} hyperparameter sets and {} weights",
                self.view_hps.len(),
                self.tradeoff.n_views()
            )));
        }
        if let Some(t) = &self.coupling_index_set {
            if t.is_empty() {
                return Err(Error::invalid("coupling index set is empty"));
            }
            if !is_valid_index_set(t, data.n_examples()) {
                return Err(Error::invalid(
                    "coupling index set must be sorted, duplicate-free and within range",
                ));
            }
        }
        Ok(())
    }
}

/// Objective value split into its likelihood and coupling parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveTerms {
    /// `Σ_k a_k · nll_k`
    pub likelihood: f64,
    /// `Σ_{i<j} (b_ij/2)·[KL(p_i‖p_j) + KL(p_j‖p_i)]`
    pub coupling: f64,
    /// Per-view negative log marginal likelihood (`None` for views with zero
    /// weight, which are not evaluated).
    pub view_nll: Vec<Option<f64>>,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.likelihood + self.coupling
    }
}

/// Value, gradient and bookkeeping from one evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    pub terms: ObjectiveTerms,
    /// Factorizations that needed jitter during this evaluation.
    pub jitter_events: usize,
}

struct CouplingData {
    xs: Vec<nalgebra::DMatrix<f64>>,
    y: DVector<f64>,
}

/// Rows used by the coupling terms, or `None` when they are all rows.
fn coupling_rows(state: &ObjectiveState, data: &MultiViewDataset) -> Option<CouplingData> {
    match &state.coupling_index_set {
        Some(t) if t.len() != data.n_examples() => Some(CouplingData {
            xs: data.views().iter().map(|v| select_rows(v, t)).collect(),
            y: select_entries(data.labels(), t),
        }),
        _ => None,
    }
}

fn needs_posterior(tradeoff: &TradeoffParams, k: usize) -> bool {
    (0..tradeoff.n_views()).any(|j| tradeoff.coupling(k, j) != 0.0)
}

pub fn eval(state: &ObjectiveState, data: &MultiViewDataset) -> Result<f64> {
    Ok(eval_terms(state, data)?.total())
}

pub fn eval_terms(state: &ObjectiveState, data: &MultiViewDataset) -> Result<ObjectiveTerms> {
    state.validate(data)?;
    let y = data.labels();
    let tr = &state.tradeoff;
    let restricted = coupling_rows(state, data);
    let k = data.n_views();

    let mut likelihood = 0.0;
    let mut view_nll = vec![None; k];
    let mut posteriors: Vec<Option<GaussianPosterior>> = vec![None; k];
    for v in 0..k {
        let w = tr.weights()[v];
        let coupled = needs_posterior(tr, v);
        if w == 0.0 && !coupled {
            continue;
        }
        let fitted = FittedView::new(state.view_hps[v], data.view(v), y)?;
        if w != 0.0 {
            let nll = fitted.nll_terms(y).total();
            likelihood += w * nll;
            view_nll[v] = Some(nll);
        }
        if coupled {
            posteriors[v] = Some(match &restricted {
                None => fitted.posterior()?,
                Some(c) => FittedView::new(state.view_hps[v], &c.xs[v], &c.y)?.posterior()?,
            });
        }
    }

    let mut coupling = 0.0;
    for (i, j, b) in tr.active_pairs() {
        let (pi, pj) = (posteriors[i].as_ref().unwrap(), posteriors[j].as_ref().unwrap());
        coupling += 0.5 * b * symmetric_kl(pi, pj)?;
    }
    Ok(ObjectiveTerms { likelihood, coupling, view_nll })
}

pub fn grad(state: &ObjectiveState, data: &MultiViewDataset) -> Result<Vec<f64>> {
    Ok(value_and_grad(state, data)?.grad)
}

/// Objective value and its gradient over all `3K` log-domain hyperparameters.
pub fn value_and_grad(state: &ObjectiveState, data: &MultiViewDataset) -> Result<Evaluation> {
    state.validate(data)?;
    let y = data.labels();
    let tr = &state.tradeoff;
    let restricted = coupling_rows(state, data);
    let k = data.n_views();

    let mut grad = vec![0.0; state.n_params()];
    let mut likelihood = 0.0;
    let mut view_nll = vec![None; k];
    let mut jitter_events = 0;
    // Jacobians of the posteriors entering the coupling terms.
    let mut coupling_jac: Vec<Option<ViewJacobian>> = (0..k).map(|_| None).collect();

    for v in 0..k {
        let w = tr.weights()[v];
        let coupled = needs_posterior(tr, v);
        if w == 0.0 && !coupled {
            continue;
        }
        let full = if w != 0.0 || restricted.is_none() {
            let hp = state.view_hps[v];
            Some(if coupled && restricted.is_none() {
                ViewJacobian::with_posterior(hp, data.view(v), y)?
            } else {
                ViewJacobian::new(hp, data.view(v), y)?
            })
        } else {
            None
        };
        if let (Some(jac), true) = (&full, w != 0.0) {
            let nll = jac.nll_terms().total();
            likelihood += w * nll;
            view_nll[v] = Some(nll);
            for (t, g) in jac.nll_grad().iter().enumerate() {
                grad[v * N_VIEW_PARAMS + t] += w * g;
            }
        }
        if let Some(jac) = &full {
            jitter_events += jac.jitter_events();
        }
        if coupled {
            coupling_jac[v] = Some(match &restricted {
                None => full.expect("full-row jacobian exists when unrestricted"),
                Some(c) => {
                    let jac = ViewJacobian::with_posterior(state.view_hps[v], &c.xs[v], &c.y)?;
                    jitter_events += jac.jitter_events();
                    jac
                }
            });
        }
    }

    let mut coupling = 0.0;
    for (i, j, b) in tr.active_pairs() {
        let (ji, jj) = (coupling_jac[i].as_ref().unwrap(), coupling_jac[j].as_ref().unwrap());
        let msg = "coupled views carry a posterior";
        let s = symmetric_kl_with_grad(ji.posterior().expect(msg), jj.posterior().expect(msg))?;
        let c = 0.5 * b;
        coupling += c * s.value;
        let gi = ji.contract_posterior(&s.mean_1, &s.cov_1);
        let gj = jj.contract_posterior(&s.mean_2, &s.cov_2);
        for t in 0..N_VIEW_PARAMS {
            grad[i * N_VIEW_PARAMS + t] += c * gi[t];
            grad[j * N_VIEW_PARAMS + t] += c * gj[t];
        }
    }

    let terms = ObjectiveTerms { likelihood, coupling, view_nll };
    Ok(Evaluation { value: terms.total(), grad, terms, jitter_events })
}

/// `Σ_k a_k f_k` for each query point.
pub fn combined_scores(means: &[DVector<f64>], weights: &[f64]) -> Result<DVector<f64>> {
    if means.is_empty() || means.len() != weights.len() {
        return Err(Error::dims(format!("{} mean vectors for {} weights", means.len(), weights.len())));
    }
    let p = means[0].len();
    if means.iter().any(|m| m.len() != p) {
        return Err(Error::dims("per-view predictive means differ in length"));
    }
    let mut s = DVector::zeros(p);
    for (m, &w) in means.iter().zip(weights) {
        s.axpy(w, m, 1.0);
    }
    Ok(s)
}

/// `+1` for non-negative scores, `−1` otherwise (ties go to `+1`).
pub fn sign_label(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `sign(Σ_k a_k f_k*)`, with `sign(0) = +1`.
pub fn hybrid_predict(means: &[DVector<f64>], tradeoff: &TradeoffParams) -> Result<Vec<f64>> {
    tradeoff.validate()?;
    let s = combined_scores(means, tradeoff.weights())?;
    Ok(s.iter().map(|&v| sign_label(v)).collect())
}
