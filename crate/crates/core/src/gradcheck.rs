//! Gradient verification: random problem generators, a finite-difference
//! oracle, and a term-by-term closed-form expression for `∂L/∂s_f` of the
//! first view in the two-view objective.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::gp_view::{nll_grad, ViewHyperparams, LOG_SF, N_VIEW_PARAMS};
use crate::kernel;
use crate::linalg::{frobenius_dot, SpdFactor};
use crate::objective::{self, ObjectiveState, TradeoffParams};
use crate::trainer::tradeoff_for;

/// Values of `a` cycled through by [`run_gradcheck`].
pub const A_VALUES: [f64; 4] = [0.0, 0.3, 0.5, 1.0];
/// Values of `b` cycled through by [`run_gradcheck`] (`0, 2⁻⁸, 2, 2⁸`).
pub const B_VALUES: [f64; 4] = [0.0, 0.00390625, 2.0, 256.0];

/// Which objective variant a random instance exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    TwoView,
    /// Coupling restricted to a random subset of rows.
    Restricted,
    ThreeView,
}

/// A random objective evaluation point.
#[derive(Clone, Debug)]
pub struct Instance {
    pub data: MultiViewDataset,
    pub state: ObjectiveState,
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

/// Build a random instance: standard-normal inputs of the given dimensions,
/// random `±1` labels and hyperparameters drawn from a moderate range.
pub fn random_instance(seed: u64, n: usize, dims: &[usize], a: f64, b: f64, variant: Variant) -> Result<Instance> {
    let k = dims.len();
    let expected = if variant == Variant::ThreeView { 3 } else { 2 };
    if k != expected {
        return Err(Error::invalid(format!("{variant:?} instances need {expected} view dimensions, got {k}")));
    }
    if n < 2 || dims.contains(&0) {
        return Err(Error::invalid("instances need at least two points and non-empty views"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let views: Vec<DMatrix<f64>> = dims.iter().map(|&d| normal_matrix(&mut rng, n, d)).collect();
    let labels = DVector::from_fn(n, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let data = MultiViewDataset::from_views(views, labels)?;
    let hps = (0..k)
        .map(|_| {
            ViewHyperparams::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.7..0.3),
                rng.random_range(-1.0..-0.2),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let tradeoff = if k == 2 { TradeoffParams::two_view(a, b)? } else { tradeoff_for(k, a, b)? };
    let mut state = ObjectiveState::new(hps, tradeoff);
    if variant == Variant::Restricted {
        let m = rng.random_range(2..n.max(3));
        let mut t = sample(&mut rng, n, m.min(n)).into_vec();
        t.sort_unstable();
        state = state.with_coupling_set(Some(t));
    }
    Ok(Instance { data, state })
}

/// Central finite differences of [`objective::eval`] in every log-domain
/// coordinate: five-point stencils at steps `h` and `h/2`, combined by one
/// Richardson step (truncation error `O(h⁶)`).
pub fn finite_difference_grad(state: &ObjectiveState, data: &MultiViewDataset, h: f64) -> Result<Vec<f64>> {
    let x = state.params();
    let f = |i: usize, dx: f64| -> Result<f64> {
        let mut p = x.clone();
        p[i] += dx;
        objective::eval(&state.with_params(&p)?, data)
    };
    let stencil = |i: usize, h: f64| -> Result<f64> {
        let d1 = f(i, h)? - f(i, -h)?;
        let d2 = f(i, 2.0 * h)? - f(i, -2.0 * h)?;
        Ok((8.0 * d1 - d2) / (12.0 * h))
    };
    (0..x.len())
        .map(|i| Ok((16.0 * stencil(i, 0.5 * h)? - stencil(i, h)?) / 15.0))
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(b.abs()).max(floor)
}

/// `∂L/∂ln s_f` of view 1 in the two-view objective, written out as the
/// explicit sum of its likelihood group and the two coupling groups (one
/// through `Σ_1`, one through `μ_1`), each with the coefficient in front of
/// it in the published expression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSfGradient {
    /// `(a/2){−yᵀA dK A y + tr(A dK)}`
    pub likelihood: f64,
    /// `(b/2) tr{Σ₂⁻¹ dΣ₁ − Σ₁⁻¹ dΣ₁ Σ₁⁻¹ Σ₂}`
    pub coupling_cov: f64,
    /// `(b/2){dμ₁ᵀ(Σ₁⁻¹+Σ₂⁻¹)e − eᵀΣ₁⁻¹dΣ₁Σ₁⁻¹e + eᵀ(Σ₁⁻¹+Σ₂⁻¹)dμ₁}`
    pub coupling_mean: f64,
}

impl ClosedFormSfGradient {
    /// Sum of the groups as printed.
    pub fn literal(&self) -> f64 {
        self.likelihood + self.coupling_cov + self.coupling_mean
    }

    /// The printed expression with both coupling groups halved, which is the
    /// derivative of `(b/2)[KL(p₁‖p₂) + KL(p₂‖p₁)]`.
    pub fn reconciled(&self) -> f64 {
        self.likelihood + 0.5 * (self.coupling_cov + self.coupling_mean)
    }
}

/// Evaluate [`ClosedFormSfGradient`] with explicit matrix inverses, converted
/// to the log domain (`∂/∂ln s_f = s_f ∂/∂s_f`). Two views, no coupling set.
pub fn closed_form_sf_gradient(state: &ObjectiveState, data: &MultiViewDataset) -> Result<ClosedFormSfGradient> {
    state.validate(data)?;
    if data.n_views() != 2 || state.coupling_index_set.is_some() {
        return Err(Error::invalid("the closed form covers two views without a coupling set"));
    }
    let (a, b) = (state.tradeoff.weights()[0], state.tradeoff.coupling(0, 1));
    let y = data.labels();
    let n = y.len();
    let post = |v: usize| -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
        let hp = state.view_hps[v];
        let k = kernel::gram(&hp.kernel, data.view(v));
        let c = &k + DMatrix::identity(n, n) * hp.noise_var();
        let inv = SpdFactor::exact(&c, "K + sigma^2 I")?.inverse();
        let mu = &k * (&inv * y);
        let sigma = &k - &k * &inv * &k;
        Ok((k, inv, mu, sigma))
    };
    let (k1, a1, mu1, sigma1) = post(0)?;
    let (_, _, mu2, sigma2) = post(1)?;
    let sf = state.view_hps[0].kernel.sf();
    let dk = &k1 * (2.0 / sf);

    let ady = &a1 * y;
    let likelihood = 0.5 * a * (-(ady.dot(&(&dk * &ady))) + frobenius_dot(&a1, &dk.transpose()));

    let s1 = SpdFactor::exact(&sigma1, "posterior covariance")?.inverse();
    let s2 = SpdFactor::exact(&sigma2, "posterior covariance")?.inverse();
    let ka = &k1 * &a1;
    let d_sigma = &dk - &dk * ka.transpose() - &ka * &dk + &ka * &dk * ka.transpose();
    let d_mu = &dk * &ady - &ka * (&dk * &ady);
    let e = &mu1 - &mu2;
    let s12 = &s1 + &s2;

    let coupling_cov = 0.5 * b * ((&s2 * &d_sigma).trace() - (&s1 * &d_sigma * &s1 * &sigma2).trace());
    let s1e = &s1 * &e;
    let coupling_mean =
        0.5 * b * (d_mu.dot(&(&s12 * &e)) - s1e.dot(&(&d_sigma * &s1e)) + e.dot(&(&s12 * &d_mu)));

    Ok(ClosedFormSfGradient {
        likelihood: sf * likelihood,
        coupling_cov: sf * coupling_cov,
        coupling_mean: sf * coupling_mean,
    })
}

/// Options for [`run_gradcheck`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    /// Input dimension of each view.
    pub dims: Vec<usize>,
    pub n_points: usize,
    pub seeds: Vec<u64>,
    /// Finite-difference step in log-parameter space.
    pub step: f64,
    /// Largest acceptable relative error.
    pub tolerance: f64,
    /// Add a relative perturbation to the analytic gradient before comparing
    /// (harness self-test).
    pub corrupt: Option<f64>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            dims: vec![3, 2],
            n_points: 10,
            seeds: (0..20).collect(),
            step: 4e-2,
            tolerance: 1e-4,
            corrupt: None,
        }
    }
}

/// Denominator floor for relative errors, scaled by the objective value so
/// that round-off in near-zero coordinates is not reported as error.
pub fn error_floor(value: f64) -> f64 {
    1e-6 * value.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub seed: u64,
    pub a: f64,
    pub b: f64,
    /// Max relative error of the analytic gradient against finite differences.
    pub fd_error: f64,
    /// Relative error of the analytic `∂L/∂ln s_f` (view 1) against the
    /// reconciled closed form.
    pub closed_form_error: f64,
    /// Closed-form coupling groups as printed divided by the analytic
    /// coupling part; `None` when the coupling part is zero.
    pub literal_coupling_ratio: Option<f64>,
    /// Largest gradient change caused by the coupling terms; exactly 0 when
    /// `b = 0`.
    pub coupling_grad_max: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub cases: Vec<GradcheckCase>,
    pub max_fd_error: f64,
    pub max_closed_form_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// For each seed, build a random two-view problem (with `a` and `b` cycling
/// through [`A_VALUES`] × [`B_VALUES`]) and compare the analytic gradient
/// with finite differences and with the closed form.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.dims.len() != 2 {
        return Err(Error::invalid("gradcheck builds two-view problems; give two dimensions"));
    }
    if cfg.n_points < 2 || cfg.n_points > 20 {
        return Err(Error::invalid("gradcheck needs between 2 and 20 points"));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("gradcheck needs at least one seed"));
    }
    let mut cases = Vec::with_capacity(cfg.seeds.len());
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let a = A_VALUES[i % A_VALUES.len()];
        let b = B_VALUES[(i / A_VALUES.len()) % B_VALUES.len()];
        let inst = random_instance(seed, cfg.n_points, &cfg.dims, a, b, Variant::TwoView)?;
        let ev = objective::value_and_grad(&inst.state, &inst.data)?;
        let mut g = ev.grad.clone();
        if let Some(c) = cfg.corrupt {
            g[0] += c * g[0].abs().max(1.0);
        }
        let fd = finite_difference_grad(&inst.state, &inst.data, cfg.step)?;
        let floor = error_floor(ev.value);
        let fd_error = g.iter().zip(&fd).map(|(x, y)| relative_error(*x, *y, floor)).fold(0.0, f64::max);

        // Coupling part = full gradient minus the weighted likelihood gradients.
        let mut coupling = g.clone();
        for (v, hp) in inst.state.view_hps.iter().enumerate() {
            let w = inst.state.tradeoff.weights()[v];
            if w != 0.0 {
                let lg = nll_grad(hp, inst.data.view(v), inst.data.labels())?;
                for t in 0..N_VIEW_PARAMS {
                    coupling[v * N_VIEW_PARAMS + t] -= w * lg[t];
                }
            }
        }
        let coupling_grad_max = coupling.iter().fold(0.0, |m: f64, v| m.max(v.abs()));

        let cf = closed_form_sf_gradient(&inst.state, &inst.data)?;
        let closed_form_error = relative_error(g[LOG_SF], cf.reconciled(), floor);
        let coupling_sf = coupling[LOG_SF];
        let literal_coupling_ratio =
            (coupling_sf != 0.0).then(|| (cf.coupling_cov + cf.coupling_mean) / coupling_sf);
        let passed = fd_error <= cfg.tolerance && closed_form_error <= cfg.tolerance && (b != 0.0 || coupling_grad_max == 0.0);
        cases.push(GradcheckCase {
            seed,
            a,
            b,
            fd_error,
            closed_form_error,
            literal_coupling_ratio,
            coupling_grad_max,
            passed,
        });
    }
    let max_fd_error = cases.iter().map(|c| c.fd_error).fold(0.0, f64::max);
    let max_closed_form_error = cases.iter().map(|c| c.closed_form_error).fold(0.0, f64::max);
    let passed = cases.iter().all(|c| c.passed);
    Ok(GradcheckReport { cases, max_fd_error, max_closed_form_error, tolerance: cfg.tolerance, passed })
}
