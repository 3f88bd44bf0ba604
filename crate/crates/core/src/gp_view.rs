//! Exact Gaussian-process regression on a single view, used as a classifier
//! by regressing directly on `±1` labels.
//!
//! With `C = K + σ²I`:
//!
//! * negative log marginal likelihood `½ yᵀC⁻¹y + ½ log|C| + (N/2) log 2π`
//! * latent posterior `μ = K C⁻¹ y`, `Σ = K − K C⁻¹ K`
//! * prediction `f̄* = k*ᵀ C⁻¹ y`, `var(f*) = k(x*, x*) − k*ᵀ C⁻¹ k*`
//!
//! Hyperparameters are `ln s_f`, `ln l`, `ln σ`; all derivatives are taken
//! with respect to those log-domain coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, GramWithGrad, KernelParams};
use crate::linalg::{frobenius_dot, symmetrize, SpdFactor};

/// Number of hyperparameters per view.
pub const N_VIEW_PARAMS: usize = 3;
pub const LOG_SF: usize = 0;
pub const LOG_L: usize = 1;
pub const LOG_SIGMA: usize = 2;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewHyperparams {
    pub kernel: KernelParams,
    /// `ln σ`, the noise standard deviation.
    pub log_sigma: f64,
}

impl ViewHyperparams {
    pub fn new(log_sf: f64, log_l: f64, log_sigma: f64) -> Result<Self> {
        let kernel = KernelParams::new(log_sf, log_l)?;
        if !log_sigma.is_finite() {
            return Err(Error::NonFinite(format!("log_sigma={log_sigma}")));
        }
        Ok(ViewHyperparams { kernel, log_sigma })
    }

    /// From raw-domain `s_f`, `l`, `σ`.
    pub fn from_raw(sf: f64, l: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive (got {sigma})")));
        }
        let kernel = KernelParams::from_raw(sf, l)?;
        Ok(ViewHyperparams { kernel, log_sigma: sigma.ln() })
    }

    pub fn to_array(&self) -> [f64; N_VIEW_PARAMS] {
        [self.kernel.log_sf, self.kernel.log_l, self.log_sigma]
    }

    pub fn from_array(a: [f64; N_VIEW_PARAMS]) -> Result<Self> {
        Self::new(a[LOG_SF], a[LOG_L], a[LOG_SIGMA])
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// `σ²`
    pub fn noise_var(&self) -> f64 {
        (2.0 * self.log_sigma).exp()
    }
}

/// Convert a log-domain gradient to derivatives with respect to the raw
/// `(s_f, l, σ)` via `∂/∂θ = (∂/∂ln θ) / θ`.
pub fn log_to_raw_grad(hp: &ViewHyperparams, g: [f64; N_VIEW_PARAMS]) -> [f64; N_VIEW_PARAMS] {
    [
        g[LOG_SF] / hp.kernel.sf(),
        g[LOG_L] / hp.kernel.length_scale(),
        g[LOG_SIGMA] / hp.sigma(),
    ]
}

/// Posterior `N(μ, Σ)` over latent function values.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Absolute jitter added to the diagonal of `cov` to make it positive
    /// definite (0 when none was needed).
    pub jitter: f64,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(Error::dims(format!(
                "mean of length {} with covariance {:?}",
                mean.len(),
                cov.shape()
            )));
        }
        Ok(GaussianPosterior { mean, cov, jitter: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Point-wise predictive distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
}

/// Which predictive variance to report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VarianceKind {
    /// `var(f*)` of the latent function.
    #[default]
    Latent,
    /// `var(f*) + σ²`, the variance of a noisy observation.
    Observed,
}

/// The three terms of the negative log marginal likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NllTerms {
    /// `½ yᵀ C⁻¹ y`
    pub data_fit: f64,
    /// `½ log|C|`
    pub complexity: f64,
    /// `(N/2) log 2π`
    pub constant: f64,
}

impl NllTerms {
    pub fn total(&self) -> f64 {
        self.data_fit + self.complexity + self.constant
    }
}

fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("single-view GP needs at least one training point"));
    }
    if x.nrows() != y.len() {
        return Err(Error::dims(format!("{} inputs but {} targets", x.nrows(), y.len())));
    }
    Ok(())
}

/// A single-view GP conditioned on training data: `K`, the factor of
/// `K + σ²I` and `α = (K + σ²I)⁻¹ y`.
#[derive(Clone, Debug)]
pub struct FittedView<'a> {
    pub hp: ViewHyperparams,
    x: &'a DMatrix<f64>,
    k: DMatrix<f64>,
    factor: SpdFactor,
    alpha: DVector<f64>,
}

impl<'a> FittedView<'a> {
    pub fn new(hp: ViewHyperparams, x: &'a DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_xy(x, y)?;
        let k = kernel::gram(&hp.kernel, x);
        Self::from_gram(hp, x, y, k)
    }

    fn from_gram(hp: ViewHyperparams, x: &'a DMatrix<f64>, y: &DVector<f64>, k: DMatrix<f64>) -> Result<Self> {
        let mut c = k.clone();
        let s2 = hp.noise_var();
        for i in 0..c.nrows() {
            c[(i, i)] += s2;
        }
        let factor = SpdFactor::new(&c, "K + sigma^2 I")?;
        let alpha = factor.solve_vec(y);
        Ok(FittedView { hp, x, k, factor, alpha })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Jitter added to `K + σ²I` on top of `σ²`.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn nll_terms(&self, y: &DVector<f64>) -> NllTerms {
        NllTerms {
            data_fit: 0.5 * y.dot(&self.alpha),
            complexity: 0.5 * self.factor.log_det(),
            constant: 0.5 * y.len() as f64 * LN_2PI,
        }
    }

    pub fn posterior(&self) -> Result<GaussianPosterior> {
        let v = self.factor.solve_lower_mat(&self.k);
        let cov = symmetrize(&self.k - v.transpose() * v);
        let mean = &self.k * &self.alpha;
        let pd = SpdFactor::new(&cov, "posterior covariance")?;
        let jitter = pd.jitter();
        let mut cov = cov;
        for i in 0..cov.nrows() {
            cov[(i, i)] += jitter;
        }
        Ok(GaussianPosterior { mean, cov, jitter })
    }

    pub fn predict(&self, xstar: &DMatrix<f64>, kind: VarianceKind) -> Result<PredictiveGaussian> {
        let kstar = kernel::cross_gram(&self.hp.kernel, self.x, xstar)?;
        let mean = kstar.transpose() * &self.alpha;
        let v = self.factor.solve_lower_mat(&kstar);
        let prior = self.hp.kernel.sf2();
        let extra = match kind {
            VarianceKind::Latent => 0.0,
            VarianceKind::Observed => self.hp.noise_var(),
        };
        let var = DVector::from_iterator(
            kstar.ncols(),
            v.column_iter().map(|c| (prior - c.norm_squared()).max(0.0) + extra),
        );
        Ok(PredictiveGaussian { mean, var })
    }

    /// Predictive means only.
    pub fn predict_mean(&self, xstar: &DMatrix<f64>) -> Result<DVector<f64>> {
        let kstar = kernel::cross_gram(&self.hp.kernel, self.x, xstar)?;
        Ok(kstar.transpose() * &self.alpha)
    }
}

/// Negative log marginal likelihood.
pub fn nll(hp: &ViewHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    Ok(nll_terms(hp, x, y)?.total())
}

pub fn nll_terms(hp: &ViewHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<NllTerms> {
    Ok(FittedView::new(*hp, x, y)?.nll_terms(y))
}

pub fn posterior(hp: &ViewHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<GaussianPosterior> {
    FittedView::new(*hp, x, y)?.posterior()
}

/// Predictive mean and latent variance at `xstar`.
pub fn predict(
    hp: &ViewHyperparams,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xstar: &DMatrix<f64>,
) -> Result<PredictiveGaussian> {
    predict_with(hp, x, y, xstar, VarianceKind::Latent)
}

pub fn predict_with(
    hp: &ViewHyperparams,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xstar: &DMatrix<f64>,
    kind: VarianceKind,
) -> Result<PredictiveGaussian> {
    if xstar.ncols() != x.ncols() {
        return Err(Error::dims(format!(
            "training inputs have {} features, query inputs {}",
            x.ncols(),
            xstar.ncols()
        )));
    }
    FittedView::new(*hp, x, y)?.predict(xstar, kind)
}

/// Gradient of [`nll`] over `(ln s_f, ln l, ln σ)`.
pub fn nll_grad(hp: &ViewHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<[f64; N_VIEW_PARAMS]> {
    Ok(ViewJacobian::new(*hp, x, y)?.nll_grad())
}

/// Derivative of a posterior `(μ, Σ)` with respect to one hyperparameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDerivative {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Derivatives of the posterior mean and covariance for each of
/// `(ln s_f, ln l, ln σ)`, materialized as full vectors and matrices.
pub fn posterior_grad(
    hp: &ViewHyperparams,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<[PosteriorDerivative; N_VIEW_PARAMS]> {
    Ok(ViewJacobian::new(*hp, x, y)?.posterior_grad())
}

/// Everything needed to differentiate the marginal likelihood and the
/// posterior of one view with respect to its hyperparameters.
///
/// Besides materializing `∂μ/∂θ` and `∂Σ/∂θ`, it can contract an upstream
/// gradient `(g_μ, G_Σ)` directly. For the kernel hyperparameters
/// `∂C/∂θ = ∂K/∂θ`, and `I − K C⁻¹ = s C⁻¹` with `s` the effective noise
/// variance, so
///
/// * `∂μ/∂θ = s C⁻¹ (∂K/∂θ) α`
/// * `∂Σ/∂θ = s² C⁻¹ (∂K/∂θ) C⁻¹`
///
/// while for `ln σ` (where `∂C = 2σ² I`)
///
/// * `∂μ = −2σ² (I − s C⁻¹) α`
/// * `∂Σ = 2σ² (I − s C⁻¹)²`.
#[derive(Clone, Debug)]
pub struct ViewJacobian {
    pub hp: ViewHyperparams,
    grams: GramWithGrad,
    /// `C⁻¹` (explicit, symmetric)
    c_inv: DMatrix<f64>,
    alpha: DVector<f64>,
    /// `σ² + jitter`, the noise actually on the diagonal of `C`.
    s_eff: f64,
    nll: NllTerms,
    posterior: Option<GaussianPosterior>,
    jitter_events: usize,
}

impl ViewJacobian {
    /// Likelihood quantities only; see [`ViewJacobian::with_posterior`].
    pub fn new(hp: ViewHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        Self::build(hp, x, y, false)
    }

    /// Also computes the latent posterior, needed for coupling terms.
    pub fn with_posterior(hp: ViewHyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        Self::build(hp, x, y, true)
    }

    fn build(hp: ViewHyperparams, x: &DMatrix<f64>, y: &DVector<f64>, want_posterior: bool) -> Result<Self> {
        check_xy(x, y)?;
        let grams = kernel::gram_with_grad(&hp.kernel, x);
        let fitted = FittedView::from_gram(hp, x, y, grams.k.clone())?;
        let nll = fitted.nll_terms(y);
        let posterior = if want_posterior { Some(fitted.posterior()?) } else { None };
        let jitter_events = usize::from(fitted.jitter() > 0.0)
            + usize::from(posterior.as_ref().is_some_and(|p| p.jitter > 0.0));
        let c_inv = fitted.factor.inverse();
        Ok(ViewJacobian {
            hp,
            s_eff: hp.noise_var() + fitted.jitter(),
            alpha: fitted.alpha,
            c_inv,
            grams,
            nll,
            posterior,
            jitter_events,
        })
    }

    pub fn nll_terms(&self) -> NllTerms {
        self.nll
    }

    /// `None` unless built with [`ViewJacobian::with_posterior`].
    pub fn posterior(&self) -> Option<&GaussianPosterior> {
        self.posterior.as_ref()
    }

    /// Number of factorizations (of `C` and of `Σ`) that needed jitter.
    pub fn jitter_events(&self) -> usize {
        self.jitter_events
    }

    fn kernel_derivs(&self) -> [&DMatrix<f64>; 2] {
        [&self.grams.d_log_sf, &self.grams.d_log_l]
    }

    /// `½ tr((C⁻¹ − ααᵀ) ∂C/∂θ)` for each hyperparameter.
    pub fn nll_grad(&self) -> [f64; N_VIEW_PARAMS] {
        let w = &self.c_inv - &self.alpha * self.alpha.transpose();
        let [dsf, dl] = self.kernel_derivs();
        [
            0.5 * frobenius_dot(&w, dsf),
            0.5 * frobenius_dot(&w, dl),
            self.hp.noise_var() * w.trace(),
        ]
    }

    /// Direct evaluation of
    /// `∂μ = ∂K α − K C⁻¹ ∂C α` and
    /// `∂Σ = ∂K − ∂K C⁻¹ K − K C⁻¹ ∂K + K C⁻¹ ∂C C⁻¹ K`.
    pub fn posterior_grad(&self) -> [PosteriorDerivative; N_VIEW_PARAMS] {
        let n = self.alpha.len();
        let k = &self.grams.k;
        let a = &self.c_inv;
        let ka = k * a;
        let two_s2 = 2.0 * self.hp.noise_var();
        let one = |dk: &DMatrix<f64>, dc: &DMatrix<f64>| {
            let mean = dk * &self.alpha - &ka * (dc * &self.alpha);
            let dk_a_k = dk * ka.transpose();
            let cov = dk - &dk_a_k - dk_a_k.transpose() + &ka * dc * ka.transpose();
            PosteriorDerivative { mean, cov: symmetrize(cov) }
        };
        let [dsf, dl] = self.kernel_derivs();
        let dc_sigma = DMatrix::identity(n, n) * two_s2;
        [one(dsf, dsf), one(dl, dl), one(&DMatrix::zeros(n, n), &dc_sigma)]
    }

    /// `g_μᵀ ∂μ/∂θ + tr(G_Σ ∂Σ/∂θ)` for each hyperparameter, for a symmetric
    /// `G_Σ`, without forming `∂Σ/∂θ`.
    pub fn contract_posterior(&self, g_mean: &DVector<f64>, g_cov: &DMatrix<f64>) -> [f64; N_VIEW_PARAMS] {
        let a = &self.c_inv;
        let s = self.s_eff;
        let u = a * g_mean;
        let ga = g_cov * a;
        let h = a * &ga;
        // kernel coordinates: Σ_ij ∂K_ij (s u_i α_j + s² H_ij)
        let m = (&u * self.alpha.transpose()) * s + &h * (s * s);
        let [dsf, dl] = self.kernel_derivs();
        let two_s2 = 2.0 * self.hp.noise_var();
        let mean_part = -two_s2 * (g_mean.dot(&self.alpha) - s * u.dot(&self.alpha));
        let cov_part = two_s2 * (g_cov.trace() - 2.0 * s * ga.trace() + s * s * h.trace());
        [frobenius_dot(&m, dsf), frobenius_dot(&m, dl), mean_part + cov_part]
    }
}
