//! Isotropic squared-exponential covariance
//! `k(x, x') = s_f² exp(-‖x - x'‖² / (2 l²))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel hyperparameters in log domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// `ln s_f`
    pub log_sf: f64,
    /// `ln l`
    pub log_l: f64,
}

impl KernelParams {
    pub fn new(log_sf: f64, log_l: f64) -> Result<Self> {
        if !log_sf.is_finite() || !log_l.is_finite() {
            return Err(Error::NonFinite(format!(
                "kernel hyperparameters log_sf={log_sf}, log_l={log_l}"
            )));
        }
        Ok(KernelParams { log_sf, log_l })
    }

    /// Build from raw-domain `s_f` and `l`.
    pub fn from_raw(sf: f64, l: f64) -> Result<Self> {
        if !(sf > 0.0 && l > 0.0) {
            return Err(Error::invalid(format!("s_f and l must be positive (got {sf}, {l})")));
        }
        Self::new(sf.ln(), l.ln())
    }

    pub fn sf(&self) -> f64 {
        self.log_sf.exp()
    }

    /// Signal variance `s_f²`.
    pub fn sf2(&self) -> f64 {
        (2.0 * self.log_sf).exp()
    }

    pub fn length_scale(&self) -> f64 {
        self.log_l.exp()
    }
}

/// Pairwise squared Euclidean distances between rows of `a` and rows of `b`,
/// summed coordinate by coordinate so identical rows give exactly zero.
pub fn squared_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.ncols(), b.ncols());
    let (n, p, m) = (a.nrows(), b.nrows(), a.ncols());
    let mut d = DMatrix::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            let mut s = 0.0;
            for c in 0..m {
                let t = a[(i, c)] - b[(j, c)];
                s += t * t;
            }
            d[(i, j)] = s;
        }
    }
    d
}

fn symmetric_squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = x.shape();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut s = 0.0;
            for c in 0..m {
                let t = x[(i, c)] - x[(j, c)];
                s += t * t;
            }
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    d
}

fn apply(params: &KernelParams, sq: &DMatrix<f64>) -> DMatrix<f64> {
    let sf2 = params.sf2();
    let inv = 1.0 / (2.0 * params.length_scale().powi(2));
    // exp underflows to exactly 0 for very distant pairs; that is accepted.
    sq.map(|d| sf2 * (-d * inv).exp())
}

/// `N × N` Gram matrix; exactly symmetric with diagonal `s_f²`.
pub fn gram(params: &KernelParams, x: &DMatrix<f64>) -> DMatrix<f64> {
    apply(params, &symmetric_squared_distances(x))
}

/// `N × P` cross-covariance between rows of `x` and rows of `xstar`.
pub fn cross_gram(params: &KernelParams, x: &DMatrix<f64>, xstar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != xstar.ncols() {
        return Err(Error::dims(format!(
            "training inputs have {} features, query inputs {}",
            x.ncols(),
            xstar.ncols()
        )));
    }
    Ok(apply(params, &squared_distances(x, xstar)))
}

/// Gram matrix together with its derivatives with respect to the log-domain
/// hyperparameters.
#[derive(Clone, Debug)]
pub struct GramWithGrad {
    pub k: DMatrix<f64>,
    /// `∂K/∂ln s_f = 2K`
    pub d_log_sf: DMatrix<f64>,
    /// `∂K/∂ln l = K ∘ D / l²` where `D` holds squared distances
    pub d_log_l: DMatrix<f64>,
}

pub fn gram_with_grad(params: &KernelParams, x: &DMatrix<f64>) -> GramWithGrad {
    let sq = symmetric_squared_distances(x);
    let k = apply(params, &sq);
    let inv_l2 = (-2.0 * params.log_l).exp();
    let d_log_l = k.zip_map(&sq, |kij, d| kij * d * inv_l2);
    GramWithGrad { d_log_sf: &k * 2.0, k, d_log_l }
}

/// `(∂K/∂ln s_f, ∂K/∂ln l)`.
pub fn gram_grad(params: &KernelParams, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let g = gram_with_grad(params, x);
    (g.d_log_sf, g.d_log_l)
}
