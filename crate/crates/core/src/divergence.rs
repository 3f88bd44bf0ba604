//! Closed-form KL divergence between multivariate Gaussians and its
//! derivatives with respect to both means and covariances.
//!
//! `KL(a‖b) = ½[log|Σ_b| − log|Σ_a| + tr(Σ_b⁻¹Σ_a) + (μ_b−μ_a)ᵀΣ_b⁻¹(μ_b−μ_a) − N]`

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp_view::GaussianPosterior;
use crate::linalg::{frobenius_dot, symmetrize, SpdFactor};

/// The individual terms of one KL divergence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlBreakdown {
    /// `½(log|Σ_b| − log|Σ_a|)`
    pub logdet_term: f64,
    /// `½ tr(Σ_b⁻¹Σ_a)`
    pub trace_term: f64,
    /// `½ (μ_b−μ_a)ᵀΣ_b⁻¹(μ_b−μ_a)`
    pub quad_term: f64,
    /// `−N/2`
    pub constant: f64,
    pub total: f64,
}

fn check_pair(a: &GaussianPosterior, b: &GaussianPosterior) -> Result<()> {
    let ok = |p: &GaussianPosterior| p.cov.is_square() && p.cov.nrows() == p.mean.len();
    if !ok(a) || !ok(b) || a.dim() != b.dim() {
        return Err(Error::dims(format!(
            "KL between posteriors of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `KL(p_a ‖ p_b)`. Both covariances must already be positive definite.
pub fn kl(p_a: &GaussianPosterior, p_b: &GaussianPosterior) -> Result<KlBreakdown> {
    check_pair(p_a, p_b)?;
    let fa = SpdFactor::exact(&p_a.cov, "KL covariance (first argument)")?;
    let fb = SpdFactor::exact(&p_b.cov, "KL covariance (second argument)")?;
    Ok(kl_factored(p_a, &fa, p_b, &fb))
}

fn kl_factored(p_a: &GaussianPosterior, fa: &SpdFactor, p_b: &GaussianPosterior, fb: &SpdFactor) -> KlBreakdown {
    let n = p_a.dim() as f64;
    let logdet_term = 0.5 * (fb.log_det() - fa.log_det());
    let trace_term = 0.5 * fb.solve_lower_mat(&fa.lower()).norm_squared();
    let d = &p_b.mean - &p_a.mean;
    let quad_term = 0.5 * fb.solve_lower_vec(&d).norm_squared();
    let constant = -0.5 * n;
    KlBreakdown {
        logdet_term,
        trace_term,
        quad_term,
        constant,
        total: logdet_term + trace_term + quad_term + constant,
    }
}

/// `KL(p1‖p2) + KL(p2‖p1)`.
pub fn symmetric_kl(p1: &GaussianPosterior, p2: &GaussianPosterior) -> Result<f64> {
    check_pair(p1, p2)?;
    let f1 = SpdFactor::exact(&p1.cov, "KL covariance")?;
    let f2 = SpdFactor::exact(&p2.cov, "KL covariance")?;
    Ok(kl_factored(p1, &f1, p2, &f2).total + kl_factored(p2, &f2, p1, &f1).total)
}

/// Gradient of `KL(p_a‖p_b)` with respect to each distribution parameter.
/// Matrix blocks are symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct KlGrad {
    pub mean_a: DVector<f64>,
    pub cov_a: DMatrix<f64>,
    pub mean_b: DVector<f64>,
    pub cov_b: DMatrix<f64>,
}

struct Prepared {
    inv: DMatrix<f64>,
}

impl Prepared {
    fn new(p: &GaussianPosterior, context: &'static str) -> Result<Self> {
        let inv = SpdFactor::exact(&p.cov, context)?.inverse();
        Ok(Prepared { inv })
    }
}

fn kl_grad_prepared(p_a: &GaussianPosterior, a: &Prepared, p_b: &GaussianPosterior, b: &Prepared) -> KlGrad {
    let d = &p_b.mean - &p_a.mean;
    let sb_d = &b.inv * &d;
    let cov_a = symmetrize((&b.inv - &a.inv) * 0.5);
    let cov_b = symmetrize(
        (&b.inv - &b.inv * &p_a.cov * &b.inv - &sb_d * sb_d.transpose()) * 0.5,
    );
    KlGrad { mean_a: -&sb_d, mean_b: sb_d, cov_a, cov_b }
}

/// ∂KL(p_a‖p_b) / ∂(μ_a, Σ_a, μ_b, Σ_b).
///
/// With `d = μ_b − μ_a`:
/// `∂/∂μ_a = −Σ_b⁻¹d`, `∂/∂μ_b = Σ_b⁻¹d`, `∂/∂Σ_a = ½(Σ_b⁻¹ − Σ_a⁻¹)`,
/// `∂/∂Σ_b = ½(Σ_b⁻¹ − Σ_b⁻¹Σ_aΣ_b⁻¹ − Σ_b⁻¹ddᵀΣ_b⁻¹)`.
pub fn kl_param_grad(p_a: &GaussianPosterior, p_b: &GaussianPosterior) -> Result<KlGrad> {
    check_pair(p_a, p_b)?;
    let a = Prepared::new(p_a, "KL covariance (first argument)")?;
    let b = Prepared::new(p_b, "KL covariance (second argument)")?;
    Ok(kl_grad_prepared(p_a, &a, p_b, &b))
}

/// Value and gradient of `KL(p1‖p2) + KL(p2‖p1)` with respect to
/// `(μ1, Σ1)` and `(μ2, Σ2)`.
#[derive(Clone, Debug)]
pub struct SymmetricKlGrad {
    pub value: f64,
    pub mean_1: DVector<f64>,
    pub cov_1: DMatrix<f64>,
    pub mean_2: DVector<f64>,
    pub cov_2: DMatrix<f64>,
}

pub fn symmetric_kl_with_grad(p1: &GaussianPosterior, p2: &GaussianPosterior) -> Result<SymmetricKlGrad> {
    check_pair(p1, p2)?;
    let a1 = Prepared::new(p1, "KL covariance")?;
    let a2 = Prepared::new(p2, "KL covariance")?;
    // log-determinants cancel in the symmetric sum
    let d = &p2.mean - &p1.mean;
    let value = 0.5
        * (frobenius_dot(&a2.inv, &p1.cov) + frobenius_dot(&a1.inv, &p2.cov)
            + d.dot(&(&a1.inv * &d))
            + d.dot(&(&a2.inv * &d)))
        - p1.dim() as f64;
    let g12 = kl_grad_prepared(p1, &a1, p2, &a2);
    let g21 = kl_grad_prepared(p2, &a2, p1, &a1);
    Ok(SymmetricKlGrad {
        value,
        mean_1: g12.mean_a + g21.mean_b,
        cov_1: g12.cov_a + g21.cov_b,
        mean_2: g12.mean_b + g21.mean_a,
        cov_2: g12.cov_b + g21.cov_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(m: f64, v: f64) -> GaussianPosterior {
        GaussianPosterior::new(DVector::from_vec(vec![m]), DMatrix::from_element(1, 1, v)).unwrap()
    }

    #[test]
    fn identical_distributions() {
        let p = GaussianPosterior::new(
            DVector::from_vec(vec![0.3, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let k = kl(&p, &p).unwrap();
        assert!(k.logdet_term.abs() < 1e-15);
        assert!((k.trace_term - 1.0).abs() < 1e-14);
        assert_eq!(k.quad_term, 0.0);
        assert_eq!(k.constant, -1.0);
        assert!(k.total.abs() < 1e-14);
        assert!(symmetric_kl(&p, &p).unwrap().abs() < 1e-14);
        let g = kl_param_grad(&p, &p).unwrap();
        assert!(g.mean_a.iter().all(|&v| v == 0.0));
        assert!(g.cov_a.amax() < 1e-14);
    }

    #[test]
    fn scalar_cases() {
        assert!((kl(&scalar(0.0, 1.0), &scalar(1.0, 1.0)).unwrap().total - 0.5).abs() < 1e-15);
        let expect = 0.5 * (2f64.ln() + 0.5 - 1.0);
        assert!((kl(&scalar(0.0, 1.0), &scalar(0.0, 2.0)).unwrap().total - expect).abs() < 1e-15);
        assert!((symmetric_kl(&scalar(0.0, 1.0), &scalar(0.0, 2.0)).unwrap() - 0.25).abs() < 1e-15);
        let g = kl_param_grad(&scalar(0.0, 1.0), &scalar(1.0, 1.0)).unwrap();
        assert_eq!(g.mean_a[0], -1.0);
        assert_eq!(g.mean_b[0], 1.0);
        // KL(N(0,1)‖N(m,v)) = ½(ln v + (1 + m²)/v − 1)
        // ∂/∂v = ½(1/v − (1 + m²)/v²), ∂/∂(first variance) = ½(1/v − 1)
        let g = kl_param_grad(&scalar(0.0, 1.0), &scalar(1.0, 2.0)).unwrap();
        assert!((g.cov_b[(0, 0)] - 0.5 * (0.5 - 2.0 / 4.0)).abs() < 1e-15);
        assert!((g.cov_a[(0, 0)] - 0.5 * (0.5 - 1.0)).abs() < 1e-15);
        let g = kl_param_grad(&scalar(0.0, 1.0), &scalar(0.0, 2.0)).unwrap();
        assert!((g.cov_b[(0, 0)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn breakdown_sums_to_total() {
        let a = scalar(0.2, 0.7);
        let b = scalar(-1.0, 3.0);
        let k = kl(&a, &b).unwrap();
        let sum = k.logdet_term + k.trace_term + k.quad_term + k.constant;
        assert!((sum - k.total).abs() <= 1e-12 * k.total.abs());
    }

    #[test]
    fn errors() {
        let bad = scalar(0.0, -1.0);
        assert!(matches!(kl(&scalar(0.0, 1.0), &bad), Err(Error::Factorization { .. })));
        let two = GaussianPosterior::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(kl(&scalar(0.0, 1.0), &two), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn symmetric_grad_is_sum_of_directional_grads() {
        let p1 = GaussianPosterior::new(
            DVector::from_vec(vec![0.3, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let p2 = GaussianPosterior::new(
            DVector::from_vec(vec![-0.1, 0.4]),
            DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 0.6]),
        )
        .unwrap();
        let s = symmetric_kl_with_grad(&p1, &p2).unwrap();
        let g12 = kl_param_grad(&p1, &p2).unwrap();
        let g21 = kl_param_grad(&p2, &p1).unwrap();
        assert!((s.value - symmetric_kl(&p1, &p2).unwrap()).abs() < 1e-15);
        assert!((&s.cov_1 - (&g12.cov_a + &g21.cov_b)).amax() < 1e-14);
        assert!((&s.mean_2 - (&g12.mean_b + &g21.mean_a)).amax() < 1e-14);
    }
}
