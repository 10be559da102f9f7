//! Effect-size analogs: projection of posterior function draws onto the
//! design matrix through its Moore–Penrose pseudoinverse, `β̃ = X† f`, and the
//! Gaussian summary `(μ, Σ, Λ)` of the resulting draws.

use faer::{Mat, MatRef};

use crate::error::{RateError, Result};
use crate::gp::PosteriorDraws;
use crate::linalg;
use crate::simdata::GenotypeMatrix;

/// Relative singular-value cutoff for pseudoinverses.
pub const DEFAULT_SV_TOL: f64 = 1e-10;
/// Ridge added to the sample covariance, relative to its mean diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// `X†` as a `p × n` operator together with the numerical rank of `X`.
#[derive(Clone, Debug)]
pub struct Pseudoinverse {
    pub operator: Mat<f64>,
    pub rank: usize,
}

/// SVD-based pseudoinverse; singular values `<= tol · σ_max` are dropped.
pub fn pseudoinverse(x: MatRef<'_, f64>, tol: f64) -> Result<Pseudoinverse> {
    if !linalg::is_finite(x) {
        return Err(RateError::NonFinite {
            what: "pseudoinverse input",
            detail: "matrix contains NaN or infinity".into(),
        });
    }
    if !(tol >= 0.0) {
        return Err(RateError::param("sv_tol", format!("must be non-negative, got {tol}")));
    }
    let (n, p) = (x.nrows(), x.ncols());
    let svd = linalg::thin_svd(x)?;
    let s_max = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = tol * s_max;
    let mut operator = Mat::<f64>::zeros(p, n);
    let mut rank = 0;
    for (k, &s) in svd.s.iter().enumerate() {
        if !(s > cutoff) || s == 0.0 {
            continue;
        }
        rank += 1;
        let inv = 1.0 / s;
        let u = svd.u.col(k);
        let v = svd.v.col(k);
        for i in 0..n {
            let ui = u[i] * inv;
            for j in 0..p {
                operator[(j, i)] += v[j] * ui;
            }
        }
    }
    Ok(Pseudoinverse { operator, rank })
}

/// Effect-size analog draws, `T × p`; row `t` is `X† f_t`.
pub fn project_draws(x: &GenotypeMatrix, draws: &PosteriorDraws, tol: f64) -> Result<Mat<f64>> {
    if draws.n_samples() != x.n_samples() {
        return Err(RateError::DimensionMismatch {
            context: "posterior draws vs genotype rows",
            expected: x.n_samples(),
            found: draws.n_samples(),
        });
    }
    let pinv = pseudoinverse(x.values(), tol)?;
    Ok(draws.left_multiply(pinv.operator.as_ref()).transpose().to_owned())
}

/// `(X† F)ᵀ` for an `n × T` matrix of function draws.
pub fn project_with(pinv: &Pseudoinverse, f_draws: MatRef<'_, f64>) -> Mat<f64> {
    let beta = pinv.operator.as_ref() * f_draws;
    beta.transpose().to_owned()
}

/// Gaussian summary of the effect-size analog posterior.
#[derive(Clone, Debug)]
pub struct EffectSizePosterior {
    pub mu: Vec<f64>,
    /// Sample covariance plus the ridge.
    pub sigma: Mat<f64>,
    /// Pseudoinverse of `sigma`.
    pub lambda: Mat<f64>,
    pub rank_sigma: usize,
    pub n_draws: usize,
    /// Absolute ridge added to the diagonal of `sigma`.
    pub ridge_applied: f64,
}

impl EffectSizePosterior {
    /// Builds a posterior from known moments; `Λ` is the pseudoinverse of `Σ`.
    pub fn from_moments(mu: Vec<f64>, sigma: Mat<f64>, tol: f64) -> Result<Self> {
        let p = mu.len();
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(RateError::DimensionMismatch {
                context: "posterior covariance",
                expected: p,
                found: sigma.nrows(),
            });
        }
        let mut sigma = sigma;
        linalg::symmetrize(&mut sigma);
        let (lambda, rank_sigma) = linalg::sym_pinv(sigma.as_ref(), tol)?;
        Ok(EffectSizePosterior {
            mu,
            sigma,
            lambda,
            rank_sigma,
            n_draws: 0,
            ridge_applied: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `‖ΣΛΣ − Σ‖_F / ‖Σ‖_F`.
    pub fn consistency_residual(&self) -> f64 {
        consistency_residual(self.sigma.as_ref(), self.lambda.as_ref())
    }
}

pub(crate) fn consistency_residual(sigma: MatRef<'_, f64>, lambda: MatRef<'_, f64>) -> f64 {
    let sls = sigma * lambda * sigma;
    let diff = sls - sigma;
    let denom = linalg::frobenius(sigma);
    if denom == 0.0 {
        return 0.0;
    }
    linalg::frobenius(diff.as_ref()) / denom
}

/// Mean, covariance (divisor `T − 1`) and precision of `T × p` draws.
///
/// The covariance is stabilized by `ridge · c · I` where `c` is the mean of
/// its diagonal (or 1 when that mean is zero).
pub fn summarize_posterior(beta_draws: MatRef<'_, f64>, ridge: f64) -> Result<EffectSizePosterior> {
    summarize_posterior_with(beta_draws, ridge, DEFAULT_SV_TOL)
}

pub fn summarize_posterior_with(
    beta_draws: MatRef<'_, f64>,
    ridge: f64,
    tol: f64,
) -> Result<EffectSizePosterior> {
    let (t, p) = (beta_draws.nrows(), beta_draws.ncols());
    if t < 2 {
        return Err(RateError::param("draws", format!("need at least 2 draws, got {t}")));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(RateError::param("ridge", format!("must be non-negative, got {ridge}")));
    }
    if t <= p && ridge == 0.0 {
        return Err(RateError::param(
            "ridge",
            format!("{t} draws for {p} variables leave the covariance singular; use a positive ridge"),
        ));
    }
    if !linalg::is_finite(beta_draws) {
        return Err(RateError::NonFinite {
            what: "effect-size draws",
            detail: "draws contain NaN or infinity".into(),
        });
    }
    let mu: Vec<f64> = (0..p)
        .map(|j| beta_draws.col(j).iter().sum::<f64>() / t as f64)
        .collect();
    let centered = Mat::from_fn(t, p, |i, j| beta_draws[(i, j)] - mu[j]);
    let mut sigma = centered.transpose() * centered.as_ref();
    let inv = 1.0 / (t as f64 - 1.0);
    for j in 0..p {
        for i in 0..p {
            sigma[(i, j)] *= inv;
        }
    }
    linalg::symmetrize(&mut sigma);
    let mean_diag = (0..p).map(|i| sigma[(i, i)]).sum::<f64>() / p as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let ridge_applied = ridge * scale;
    for i in 0..p {
        sigma[(i, i)] += ridge_applied;
    }
    let (lambda, rank_sigma) = linalg::sym_pinv(sigma.as_ref(), tol)?;
    Ok(EffectSizePosterior {
        mu,
        sigma,
        lambda,
        rank_sigma,
        n_draws: t,
        ridge_applied,
    })
}
