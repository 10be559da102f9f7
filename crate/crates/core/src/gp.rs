//! Gibbs sampler for conjugate GP regression.
//!
//! ```text
//! y = f + ε,   f ~ N(0, K),   ε ~ N(0, τ² I),   τ² ~ Scale-Inv-χ²(a, b)
//! ```
//!
//! Each sweep draws
//!
//! ```text
//! f  | τ², y ~ N(m*, V*),   m* = K (K + τ² I)⁻¹ y,   V* = K − K (K + τ² I)⁻¹ K
//! τ² | f, y  ~ Scale-Inv-χ²(a + n, (a b + |y − f|²) / (a + n))
//! ```
//!
//! `Scale-Inv-χ²(ν, s)` is the law of `ν s / χ²_ν`; its mean is `ν s / (ν − 2)`.
//!
//! The default [`SamplerBackend::Spectral`] diagonalizes `K = U D Uᵀ` once.
//! In that basis `m*` and `V*` are diagonal, so a sweep costs `O(n)` and the
//! retained draws are kept as coordinates in that basis until `F` is
//! needed, so projections can be applied to `U` once instead. The
//! [`SamplerBackend::Direct`] backend refactorizes `K + τ² I` and `V*` on
//! every sweep; it is cubic per iteration and serves as the reference.

use std::sync::OnceLock;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{RateError, Result};
use crate::kernel::CovarianceMatrix;
use crate::linalg::{self, Cholesky};
use crate::simdata::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerBackend {
    Spectral,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Prior degrees of freedom.
    pub a: f64,
    /// Prior scale.
    pub b: f64,
    pub seed: u64,
    /// Holds τ² at this value and skips the τ² update.
    pub fixed_tau2: Option<f64>,
    /// Starting τ²; defaults to `b`.
    pub init_tau2: Option<f64>,
    pub backend: SamplerBackend,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            n_iter: 10_000,
            burn_in: 1_000,
            thin: 1,
            a: 5.0,
            b: 2.0 / 5.0,
            seed: 0,
            fixed_tau2: None,
            init_tau2: None,
            backend: SamplerBackend::Spectral,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(RateError::param(
                "burn_in",
                format!("burn-in {} must be below n_iter {}", self.burn_in, self.n_iter),
            ));
        }
        if self.thin == 0 {
            return Err(RateError::param("thin", "must be at least 1"));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(RateError::param("a", format!("must be positive, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(RateError::param("b", format!("must be positive, got {}", self.b)));
        }
        for (name, v) in [("fixed_tau2", self.fixed_tau2), ("init_tau2", self.init_tau2)] {
            if let Some(t) = v {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(RateError::param(name, format!("must be positive, got {t}")));
                }
            }
        }
        if self.retained() == 0 {
            return Err(RateError::param("thin", "no draws would be retained"));
        }
        Ok(())
    }

    /// Number of retained draws, `floor((n_iter − burn_in) / thin)`.
    pub fn retained(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

/// Retained posterior draws of the latent function and the noise variance.
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    /// Orthogonal basis `U` when draws are stored as `F = U · coords`.
    basis: Option<Mat<f64>>,
    /// `n × T`, one column per retained draw (in the basis, if any).
    coords: Mat<f64>,
    dense: OnceLock<Mat<f64>>,
    tau2_draws: Vec<f64>,
    /// Zero-based sweep index of each retained draw.
    iterations: Vec<usize>,
    config: GpConfig,
}

impl PosteriorDraws {
    /// Assembles draws from parts; columns of `f_draws` are draws.
    pub fn from_parts(f_draws: Mat<f64>, tau2_draws: Vec<f64>, config: GpConfig) -> Result<Self> {
        if f_draws.ncols() != tau2_draws.len() {
            return Err(RateError::DimensionMismatch {
                context: "posterior draws",
                expected: f_draws.ncols(),
                found: tau2_draws.len(),
            });
        }
        if tau2_draws.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(RateError::NonFinite {
                what: "tau2 draws",
                detail: "draws must be positive and finite".into(),
            });
        }
        if !linalg::is_finite(f_draws.as_ref()) {
            return Err(RateError::NonFinite {
                what: "f draws",
                detail: "draws contain NaN or infinity".into(),
            });
        }
        let iterations = (0..tau2_draws.len()).collect();
        Ok(PosteriorDraws {
            basis: None,
            coords: f_draws,
            dense: OnceLock::new(),
            tau2_draws,
            iterations,
            config,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.tau2_draws.len()
    }

    pub fn n_samples(&self) -> usize {
        self.coords.nrows()
    }

    pub fn f_draw(&self, t: usize) -> &[f64] {
        self.dense().col_as_slice(t)
    }

    /// `n × T` matrix of draws, materialized on first use.
    pub fn f_matrix(&self) -> MatRef<'_, f64> {
        self.dense().as_ref()
    }

    fn dense(&self) -> &Mat<f64> {
        match &self.basis {
            None => &self.coords,
            Some(u) => self.dense.get_or_init(|| u.as_ref() * self.coords.as_ref()),
        }
    }

    /// `A F` for a `k × n` matrix `A`, without forming `F` when it is stored
    /// in factored form.
    pub fn left_multiply(&self, a: MatRef<'_, f64>) -> Mat<f64> {
        match (&self.basis, self.dense.get()) {
            (Some(u), None) => {
                let au = a * u.as_ref();
                au.as_ref() * self.coords.as_ref()
            }
            _ => a * self.f_matrix(),
        }
    }

    pub fn tau2_draws(&self) -> &[f64] {
        &self.tau2_draws
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    pub fn config(&self) -> &GpConfig {
        &self.config
    }
}

/// Posterior parameters `(a*, b*)` of τ² given `f`.
pub fn tau2_posterior_params(y: &[f64], f: &[f64], a: f64, b: f64) -> (f64, f64) {
    let rss: f64 = y.iter().zip(f).map(|(u, v)| (u - v) * (u - v)).sum();
    posterior_params_from_rss(rss, y.len(), a, b)
}

fn posterior_params_from_rss(rss: f64, n: usize, a: f64, b: f64) -> (f64, f64) {
    let a_star = a + n as f64;
    (a_star, (a * b + rss) / a_star)
}

/// Draws from `Scale-Inv-χ²(dof, scale)` as `dof · scale / χ²_dof`.
pub fn sample_scaled_inv_chi2(rng: &mut impl Rng, dof: f64, scale: f64) -> f64 {
    let chi2 = ChiSquared::new(dof).expect("positive degrees of freedom");
    dof * scale / chi2.sample(rng)
}

/// Conditional mean `m*` and covariance `V*` of `f` given τ², computed with
/// one Cholesky factorization of `K + τ² I`.
pub fn conditional_moments(y: &[f64], k: MatRef<'_, f64>, tau2: f64) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = k.nrows();
    let mut a = k.to_owned();
    for i in 0..n {
        a[(i, i)] += tau2;
    }
    let chol = Cholesky::new(a.as_ref()).ok_or(RateError::Factorization {
        what: "K + tau2 I",
        tau2,
        condition: f64::INFINITY,
    })?;
    let alpha = chol.solve_vec(y);
    let mean = linalg::mat_vec(k, &alpha);
    let a_inv_k = chol.solve_mat(k);
    let mut cov = k.to_owned() - k * a_inv_k.as_ref();
    linalg::symmetrize(&mut cov);
    Ok((mean, cov))
}

fn check_inputs(y: &[f64], k: &CovarianceMatrix) -> Result<()> {
    if y.len() != k.dim() {
        return Err(RateError::DimensionMismatch {
            context: "phenotype length vs kernel",
            expected: k.dim(),
            found: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(RateError::NonFinite {
            what: "phenotype",
            detail: format!("entry {i}"),
        });
    }
    Ok(())
}

/// Runs the two-block Gibbs sampler and returns the retained draws.
pub fn gibbs_fit(y: &[f64], k: &CovarianceMatrix, cfg: &GpConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    check_inputs(y, k)?;
    let mut rng = rng_from_seed(cfg.seed);
    let (basis, coords, tau2_draws, iterations) = match cfg.backend {
        SamplerBackend::Spectral => spectral_chain(y, k.values(), cfg, &mut rng)?,
        SamplerBackend::Direct => direct_chain(y, k.values(), cfg, &mut rng)?,
    };
    let finite = linalg::is_finite(coords.as_ref()) && basis.as_ref().is_none_or(|u| linalg::is_finite(u.as_ref()));
    if !finite {
        return Err(RateError::NonFinite {
            what: "f draws",
            detail: "sampler produced NaN or infinity".into(),
        });
    }
    Ok(PosteriorDraws {
        basis,
        coords,
        dense: OnceLock::new(),
        tau2_draws,
        iterations,
        config: *cfg,
    })
}

type Chain = (Option<Mat<f64>>, Mat<f64>, Vec<f64>, Vec<usize>);

fn spectral_chain(y: &[f64], k: MatRef<'_, f64>, cfg: &GpConfig, rng: &mut ChaCha8Rng) -> Result<Chain> {
    let n = y.len();
    let evd = linalg::sym_eigen(k)?;
    // Tiny negative eigenvalues are rounding noise on a PSD kernel.
    let d: Vec<f64> = evd.values.iter().map(|&v| v.max(0.0)).collect();
    let u = evd.vectors;
    let y_rot = linalg::mat_vec(u.transpose(), y);

    let kept = cfg.retained();
    let mut coords = Mat::<f64>::zeros(n, kept);
    let mut tau2_draws = Vec::with_capacity(kept);
    let mut iterations = Vec::with_capacity(kept);
    let mut tau2 = cfg.fixed_tau2.or(cfg.init_tau2).unwrap_or(cfg.b);
    let mut w = vec![0.0; n];

    for it in 0..cfg.n_iter {
        let mut rss = 0.0;
        for i in 0..n {
            let shrink = d[i] / (d[i] + tau2);
            let z: f64 = rng.sample(StandardNormal);
            w[i] = shrink * y_rot[i] + (shrink * tau2).sqrt() * z;
            let r = y_rot[i] - w[i];
            rss += r * r;
        }
        if cfg.fixed_tau2.is_none() {
            let (a_star, b_star) = posterior_params_from_rss(rss, n, cfg.a, cfg.b);
            tau2 = sample_scaled_inv_chi2(rng, a_star, b_star);
        }
        if cfg.keeps(it) {
            let col = coords.col_as_slice_mut(tau2_draws.len());
            col.copy_from_slice(&w);
            tau2_draws.push(tau2);
            iterations.push(it);
        }
    }
    Ok((Some(u), coords, tau2_draws, iterations))
}

/// Jitter schedule, relative to the mean diagonal of `V*`.
const VSTAR_JITTER: [f64; 5] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7];

fn factor_vstar(mut v: Mat<f64>, tau2: f64) -> Result<Cholesky> {
    let n = v.nrows();
    let mean_diag = (0..n).map(|i| v[(i, i)]).sum::<f64>() / n as f64;
    let base = mean_diag.abs().max(f64::MIN_POSITIVE);
    let mut added = 0.0;
    for rel in VSTAR_JITTER {
        let target = rel * base;
        for i in 0..n {
            v[(i, i)] += target - added;
        }
        added = target;
        if let Some(c) = Cholesky::new(v.as_ref()) {
            return Ok(c);
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| v[(i, i)]).collect();
    let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    Err(RateError::Factorization {
        what: "posterior covariance V*",
        tau2,
        condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
    })
}

fn direct_chain(y: &[f64], k: MatRef<'_, f64>, cfg: &GpConfig, rng: &mut ChaCha8Rng) -> Result<Chain> {
    let n = y.len();
    let kept = cfg.retained();
    let mut f_draws = Mat::<f64>::zeros(n, kept);
    let mut tau2_draws = Vec::with_capacity(kept);
    let mut iterations = Vec::with_capacity(kept);
    let mut tau2 = cfg.fixed_tau2.or(cfg.init_tau2).unwrap_or(cfg.b);

    for it in 0..cfg.n_iter {
        let (mean, cov) = conditional_moments(y, k, tau2)?;
        let chol = factor_vstar(cov, tau2)?;
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let lz = linalg::mat_vec(chol.l(), &z);
        let f: Vec<f64> = mean.iter().zip(&lz).map(|(m, e)| m + e).collect();
        if cfg.fixed_tau2.is_none() {
            let (a_star, b_star) = tau2_posterior_params(y, &f, cfg.a, cfg.b);
            tau2 = sample_scaled_inv_chi2(rng, a_star, b_star);
        }
        if cfg.keeps(it) {
            f_draws.col_as_slice_mut(tau2_draws.len()).copy_from_slice(&f);
            tau2_draws.push(tau2);
            iterations.push(it);
        }
    }
    Ok((None, f_draws, tau2_draws, iterations))
}

/// Arithmetic mean of the retained `f` draws.
pub fn posterior_mean_f(draws: &PosteriorDraws) -> Vec<f64> {
    let n = draws.n_samples();
    let t = draws.n_draws();
    let mut mean = vec![0.0; n];
    for c in 0..t {
        for (m, v) in mean.iter_mut().zip(draws.f_draw(c)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_covariance, KernelSpec};
    use crate::simdata::simulate_genotypes;

    fn small_problem(n: usize, seed: u64) -> (Vec<f64>, CovarianceMatrix) {
        let x = simulate_genotypes(n, 4, (0.1, 0.5), seed).unwrap();
        let k = build_covariance(&x, KernelSpec::default()).unwrap();
        let y: Vec<f64> = (0..n).map(|i| x.values()[(i, 0)] + 0.3 * ((i as f64) * 0.7).sin()).collect();
        (y, k)
    }

    #[test]
    fn retained_count_rounds_down() {
        let cfg = GpConfig { n_iter: 10, burn_in: 3, thin: 2, ..Default::default() };
        assert_eq!(cfg.retained(), 3);
        let kept: Vec<usize> = (0..10).filter(|&i| cfg.keeps(i)).collect();
        assert_eq!(kept, vec![4, 6, 8]);
        assert_eq!(GpConfig::default().retained(), 9000);
    }

    #[test]
    fn config_validation() {
        assert!(GpConfig { burn_in: 10, n_iter: 10, ..Default::default() }.validate().is_err());
        assert!(GpConfig { thin: 0, ..Default::default() }.validate().is_err());
        assert!(GpConfig { a: 0.0, ..Default::default() }.validate().is_err());
        assert!(GpConfig { b: -1.0, ..Default::default() }.validate().is_err());
        assert!(GpConfig::default().validate().is_ok());
    }

    #[test]
    fn tau2_params_with_perfect_fit() {
        let y = [1.0, -2.0, 0.5];
        let (a_star, b_star) = tau2_posterior_params(&y, &y, 5.0, 0.4);
        assert_eq!(a_star, 8.0);
        assert!((b_star - 5.0 * 0.4 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn scaled_inv_chi2_mean() {
        let mut rng = rng_from_seed(1);
        let (dof, scale) = (10.0, 0.5);
        let m = (0..200_000).map(|_| sample_scaled_inv_chi2(&mut rng, dof, scale)).sum::<f64>() / 200_000.0;
        // mean = dof * scale / (dof - 2)
        assert!((m - 0.625).abs() < 0.01, "mean {m}");
    }

    #[test]
    fn zero_phenotype_gives_zero_mean() {
        let (_, k) = small_problem(12, 2);
        let y = vec![0.0; 12];
        let (m, _) = conditional_moments(&y, k.values(), 0.7).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
        let cfg = GpConfig { n_iter: 4000, burn_in: 500, seed: 3, ..Default::default() };
        let draws = gibbs_fit(&y, &k, &cfg).unwrap();
        let mean = posterior_mean_f(&draws);
        for (i, v) in mean.iter().enumerate() {
            let sd = {
                let col: Vec<f64> = (0..draws.n_draws()).map(|t| draws.f_draw(t)[i]).collect();
                crate::simdata::sample_variance(&col).sqrt()
            };
            assert!(v.abs() < 4.0 * sd / (draws.n_draws() as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn posterior_mean_of_two_draws() {
        let f = Mat::from_fn(2, 2, |i, j| [[1.0, 3.0], [2.0, 4.0]][i][j]);
        let d = PosteriorDraws::from_parts(f, vec![1.0, 1.0], GpConfig::default()).unwrap();
        assert_eq!(posterior_mean_f(&d), vec![2.0, 3.0]);
        let single = PosteriorDraws::from_parts(Mat::from_fn(2, 1, |i, _| i as f64 + 0.5), vec![0.3], GpConfig::default()).unwrap();
        assert_eq!(posterior_mean_f(&single), vec![0.5, 1.5]);
    }

    #[test]
    fn same_seed_same_chain() {
        let (y, k) = small_problem(10, 4);
        let cfg = GpConfig { n_iter: 300, burn_in: 50, thin: 5, seed: 9, ..Default::default() };
        let a = gibbs_fit(&y, &k, &cfg).unwrap();
        let b = gibbs_fit(&y, &k, &cfg).unwrap();
        assert_eq!(a.f_matrix(), b.f_matrix());
        assert_eq!(a.tau2_draws(), b.tau2_draws());
        assert_eq!(a.n_draws(), 50);
        assert!(a.tau2_draws().iter().all(|&t| t > 0.0));
    }

    #[test]
    fn direct_backend_runs_and_is_positive() {
        let (y, k) = small_problem(8, 5);
        let cfg = GpConfig { n_iter: 200, burn_in: 20, seed: 2, backend: SamplerBackend::Direct, ..Default::default() };
        let d = gibbs_fit(&y, &k, &cfg).unwrap();
        assert_eq!(d.n_draws(), 180);
        assert!(d.tau2_draws().iter().all(|&t| t > 0.0));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let (_, k) = small_problem(8, 5);
        assert!(gibbs_fit(&[0.0; 7], &k, &GpConfig::default()).is_err());
        let mut y = vec![0.0; 8];
        y[3] = f64::NAN;
        assert!(gibbs_fit(&y, &k, &GpConfig::default()).is_err());
    }
}
