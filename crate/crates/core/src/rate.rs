//! KLD centrality, RATE normalization, uniformity diagnostics and the
//! nullification cascade.
//!
//! For variable `j` the centrality is the KL divergence from the marginal
//! posterior of the remaining effects to their conditional posterior given
//! `β̃_j = 0`:
//!
//! `KLD_j = ½[−log|Σ₋ⱼΛ₋ⱼ| + tr(Σ₋ⱼΛ₋ⱼ) + 1 − p + α_j μ_j²]`,
//! `α_j = λ₋ⱼᵀ Λ₋ⱼ⁻¹ λ₋ⱼ`.

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::error::{RateError, Result};
use crate::linalg::{self, Cholesky};
use crate::projection::{self, EffectSizePosterior, DEFAULT_SV_TOL};

/// Cascade stops once Δ falls below this value.
pub const DEFAULT_STOP_DELTA: f64 = 0.01;
/// Reports with more than this fraction of clamped KLDs carry a warning.
pub const CLAMP_WARN_FRACTION: f64 = 0.05;
/// Eigenvalues below this fraction of the largest are dropped when a
/// partitioned block is numerically singular.
pub const SINGULAR_REL_TOL: f64 = 1e-12;
/// KLDs within this distance of zero are roundoff (KLD is dimensionless).
const ROUNDOFF_KLD: f64 = 1e-12;

/// Gaussian posterior over the variables still in play.
pub trait GaussianSummary: Sync {
    fn mu(&self) -> &[f64];
    fn sigma(&self) -> MatRef<'_, f64>;
    fn lambda(&self) -> MatRef<'_, f64>;
    /// Original index of the variable at position `k`.
    fn variable(&self, k: usize) -> usize;
    /// Original indices conditioned to zero so far, in order.
    fn nullified(&self) -> &[usize];

    fn dim(&self) -> usize {
        self.mu().len()
    }
}

impl GaussianSummary for EffectSizePosterior {
    fn mu(&self) -> &[f64] {
        &self.mu
    }
    fn sigma(&self) -> MatRef<'_, f64> {
        self.sigma.as_ref()
    }
    fn lambda(&self) -> MatRef<'_, f64> {
        self.lambda.as_ref()
    }
    fn variable(&self, k: usize) -> usize {
        k
    }
    fn nullified(&self) -> &[usize] {
        &[]
    }
}

/// Posterior of the remaining effects after conditioning some on zero.
#[derive(Clone, Debug)]
pub struct ConditionedPosterior {
    pub mu: Vec<f64>,
    pub sigma: Mat<f64>,
    pub lambda: Mat<f64>,
    pub rank_sigma: usize,
    /// Original indices of the variables in play.
    pub variables: Vec<usize>,
    /// Original indices conditioned to zero, in order.
    pub provenance: Vec<usize>,
}

impl ConditionedPosterior {
    /// Unconditioned view of a full posterior.
    pub fn root(post: &EffectSizePosterior) -> Self {
        ConditionedPosterior {
            mu: post.mu.clone(),
            sigma: post.sigma.clone(),
            lambda: post.lambda.clone(),
            rank_sigma: post.rank_sigma,
            variables: (0..post.dim()).collect(),
            provenance: Vec::new(),
        }
    }

    /// Position of original variable `id`, if still in play.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.variables.iter().position(|&v| v == id)
    }

    pub fn consistency_residual(&self) -> f64 {
        projection::consistency_residual(self.sigma.as_ref(), self.lambda.as_ref())
    }
}

impl GaussianSummary for ConditionedPosterior {
    fn mu(&self) -> &[f64] {
        &self.mu
    }
    fn sigma(&self) -> MatRef<'_, f64> {
        self.sigma.as_ref()
    }
    fn lambda(&self) -> MatRef<'_, f64> {
        self.lambda.as_ref()
    }
    fn variable(&self, k: usize) -> usize {
        self.variables[k]
    }
    fn nullified(&self) -> &[usize] {
        &self.provenance
    }
}

fn check_position<P: GaussianSummary + ?Sized>(post: &P, j: usize) -> Result<()> {
    let p = post.dim();
    if p < 2 {
        return Err(RateError::param("p_effective", format!("need at least 2 variables in play, got {p}")));
    }
    if j >= p {
        return Err(RateError::param("variable", format!("position {j} out of range for {p} variables")));
    }
    Ok(())
}

/// Solves `A x = b` for symmetric `A`, falling back to the pseudoinverse
/// when `A` is not numerically positive definite.
fn sym_solve(a: MatRef<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    match Cholesky::new(a) {
        Some(c) => Ok(c.solve_vec(b)),
        None => {
            let (pinv, _) = linalg::sym_pinv(a, SINGULAR_REL_TOL)?;
            Ok(linalg::mat_vec(pinv.as_ref(), b))
        }
    }
}

/// `Λ₋ⱼ⁻¹ λ₋ⱼ`, i.e. `−θ_j`.
fn regression_coefficients<P: GaussianSummary + ?Sized>(post: &P, j: usize) -> Result<Vec<f64>> {
    let lam = post.lambda();
    let sub = linalg::drop_index(lam, j);
    let col = linalg::column_without(lam, j);
    sym_solve(sub.as_ref(), &col)
}

/// Individual terms of the closed-form KLD for one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KldTerms {
    /// `log|Σ₋ⱼΛ₋ⱼ|` on the retained subspace.
    pub log_det: f64,
    /// `tr(Σ₋ⱼΛ₋ⱼ)` on the retained subspace.
    pub trace: f64,
    /// Dimension of the retained subspace (`p − 1` unless singular).
    pub dim: usize,
    pub alpha: f64,
    pub mu_j: f64,
    /// True when a partitioned block needed the eigenvalue fallback.
    pub singular: bool,
}

impl KldTerms {
    pub fn kld(&self) -> f64 {
        0.5 * (-self.log_det + self.trace - self.dim as f64 + self.alpha * self.mu_j * self.mu_j)
    }
}

/// `log|S L|` and `tr(S L)` via the eigenvalues of `S^{1/2} L S^{1/2}`,
/// keeping only those above `SINGULAR_REL_TOL` of the largest.
fn spectral_log_det_trace(s: MatRef<'_, f64>, l: MatRef<'_, f64>) -> Result<(f64, f64, usize)> {
    let es = linalg::sym_eigen(s)?;
    let m = s.nrows();
    let smax = es.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let keep: Vec<usize> = (0..m).filter(|&k| es.values[k] > SINGULAR_REL_TOL * smax).collect();
    let r = keep.len();
    // Columns of `half` span the retained subspace scaled by sqrt(eigenvalue).
    let half = Mat::from_fn(m, r, |i, c| {
        let k = keep[c];
        es.vectors[(i, k)] * es.values[k].sqrt()
    });
    let mut a = half.transpose() * l * half.as_ref();
    linalg::symmetrize(&mut a);
    let ea = linalg::sym_eigen(a.as_ref())?;
    let amax = ea.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut log_det = 0.0;
    let mut trace = 0.0;
    let mut dim = 0;
    for &v in &ea.values {
        if v > SINGULAR_REL_TOL * amax {
            log_det += v.ln();
            trace += v;
            dim += 1;
        }
    }
    Ok((log_det, trace, dim))
}

/// Closed-form KLD terms for the variable at position `j`.
pub fn kld_terms<P: GaussianSummary + ?Sized>(post: &P, j: usize) -> Result<KldTerms> {
    check_position(post, j)?;
    let sigma = post.sigma();
    let lam = post.lambda();
    let s_sub = linalg::drop_index(sigma, j);
    let l_sub = linalg::drop_index(lam, j);
    let col = linalg::column_without(lam, j);
    let m = s_sub.nrows();

    let (log_det, trace, dim, alpha, singular) =
        match (Cholesky::new(s_sub.as_ref()), Cholesky::new(l_sub.as_ref())) {
            (Some(cs), Some(cl)) => {
                let mut trace = 0.0;
                for c in 0..m {
                    for r in 0..m {
                        trace += s_sub[(r, c)] * l_sub[(r, c)];
                    }
                }
                let sol = cl.solve_vec(&col);
                let alpha = linalg::dot(&col, &sol);
                (cs.log_det() + cl.log_det(), trace, m, alpha, false)
            }
            _ => {
                let (log_det, trace, dim) = spectral_log_det_trace(s_sub.as_ref(), l_sub.as_ref())?;
                let sol = sym_solve(l_sub.as_ref(), &col)?;
                let alpha = linalg::dot(&col, &sol);
                (log_det, trace, dim, alpha, true)
            }
        };
    let terms = KldTerms {
        log_det,
        trace,
        dim,
        alpha,
        mu_j: post.mu()[j],
        singular,
    };
    let kld = terms.kld();
    if !kld.is_finite() {
        return Err(RateError::NonFinite {
            what: "KLD",
            detail: format!(
                "variable {}: log_det={log_det}, trace={trace}, alpha={alpha}, mu_j={}, singular_fallback={singular}",
                post.variable(j),
                terms.mu_j
            ),
        });
    }
    Ok(terms)
}

/// Closed-form KLD for the variable at position `j`, before clamping.
pub fn kld_at_zero<P: GaussianSummary + ?Sized>(post: &P, j: usize) -> Result<f64> {
    Ok(kld_terms(post, j)?.kld())
}

/// `α_j = λ₋ⱼᵀ Λ₋ⱼ⁻¹ λ₋ⱼ` via one symmetric solve.
pub fn alpha<P: GaussianSummary + ?Sized>(post: &P, j: usize) -> Result<f64> {
    check_position(post, j)?;
    let col = linalg::column_without(post.lambda(), j);
    let sol = regression_coefficients(post, j)?;
    Ok(linalg::dot(&col, &sol))
}

/// `α_j` as `θ_jᵀ Λ₋ⱼ θ_j` and as `Σ_kℓ c_kℓ λ_jk λ_jℓ` with `c = Λ₋ⱼ⁻¹`.
///
/// Both forms are computed independently of [`alpha`]; the second builds
/// the explicit inverse and exists for verification.
pub fn alpha_alternatives<P: GaussianSummary + ?Sized>(post: &P, j: usize) -> Result<(f64, f64)> {
    check_position(post, j)?;
    let lam = post.lambda();
    let l_sub = linalg::drop_index(lam, j);
    let col = linalg::column_without(lam, j);
    let m = col.len();
    let theta: Vec<f64> = regression_coefficients(post, j)?.iter().map(|v| -v).collect();
    let lt = linalg::mat_vec(l_sub.as_ref(), &theta);
    let quad = linalg::dot(&theta, &lt);

    let (c, _) = linalg::sym_pinv(l_sub.as_ref(), SINGULAR_REL_TOL)?;
    let mut double_sum = 0.0;
    for k in 0..m {
        for l in 0..m {
            double_sum += c[(k, l)] * col[k] * col[l];
        }
    }
    Ok((quad, double_sum))
}

/// Per-variable centralities and the uniformity diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralityReport {
    /// Original indices of the variables in play.
    pub variables: Vec<usize>,
    /// Clamped KLDs, aligned with `variables`.
    pub kld: Vec<f64>,
    pub rate: Vec<f64>,
    /// `log(p_effective) − H`.
    pub delta: f64,
    /// `100 / (1 + Δ)`.
    pub ess: f64,
    pub significant: Vec<bool>,
    pub nullified: Vec<usize>,
    pub p_effective: usize,
    /// KLDs clamped from below zero (roundoff excluded).
    pub clamped: usize,
    pub quality_warning: bool,
    /// All KLDs were zero; rates are uniform.
    pub no_signal: bool,
    /// Variables whose KLD used the singular-block fallback.
    pub singular_fallbacks: usize,
}

impl CentralityReport {
    /// Position of the largest RATE; ties go to the lowest position.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &r) in self.rate.iter().enumerate() {
            if r > self.rate[best] {
                best = k;
            }
        }
        best
    }

    /// RATE of original variable `id`, zero if it is no longer in play.
    pub fn rate_of(&self, id: usize) -> f64 {
        self.variables
            .iter()
            .position(|&v| v == id)
            .map_or(0.0, |k| self.rate[k])
    }

    /// Original variable ids ordered by decreasing RATE (stable on ties).
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.rate.len()).collect();
        order.sort_by(|&a, &b| self.rate[b].total_cmp(&self.rate[a]));
        order.into_iter().map(|k| self.variables[k]).collect()
    }

    pub fn significant_ids(&self) -> Vec<usize> {
        self.variables
            .iter()
            .zip(&self.significant)
            .filter(|(_, &s)| s)
            .map(|(&v, _)| v)
            .collect()
    }
}

/// `100 / (1 + Δ)`.
pub fn ess_from_delta(delta: f64) -> f64 {
    100.0 / (1.0 + delta)
}

/// Shannon entropy with `0 · log 0 = 0`.
pub fn entropy(rate: &[f64]) -> f64 {
    -rate
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| r * r.ln())
        .sum::<f64>()
}

/// Normalizes KLDs into a report; negative inputs are clamped to zero.
pub fn report_from_klds(variables: Vec<usize>, raw_kld: &[f64], nullified: Vec<usize>) -> CentralityReport {
    let p = raw_kld.len();
    let clamped = raw_kld.iter().filter(|&&k| k < -ROUNDOFF_KLD).count();
    let kld: Vec<f64> = raw_kld.iter().map(|&k| k.max(0.0)).collect();
    let total: f64 = kld.iter().sum();
    let quality_warning = clamped as f64 > CLAMP_WARN_FRACTION * p as f64;
    if clamped > 0 {
        log::warn!("{clamped} of {p} KLDs were negative and clamped to zero");
    }
    let uniform = 1.0 / p as f64;
    let max_kld = kld.iter().copied().fold(0.0_f64, f64::max);
    let (rate, no_signal) = if max_kld > ROUNDOFF_KLD {
        (kld.iter().map(|k| k / total).collect::<Vec<_>>(), false)
    } else {
        log::warn!("no centrality signal: every KLD is zero");
        (vec![uniform; p], true)
    };
    // Equal KLDs are uniform by definition; the entropy route would leave roundoff.
    let all_equal = kld.iter().all(|&k| k == kld[0]);
    let delta = if no_signal || all_equal {
        0.0
    } else {
        ((p as f64).ln() - entropy(&rate)).max(0.0)
    };
    // Relative slack so exactly uniform rates never pass through roundoff.
    let cut = uniform * (1.0 + 1e-12);
    let significant = rate.iter().map(|&r| !no_signal && r > cut).collect();
    CentralityReport {
        variables,
        kld,
        rate,
        delta,
        ess: ess_from_delta(delta),
        significant,
        nullified,
        p_effective: p,
        clamped,
        quality_warning,
        no_signal,
        singular_fallbacks: 0,
    }
}

/// KLD for every variable in play (in parallel) and the RATE summary.
pub fn compute_rates<P: GaussianSummary + ?Sized>(post: &P) -> Result<CentralityReport> {
    let p = post.dim();
    if p < 2 {
        return Err(RateError::param("p_effective", format!("need at least 2 variables in play, got {p}")));
    }
    let terms: Vec<KldTerms> = (0..p)
        .into_par_iter()
        .map(|j| kld_terms(post, j))
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = terms.iter().map(KldTerms::kld).collect();
    let variables = (0..p).map(|k| post.variable(k)).collect();
    let mut report = report_from_klds(variables, &raw, post.nullified().to_vec());
    report.singular_fallbacks = terms.iter().filter(|t| t.singular).count();
    Ok(report)
}

/// Conditions the posterior on `β̃_j = 0` for the variable at position `j`.
pub fn nullify_and_condition<P: GaussianSummary + ?Sized>(post: &P, j: usize) -> Result<ConditionedPosterior> {
    check_position(post, j)?;
    let p = post.dim();
    let coef = regression_coefficients(post, j)?;
    let mu = post.mu();
    let mu_j = mu[j];
    // μ₋ⱼ + θ_j (0 − μ_j) with θ_j = −coef
    let new_mu: Vec<f64> = linalg::drop_entry(mu, j)
        .iter()
        .zip(&coef)
        .map(|(m, c)| m + c * mu_j)
        .collect();
    let lambda = linalg::drop_index(post.lambda(), j);
    let (sigma, rank_sigma) = linalg::sym_pinv(lambda.as_ref(), DEFAULT_SV_TOL)?;
    if new_mu.iter().any(|v| !v.is_finite()) {
        return Err(RateError::NonFinite {
            what: "conditional mean",
            detail: format!("nullifying variable {}", post.variable(j)),
        });
    }
    let variables = (0..p).filter(|&k| k != j).map(|k| post.variable(k)).collect();
    let mut provenance = post.nullified().to_vec();
    provenance.push(post.variable(j));
    Ok(ConditionedPosterior {
        mu: new_mu,
        sigma,
        lambda,
        rank_sigma,
        variables,
        provenance,
    })
}

/// Reports before and after each nullification.
#[derive(Clone, Debug)]
pub struct Cascade {
    pub initial: CentralityReport,
    /// `steps[s]` is computed after the `s + 1`-th nullification.
    pub steps: Vec<CentralityReport>,
}

impl Cascade {
    /// Δ for the initial report followed by every step.
    pub fn deltas(&self) -> Vec<f64> {
        std::iter::once(&self.initial).chain(&self.steps).map(|r| r.delta).collect()
    }

    pub fn ess(&self) -> Vec<f64> {
        std::iter::once(&self.initial).chain(&self.steps).map(|r| r.ess).collect()
    }

    pub fn reports(&self) -> impl Iterator<Item = &CentralityReport> {
        std::iter::once(&self.initial).chain(&self.steps)
    }
}

/// Repeatedly nullifies the top-RATE variable and recomputes.
///
/// Stops after `max_steps` nullifications, or earlier once Δ drops below
/// `stop_delta` or the signal vanishes.
pub fn centrality_cascade<P: GaussianSummary + ?Sized>(post: &P, max_steps: usize, stop_delta: f64) -> Result<Cascade> {
    let p = post.dim();
    if p < 2 || max_steps > p - 2 {
        return Err(RateError::param(
            "max_steps",
            format!("at most {} nullification steps are possible with {p} variables, got {max_steps}", p.saturating_sub(2)),
        ));
    }
    if !(stop_delta >= 0.0) {
        return Err(RateError::param("stop_delta", format!("must be non-negative, got {stop_delta}")));
    }
    let initial = compute_rates(post)?;
    let mut steps: Vec<CentralityReport> = Vec::with_capacity(max_steps);
    let mut current: Option<ConditionedPosterior> = None;
    for _ in 0..max_steps {
        let last = steps.last().unwrap_or(&initial);
        if last.no_signal || last.delta < stop_delta {
            break;
        }
        let top = last.argmax();
        let ties = last.rate.iter().filter(|&&r| r == last.rate[top]).count();
        if ties > 1 {
            log::info!("{ties} variables tie for the top RATE; nullifying the lowest index {}", last.variables[top]);
        }
        let next = match &current {
            Some(c) => nullify_and_condition(c, top)?,
            None => nullify_and_condition(post, top)?,
        };
        steps.push(compute_rates(&next)?);
        current = Some(next);
    }
    Ok(Cascade { initial, steps })
}

/// Nullifies the listed original variables in order, reporting after each.
pub fn nullify_sequence<P: GaussianSummary + ?Sized>(post: &P, ids: &[usize]) -> Result<Cascade> {
    let p = post.dim();
    if ids.len() + 2 > p {
        return Err(RateError::param(
            "nullify",
            format!("cannot nullify {} of {p} variables and keep two in play", ids.len()),
        ));
    }
    let initial = compute_rates(post)?;
    let mut steps = Vec::with_capacity(ids.len());
    let mut current: Option<ConditionedPosterior> = None;
    for &id in ids {
        let in_play: Vec<usize> = match &current {
            Some(c) => c.variables.clone(),
            None => (0..p).map(|k| post.variable(k)).collect(),
        };
        let k = in_play
            .iter()
            .position(|&v| v == id)
            .ok_or_else(|| RateError::param("nullify", format!("variable {id} is not in play")))?;
        let next = match &current {
            Some(c) => nullify_and_condition(c, k)?,
            None => nullify_and_condition(post, k)?,
        };
        steps.push(compute_rates(&next)?);
        current = Some(next);
    }
    Ok(Cascade { initial, steps })
}
