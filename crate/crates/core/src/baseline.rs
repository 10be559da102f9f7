//! Single-predictor association scan and ROC summaries for comparing
//! variable rankings against a known causal set.

use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::error::{RateError, Result};
use crate::rate::CentralityReport;
use crate::simdata::GenotypeMatrix;

pub const DEFAULT_LEVEL: f64 = 0.05;

/// Family-wise level split evenly across `p` tests.
pub fn bonferroni_threshold(level: f64, p: usize) -> f64 {
    level / p as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub p_values: Vec<f64>,
    pub betas: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub bonferroni_threshold: f64,
}

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_infinite() || t.abs() == f64::MAX {
        return f64::MIN_POSITIVE;
    }
    let x = dof / (dof + t * t);
    beta_reg(0.5 * dof, 0.5, x).clamp(f64::MIN_POSITIVE, 1.0)
}

struct Fit {
    beta: f64,
    t: f64,
    p: f64,
}

fn simple_regression(x: &[f64], y: &[f64], y_mean: f64, syy: f64) -> Fit {
    let n = x.len();
    let x_mean = x.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - x_mean;
        sxx += dx * dx;
        sxy += dx * (yi - y_mean);
    }
    if syy == 0.0 {
        return Fit { beta: 0.0, t: 0.0, p: 1.0 };
    }
    let beta = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - y_mean - beta * (xi - x_mean);
            r * r
        })
        .sum();
    let dof = (n - 2) as f64;
    // Residuals at the level of floating-point noise mean an exact fit.
    if rss <= 1e-24 * syy {
        let t = if beta >= 0.0 { f64::MAX } else { -f64::MAX };
        return Fit { beta, t, p: f64::MIN_POSITIVE };
    }
    let se = (rss / dof / sxx).sqrt();
    let t = beta / se;
    Fit { beta, t, p: t_two_sided_p(t, dof) }
}

/// Regresses `y` on each column of `x` separately, with an intercept.
pub fn scanone(x: &GenotypeMatrix, y: &[f64]) -> Result<ScanResult> {
    scanone_at(x, y, DEFAULT_LEVEL)
}

pub fn scanone_at(x: &GenotypeMatrix, y: &[f64], level: f64) -> Result<ScanResult> {
    let n = x.n_samples();
    if y.len() != n {
        return Err(RateError::DimensionMismatch {
            context: "phenotype length vs genotype rows",
            expected: n,
            found: y.len(),
        });
    }
    if n < 3 {
        return Err(RateError::param("n", format!("scan needs at least 3 samples, got {n}")));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(RateError::NonFinite {
            what: "phenotype",
            detail: format!("entry {i} is {}", y[i]),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(RateError::param("level", format!("must lie in (0, 1), got {level}")));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let syy: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let fits: Vec<Fit> = (0..x.n_snps())
        .into_par_iter()
        .map(|j| simple_regression(x.column(j), y, y_mean, syy))
        .collect();
    Ok(ScanResult {
        p_values: fits.iter().map(|f| f.p).collect(),
        betas: fits.iter().map(|f| f.beta).collect(),
        t_stats: fits.iter().map(|f| f.t).collect(),
        bonferroni_threshold: bonferroni_threshold(level, x.n_snps()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    HigherIsStronger,
    LowerIsStronger,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerCurve {
    /// Scores oriented so that higher means stronger evidence.
    pub scores: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
    /// Every score was identical.
    pub all_tied: bool,
}

impl PowerCurve {
    /// Piecewise-linear TPR at `fpr`; on vertical segments the upper value.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let mut best = 0.0_f64;
        for k in 0..self.fpr.len() {
            if self.fpr[k] == fpr {
                best = best.max(self.tpr[k]);
            }
            if k + 1 < self.fpr.len() {
                let (a, b) = (self.fpr[k], self.fpr[k + 1]);
                if a < fpr && fpr < b {
                    let w = (fpr - a) / (b - a);
                    best = best.max(self.tpr[k] + w * (self.tpr[k + 1] - self.tpr[k]));
                }
            }
        }
        best
    }
}

/// Trapezoidal area under a curve given by matched point lists.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * 0.5 * (y[0] + y[1]))
        .sum()
}

fn causal_mask(p: usize, truth: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; p];
    for &t in truth {
        if t >= p {
            return Err(RateError::param("truth", format!("causal index {t} out of range for {p} variables")));
        }
        if mask[t] {
            return Err(RateError::param("truth", format!("causal index {t} listed twice")));
        }
        mask[t] = true;
    }
    if truth.is_empty() || truth.len() == p {
        return Err(RateError::param(
            "truth",
            "causal set must be non-empty and leave at least one null variable",
        ));
    }
    Ok(mask)
}

/// ROC over all score thresholds; tied scores move diagonally.
pub fn roc_auc(scores: &[f64], orientation: Orientation, truth: &[usize]) -> Result<PowerCurve> {
    let p = scores.len();
    let mask = causal_mask(p, truth)?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(RateError::NonFinite {
            what: "ROC scores",
            detail: format!("score {i} is NaN"),
        });
    }
    let oriented: Vec<f64> = match orientation {
        Orientation::HigherIsStronger => scores.to_vec(),
        Orientation::LowerIsStronger => scores.iter().map(|s| -s).collect(),
    };
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| oriented[b].total_cmp(&oriented[a]));
    let n_pos = truth.len() as f64;
    let n_neg = (p - truth.len()) as f64;
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < p {
        let v = oriented[order[k]];
        while k < p && oriented[order[k]] == v {
            if mask[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        fpr.push(fp as f64 / n_neg);
        tpr.push(tp as f64 / n_pos);
    }
    let all_tied = fpr.len() == 2;
    let auc = if all_tied { 0.5 } else { trapezoid(&fpr, &tpr) };
    if all_tied {
        log::warn!("all ROC scores are identical; AUC set to 0.5");
    }
    Ok(PowerCurve {
        scores: oriented,
        fpr,
        tpr,
        auc,
        all_tied,
    })
}

/// A method's own significance call on each variable.
pub trait NativeThreshold {
    /// Total number of variables, including any no longer in play.
    fn n_variables(&self) -> usize;
    /// Original indices of variables passing the method's threshold.
    fn called(&self) -> Vec<usize>;
}

impl NativeThreshold for CentralityReport {
    fn n_variables(&self) -> usize {
        self.p_effective + self.nullified.len()
    }
    fn called(&self) -> Vec<usize> {
        self.significant_ids()
    }
}

impl NativeThreshold for ScanResult {
    fn n_variables(&self) -> usize {
        self.p_values.len()
    }
    fn called(&self) -> Vec<usize> {
        self.p_values
            .iter()
            .enumerate()
            .filter(|(_, &pv)| pv < self.bonferroni_threshold)
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdPower {
    pub tpr: f64,
    pub fpr: f64,
}

/// TPR and FPR of a method's native significance call.
pub fn threshold_power<R: NativeThreshold + ?Sized>(result: &R, truth: &[usize]) -> Result<ThresholdPower> {
    let p = result.n_variables();
    let mask = causal_mask(p, truth)?;
    let called = result.called();
    let tp = called.iter().filter(|&&j| mask[j]).count();
    let fp = called.len() - tp;
    Ok(ThresholdPower {
        tpr: tp as f64 / truth.len() as f64,
        fpr: fp as f64 / (p - truth.len()) as f64,
    })
}
