//! End-to-end runs: kernel → Gibbs fit → projection → summary → RATE, and
//! the replicated power comparison against the single-SNP scan.

use std::time::Instant;

use rayon::prelude::*;

use crate::baseline::{roc_auc, scanone_at, threshold_power, Orientation, PowerCurve, ThresholdPower, DEFAULT_LEVEL};
use crate::error::{RateError, Result};
use crate::gp::{gibbs_fit, GpConfig, PosteriorDraws};
use crate::kernel::{build_covariance, KernelSpec};
use crate::projection::{pseudoinverse, summarize_posterior_with, EffectSizePosterior, DEFAULT_RIDGE, DEFAULT_SV_TOL};
use crate::rate::{compute_rates, CentralityReport};
use crate::simdata::{
    random_causal_set, simulate_phenotype, simulate_structured_genotypes, GenotypeMatrix, GroupSplit, PhenotypeModel,
    SimConfig,
};

/// Independent 64-bit seed for `(base, stream)` via the SplitMix64 finalizer.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateOptions {
    pub kernel: KernelSpec,
    pub gp: GpConfig,
    pub sv_tol: f64,
    pub ridge: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            kernel: KernelSpec::default(),
            gp: GpConfig::default(),
            sv_tol: DEFAULT_SV_TOL,
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RateRun {
    /// Kernel spec with the bandwidth actually used.
    pub kernel: KernelSpec,
    pub draws: PosteriorDraws,
    /// Numerical rank of the design matrix.
    pub design_rank: usize,
    pub posterior: EffectSizePosterior,
    pub report: CentralityReport,
    pub timings: Vec<StageTiming>,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push(StageTiming {
        stage,
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

/// Fits the GP to `y` and ranks the columns of `x` by RATE.
pub fn run_rate(x: &GenotypeMatrix, y: &[f64], opts: &RateOptions) -> Result<RateRun> {
    let mut timings = Vec::new();
    let k = timed(&mut timings, "kernel", || build_covariance(x, opts.kernel))?;
    let draws = timed(&mut timings, "gibbs", || gibbs_fit(y, &k, &opts.gp))?;
    let (beta_draws, design_rank) = timed(&mut timings, "projection", || {
        let pinv = pseudoinverse(x.values(), opts.sv_tol)?;
        let b = draws.left_multiply(pinv.operator.as_ref());
        Ok((b.transpose().to_owned(), pinv.rank))
    })?;
    let posterior = timed(&mut timings, "summary", || {
        summarize_posterior_with(beta_draws.as_ref(), opts.ridge, opts.sv_tol)
    })?;
    let report = timed(&mut timings, "rates", || compute_rates(&posterior))?;
    Ok(RateRun {
        kernel: *k.spec(),
        draws,
        design_rank,
        posterior,
        report,
        timings,
    })
}

/// Power-study designs on structured genotypes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Standard model, no stratification term.
    I,
    /// Stratification carried by the top 5 genotype PCs.
    II,
    /// Stratification carried by the top 10 genotype PCs.
    III,
}

impl Scenario {
    pub fn n_pcs(self) -> usize {
        match self {
            Scenario::I => 0,
            Scenario::II => 5,
            Scenario::III => 10,
        }
    }

    pub fn model(self) -> PhenotypeModel {
        match self {
            Scenario::I => PhenotypeModel::Standard,
            _ => PhenotypeModel::Stratified,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub n_causal: usize,
    /// Size of the first interaction group; the rest of the causal set forms the second.
    pub group1: usize,
    pub h2: f64,
    pub rho: f64,
    pub pc_var: f64,
    pub n_subpops: usize,
    pub fst: f64,
    pub replicates: usize,
    pub seed: u64,
    pub rate: RateOptions,
    /// Number of evenly spaced FPR values for the mean curves.
    pub grid_points: usize,
    pub level: f64,
}

impl PowerConfig {
    /// 500 samples, 200 SNPs, 30 causal split 5/25, H² = 0.3, 20 replicates.
    pub fn desk(scenario: Scenario, rho: f64) -> Self {
        PowerConfig {
            scenario,
            n: 500,
            p: 200,
            n_causal: 30,
            group1: 5,
            h2: 0.3,
            rho,
            pc_var: 0.3,
            n_subpops: 3,
            fst: 0.1,
            replicates: 20,
            seed: 0,
            rate: RateOptions::default(),
            grid_points: 101,
            level: DEFAULT_LEVEL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(RateError::param("replicates", "must be at least 1"));
        }
        if self.n_causal == 0 || self.n_causal >= self.p {
            return Err(RateError::param(
                "causal",
                format!("need 1 <= causal count < p = {}, got {}", self.p, self.n_causal),
            ));
        }
        if self.group1 > self.n_causal {
            return Err(RateError::param("groups", "first group exceeds the causal count"));
        }
        if self.grid_points < 2 {
            return Err(RateError::param("grid_points", "need at least 2 grid points"));
        }
        self.rate.gp.validate()?;
        self.rate.kernel.validate()
    }

    fn sim_config(&self, causal: Vec<usize>, seed: u64) -> SimConfig {
        let split = (self.group1 > 0 && self.group1 < causal.len()).then(|| GroupSplit::first_k(&causal, self.group1));
        SimConfig {
            n: self.n,
            p: self.p,
            causal_indices: causal,
            h2: self.h2,
            rho: self.rho,
            model: self.scenario.model(),
            n_pcs: self.scenario.n_pcs(),
            pc_variance_fraction: if self.scenario == Scenario::I { 0.0 } else { self.pc_var },
            group_split: split,
            effects: crate::simdata::EffectDraw::Gaussian,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub causal: Vec<usize>,
    pub rate_curve: PowerCurve,
    pub scan_curve: PowerCurve,
    pub rate_power: ThresholdPower,
    pub scan_power: ThresholdPower,
    pub delta: f64,
}

/// Seeds used by one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicateSeeds {
    pub genotypes: u64,
    pub causal: u64,
    pub phenotype: u64,
    pub gibbs: u64,
}

impl ReplicateSeeds {
    pub fn new(base: u64, replicate: usize) -> Self {
        let r = derive_seed(base, replicate as u64);
        ReplicateSeeds {
            genotypes: derive_seed(r, 0),
            causal: derive_seed(r, 1),
            phenotype: derive_seed(r, 2),
            gibbs: derive_seed(r, 3),
        }
    }
}

pub fn run_replicate(cfg: &PowerConfig, replicate: usize) -> Result<ReplicateResult> {
    let seeds = ReplicateSeeds::new(cfg.seed, replicate);
    let x = simulate_structured_genotypes(cfg.n, cfg.p, cfg.n_subpops, cfg.fst, seeds.genotypes)
        .map_err(|e| e.in_stage("simulate"))?;
    let causal = random_causal_set(cfg.p, cfg.n_causal, seeds.causal)?;
    let sim = cfg.sim_config(causal.clone(), seeds.phenotype);
    let truth = simulate_phenotype(&x, &sim).map_err(|e| e.in_stage("simulate"))?;
    let mut opts = cfg.rate;
    opts.gp.seed = seeds.gibbs;
    let run = run_rate(&x, &truth.y, &opts)?;
    let scan = scanone_at(&x, &truth.y, cfg.level).map_err(|e| e.in_stage("scan"))?;
    let abs_t: Vec<f64> = scan.t_stats.iter().map(|t| t.abs()).collect();
    Ok(ReplicateResult {
        replicate,
        rate_curve: roc_auc(&run.report.rate, Orientation::HigherIsStronger, &causal)?,
        scan_curve: roc_auc(&abs_t, Orientation::HigherIsStronger, &causal)?,
        rate_power: threshold_power(&run.report, &causal)?,
        scan_power: threshold_power(&scan, &causal)?,
        delta: run.report.delta,
        causal,
    })
}

/// Mean ROC curve and AUC summary for one method.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub mean_tpr: Vec<f64>,
    pub auc_mean: f64,
    /// Standard error of the mean AUC (zero for a single replicate).
    pub auc_se: f64,
    pub tpr_at_threshold: f64,
    pub fpr_at_threshold: f64,
}

#[derive(Clone, Debug)]
pub struct PowerStudy {
    pub config: PowerConfig,
    pub replicates: Vec<ReplicateResult>,
    /// `(replicate, error message)` for every failed replicate.
    pub failures: Vec<(usize, String)>,
    pub fpr_grid: Vec<f64>,
    pub rate: MethodSummary,
    pub scan: MethodSummary,
}

impl PowerStudy {
    pub fn failure_fraction(&self) -> f64 {
        self.failures.len() as f64 / self.config.replicates as f64
    }

    /// Replicates where RATE's native call finds strictly more causal SNPs.
    pub fn rate_tpr_wins(&self) -> usize {
        self.replicates
            .iter()
            .filter(|r| r.rate_power.tpr > r.scan_power.tpr)
            .count()
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn summarize_method(
    grid: &[f64],
    curves: impl Iterator<Item = (PowerCurve, ThresholdPower)> + Clone,
) -> MethodSummary {
    let m = curves.clone().count() as f64;
    let mut mean_tpr = vec![0.0; grid.len()];
    let mut aucs = Vec::new();
    let (mut tpr, mut fpr) = (0.0, 0.0);
    for (curve, power) in curves {
        for (acc, &g) in mean_tpr.iter_mut().zip(grid) {
            *acc += curve.tpr_at(g) / m;
        }
        aucs.push(curve.auc);
        tpr += power.tpr / m;
        fpr += power.fpr / m;
    }
    let (auc_mean, auc_se) = mean_and_se(&aucs);
    MethodSummary {
        mean_tpr,
        auc_mean,
        auc_se,
        tpr_at_threshold: tpr,
        fpr_at_threshold: fpr,
    }
}

/// Runs every replicate (in parallel) and aggregates both methods.
///
/// Failed replicates are logged and excluded from the summaries; the study
/// itself fails only when no replicate succeeds.
pub fn power_study(cfg: &PowerConfig) -> Result<PowerStudy> {
    cfg.validate()?;
    let results: Vec<Result<ReplicateResult>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(ok) => replicates.push(ok),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    if replicates.is_empty() {
        return Err(RateError::DegenerateDesign(format!(
            "all {} replicates failed; first error: {}",
            cfg.replicates, failures[0].1
        )));
    }
    let fpr_grid: Vec<f64> = (0..cfg.grid_points)
        .map(|i| i as f64 / (cfg.grid_points - 1) as f64)
        .collect();
    let rate = summarize_method(&fpr_grid, replicates.iter().map(|r| (r.rate_curve.clone(), r.rate_power)));
    let scan = summarize_method(&fpr_grid, replicates.iter().map(|r| (r.scan_curve.clone(), r.scan_power)));
    Ok(PowerStudy {
        config: cfg.clone(),
        replicates,
        failures,
        fpr_grid,
        rate,
        scan,
    })
}
