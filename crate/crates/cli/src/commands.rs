use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rate_core::baseline::scanone_at;
use rate_core::error::{RateError, Result};
use rate_core::gp::{GpConfig, SamplerBackend};
use rate_core::io::{self, fmt_real};
use rate_core::kernel::{KernelKind, KernelSpec};
use rate_core::pipeline::{derive_seed, power_study, run_rate, PowerConfig, RateOptions, Scenario};
use rate_core::rate::{centrality_cascade, nullify_sequence, Cascade};
use rate_core::simdata::{
    simulate_genotypes, simulate_phenotype, simulate_structured_genotypes, EffectDraw, GroupSplit, PhenotypeModel,
    SimConfig,
};
use serde_json::json;

use crate::args::{
    BackendArg, GpArgs, KernelArg, ModelArg, PowerArgs, RateArgs, ScanArgs, ScenarioArg, SimulateArgs,
};
use crate::manifest::Manifest;

/// Seed streams for `simulate`.
const GENOTYPE_STREAM: u64 = 0;
const PHENOTYPE_STREAM: u64 = 1;

/// Share of failed power replicates above which the command reports failure.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Outcome of a command that completed but should still exit nonzero.
#[derive(Debug)]
pub enum Outcome {
    Done,
    TooManyFailures { failed: usize, total: usize },
}

/// The command line that produced the outputs, as recorded in the manifest.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub argv: Vec<String>,
    pub cwd: String,
}

impl Invocation {
    pub fn current() -> Self {
        Invocation {
            argv: std::env::args().skip(1).collect(),
            cwd: std::env::current_dir()
                .map(|d| d.display().to_string())
                .unwrap_or_default(),
        }
    }

    fn manifest(&self, command: &str, seed: u64) -> Manifest {
        let mut m = Manifest::new(command, seed);
        m.argv = self.argv.clone();
        m.cwd = self.cwd.clone();
        m
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| RateError::File {
        path: dir.display().to_string(),
        source,
    })
}

/// 1-based CLI indices to 0-based, checked against `p`.
fn zero_based(flag: &'static str, ids: &[usize], p: usize) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&i| {
            if i == 0 || i > p {
                Err(RateError::param(flag, format!("index {i} is outside 1..={p} (indices are 1-based)")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

fn kernel_spec(gp: &GpArgs) -> KernelSpec {
    KernelSpec {
        kind: match gp.kernel {
            KernelArg::Gaussian => KernelKind::Gaussian,
            KernelArg::Linear => KernelKind::Linear,
        },
        bandwidth: gp.bandwidth,
        jitter: gp.jitter,
    }
}

fn rate_options(gp: &GpArgs, seed: u64) -> RateOptions {
    RateOptions {
        kernel: kernel_spec(gp),
        gp: GpConfig {
            n_iter: gp.iter,
            burn_in: gp.burn_in,
            thin: gp.thin,
            a: gp.a,
            b: gp.b,
            seed,
            backend: match gp.backend {
                BackendArg::Spectral => SamplerBackend::Spectral,
                BackendArg::Direct => SamplerBackend::Direct,
            },
            ..Default::default()
        },
        sv_tol: gp.sv_tol,
        ridge: gp.ridge,
    }
}

fn record_options(m: &mut Manifest, opts: &RateOptions) {
    let kernel = match opts.kernel.kind {
        KernelKind::Gaussian => "gaussian",
        KernelKind::Linear => "linear",
    };
    m.param("kernel", kernel);
    m.param("bandwidth", opts.kernel.bandwidth);
    m.param("jitter", opts.kernel.jitter);
    m.param("iter", opts.gp.n_iter);
    m.param("burn_in", opts.gp.burn_in);
    m.param("thin", opts.gp.thin);
    m.param("a", opts.gp.a);
    m.param("b", opts.gp.b);
    m.param(
        "backend",
        match opts.gp.backend {
            SamplerBackend::Spectral => "spectral",
            SamplerBackend::Direct => "direct",
        },
    );
    m.param("sv_tol", opts.sv_tol);
    m.param("ridge", opts.ridge);
}

pub fn simulate(args: &SimulateArgs, inv: &Invocation) -> Result<Outcome> {
    let start = Instant::now();
    let causal = zero_based("causal", &args.causal, args.p)?;
    if let Some(k) = args.groups {
        if k == 0 || k >= causal.len() {
            return Err(RateError::param(
                "groups",
                format!("need 1 <= K < {} (the causal count), got {k}", causal.len()),
            ));
        }
    }
    let geno_seed = derive_seed(args.seed, GENOTYPE_STREAM);
    let x = if args.structured {
        simulate_structured_genotypes(args.n, args.p, args.subpops, args.fst, geno_seed)?
    } else {
        simulate_genotypes(args.n, args.p, (args.freq_lo, args.freq_hi), geno_seed)?
    };
    let cfg = SimConfig {
        n: args.n,
        p: args.p,
        causal_indices: causal.clone(),
        h2: args.h2,
        rho: args.rho,
        model: match args.model {
            ModelArg::Standard => PhenotypeModel::Standard,
            ModelArg::Stratified => PhenotypeModel::Stratified,
        },
        n_pcs: args.pcs,
        pc_variance_fraction: args.pc_var,
        group_split: args.groups.map(|k| GroupSplit::first_k(&causal, k)),
        effects: args.beta_const.map_or(EffectDraw::Gaussian, EffectDraw::Constant),
        seed: derive_seed(args.seed, PHENOTYPE_STREAM),
    };
    let truth = simulate_phenotype(&x, &cfg)?;

    prepare_dir(&args.out_dir)?;
    let mut m = inv.manifest("simulate", args.seed);
    let geno_path = args.out_dir.join("genotypes.tsv");
    let pheno_path = args.out_dir.join("phenotype.tsv");
    let truth_path = args.out_dir.join("truth.tsv");
    io::write_genotypes(&geno_path, &x)?;
    io::write_phenotype(&pheno_path, &truth.y)?;
    io::write_truth(&truth_path, x.snp_ids(), &truth)?;
    for path in [&geno_path, &pheno_path, &truth_path] {
        m.output(path);
    }

    m.param("n", args.n);
    m.param("p", args.p);
    m.param("causal_1based", &args.causal);
    m.param("causal_0based", &causal);
    m.param("h2", args.h2);
    m.param("rho", args.rho);
    m.param("model", format!("{:?}", cfg.model).to_lowercase());
    m.param("pcs", args.pcs);
    m.param("pc_var", args.pc_var);
    m.param("groups", args.groups);
    m.param("beta_const", args.beta_const);
    m.param("structured", args.structured);
    if args.structured {
        m.param("subpops", args.subpops);
        m.param("fst", args.fst);
    } else {
        m.param("freq_lo", args.freq_lo);
        m.param("freq_hi", args.freq_hi);
    }
    let v = truth.variance_report;
    m.param(
        "variance_report",
        json!({
            "additive": v.additive,
            "interaction": v.interaction,
            "stratification": v.stratification,
            "noise": v.noise,
        }),
    );
    m.timing("simulate", start.elapsed().as_secs_f64());
    m.write(&args.out_dir)?;
    log::info!(
        "simulated {} x {} with {} causal SNPs into {}",
        args.n,
        args.p,
        causal.len(),
        args.out_dir.display()
    );
    Ok(Outcome::Done)
}

fn write_cascade_table(path: &Path, cascade: &Cascade, ids: &[String]) -> Result<()> {
    let err = |source| RateError::File {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    writeln!(w, "step\tnullified\tdelta\tess\tp_effective").map_err(err)?;
    for (s, r) in cascade.reports().enumerate() {
        let nullified = r.nullified.last().filter(|_| s > 0).map_or("-", |&v| ids[v].as_str());
        writeln!(
            w,
            "{s}\t{nullified}\t{}\t{}\t{}",
            fmt_real(r.delta),
            fmt_real(r.ess),
            r.p_effective
        )
        .map_err(err)?;
    }
    w.flush().map_err(err)
}

pub fn rate(args: &RateArgs, inv: &Invocation) -> Result<Outcome> {
    let mut m = inv.manifest("rate", args.seed);
    let start = Instant::now();
    let x = io::read_genotypes(&args.genotypes)?;
    let y = io::read_phenotype(&args.phenotype)?;
    m.input(&args.genotypes)?;
    m.input(&args.phenotype)?;
    m.timing("read", start.elapsed().as_secs_f64());
    let nullify = zero_based("nullify", &args.nullify, x.n_snps())?;

    let opts = rate_options(&args.gp, args.seed);
    let run = run_rate(&x, &y, &opts)?;
    m.timings(&run.timings);
    let ids = x.snp_ids();

    let start = Instant::now();
    let cascade = match args.cascade {
        Some(k) => Some(centrality_cascade(&run.posterior, k, args.stop_delta).map_err(|e| e.in_stage("cascade"))?),
        None if !nullify.is_empty() => {
            Some(nullify_sequence(&run.posterior, &nullify).map_err(|e| e.in_stage("cascade"))?)
        }
        None => None,
    };
    if cascade.is_some() {
        m.timing("cascade", start.elapsed().as_secs_f64());
    }

    prepare_dir(&args.out_dir)?;
    let report_path = args.out_dir.join("report.tsv");
    io::write_report(&report_path, &run.report, ids)?;
    m.output(&report_path);
    if let Some(cascade) = &cascade {
        for (s, step) in cascade.steps.iter().enumerate() {
            let path = args.out_dir.join(format!("report_step{}.tsv", s + 1));
            io::write_report(&path, step, ids)?;
            m.output(&path);
        }
        let path = args.out_dir.join("cascade.tsv");
        write_cascade_table(&path, cascade, ids)?;
        m.output(&path);
    }
    if args.dump_draws {
        let path = args.out_dir.join("draws.tsv");
        io::write_draws(&path, &run.draws)?;
        m.output(&path);
    }
    if args.dump_moments {
        let path = args.out_dir.join("moments.tsv");
        io::write_moments(&path, &run.posterior, ids)?;
        m.output(&path);
    }

    record_options(&mut m, &opts);
    m.param("resolved_bandwidth", run.kernel.bandwidth);
    m.param("design_rank", run.design_rank);
    m.param("cascade", args.cascade);
    m.param("stop_delta", args.stop_delta);
    m.param("nullify_1based", &args.nullify);
    m.param("nullify_0based", &nullify);
    m.param("delta", run.report.delta);
    m.write(&args.out_dir)?;
    if run.report.quality_warning {
        log::warn!("{} KLD values were negative and clamped to zero", run.report.clamped);
    }
    if run.report.no_signal {
        log::warn!("no centrality signal; all rates are uniform");
    }
    Ok(Outcome::Done)
}

pub fn scan(args: &ScanArgs, inv: &Invocation) -> Result<Outcome> {
    let mut m = inv.manifest("scan", 0);
    let x = io::read_genotypes(&args.genotypes)?;
    let y = io::read_phenotype(&args.phenotype)?;
    m.input(&args.genotypes)?;
    m.input(&args.phenotype)?;
    let start = Instant::now();
    let result = scanone_at(&x, &y, args.level).map_err(|e| e.in_stage("scan"))?;
    m.timing("scan", start.elapsed().as_secs_f64());
    prepare_dir(&args.out_dir)?;
    let path = args.out_dir.join("scan.tsv");
    io::write_scan(&path, &result, x.snp_ids())?;
    m.output(&path);
    m.param("level", args.level);
    m.param("bonferroni_threshold", result.bonferroni_threshold);
    m.write(&args.out_dir)?;
    Ok(Outcome::Done)
}

fn write_power_tables(dir: &Path, study: &rate_core::pipeline::PowerStudy) -> Result<Vec<PathBuf>> {
    let summary_path = dir.join("power_summary.tsv");
    let replicates_path = dir.join("power_replicates.tsv");
    let write = |path: &Path, body: String| {
        std::fs::write(path, body).map_err(|source| RateError::File {
            path: path.display().to_string(),
            source,
        })
    };

    let mut s = String::from("method\tauc_mean\tauc_se\ttpr_at_threshold\tfpr_at_threshold\n");
    for (name, sum) in [("rate", &study.rate), ("scanone", &study.scan)] {
        s += &format!(
            "{name}\t{}\t{}\t{}\t{}\n",
            fmt_real(sum.auc_mean),
            fmt_real(sum.auc_se),
            fmt_real(sum.tpr_at_threshold),
            fmt_real(sum.fpr_at_threshold)
        );
    }
    write(&summary_path, s)?;

    let mut r = String::from("replicate\trate_auc\tscanone_auc\trate_tpr\trate_fpr\tscanone_tpr\tscanone_fpr\tdelta\n");
    for rep in &study.replicates {
        r += &format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            rep.replicate,
            fmt_real(rep.rate_curve.auc),
            fmt_real(rep.scan_curve.auc),
            fmt_real(rep.rate_power.tpr),
            fmt_real(rep.rate_power.fpr),
            fmt_real(rep.scan_power.tpr),
            fmt_real(rep.scan_power.fpr),
            fmt_real(rep.delta)
        );
    }
    write(&replicates_path, r)?;
    Ok(vec![summary_path, replicates_path])
}

pub fn power(args: &PowerArgs, inv: &Invocation) -> Result<Outcome> {
    let scenario = match args.scenario {
        ScenarioArg::I => Scenario::I,
        ScenarioArg::II => Scenario::II,
        ScenarioArg::III => Scenario::III,
    };
    let cfg = PowerConfig {
        scenario,
        n: args.n,
        p: args.p,
        n_causal: args.n_causal,
        group1: args.groups,
        h2: args.h2,
        rho: args.rho,
        pc_var: args.pc_var,
        n_subpops: args.subpops,
        fst: args.fst,
        replicates: args.replicates,
        seed: args.seed,
        rate: rate_options(&args.gp, args.seed),
        grid_points: args.grid_points,
        level: args.level,
    };
    let start = Instant::now();
    let study = power_study(&cfg)?;
    let mut m = inv.manifest("power", args.seed);
    m.timing("power", start.elapsed().as_secs_f64());

    prepare_dir(&args.out_dir)?;
    let rate_path = args.out_dir.join("rate_curve.tsv");
    let scan_path = args.out_dir.join("scanone_curve.tsv");
    io::write_curve(&rate_path, &study.fpr_grid, &study.rate.mean_tpr, study.rate.auc_mean, Some(study.rate.auc_se))?;
    io::write_curve(&scan_path, &study.fpr_grid, &study.scan.mean_tpr, study.scan.auc_mean, Some(study.scan.auc_se))?;
    m.output(&rate_path);
    m.output(&scan_path);
    for path in write_power_tables(&args.out_dir, &study)? {
        m.output(&path);
    }

    m.param("scenario", format!("{:?}", cfg.scenario));
    m.param("replicates", cfg.replicates);
    m.param("n", cfg.n);
    m.param("p", cfg.p);
    m.param("n_causal", cfg.n_causal);
    m.param("groups", cfg.group1);
    m.param("h2", cfg.h2);
    m.param("rho", cfg.rho);
    m.param("pc_var", cfg.pc_var);
    m.param("subpops", cfg.n_subpops);
    m.param("fst", cfg.fst);
    m.param("level", cfg.level);
    m.param("grid_points", cfg.grid_points);
    record_options(&mut m, &cfg.rate);
    m.param(
        "failures",
        study
            .failures
            .iter()
            .map(|(r, e)| json!({ "replicate": r, "error": e }))
            .collect::<Vec<_>>(),
    );
    m.write(&args.out_dir)?;

    let failed = study.failures.len();
    if study.failure_fraction() > MAX_FAILURE_FRACTION {
        return Ok(Outcome::TooManyFailures {
            failed,
            total: cfg.replicates,
        });
    }
    if failed > 0 {
        log::warn!("{failed} of {} replicates failed and were skipped", cfg.replicates);
    }
    Ok(Outcome::Done)
}
