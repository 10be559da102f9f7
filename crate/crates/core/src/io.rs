//! Tab-separated files with `#`-prefixed metadata lines.
//!
//! Reals are written with 17 significant digits so that every file reads
//! back to the identical `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use faer::Mat;

use crate::baseline::{PowerCurve, ScanResult};
use crate::error::{RateError, Result};
use crate::gp::PosteriorDraws;
use crate::projection::EffectSizePosterior;
use crate::rate::CentralityReport;
use crate::simdata::{GenotypeMatrix, SimTruth};

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|source| RateError::File {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufWriter::new(f))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RateError + '_ {
    move |source| RateError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Parsed TSV: metadata comments and data rows, each with its line number.
#[derive(Debug, Default)]
pub struct Table {
    /// Comment text with the leading `#` and one space removed.
    pub comments: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
    source: String,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let f = File::open(path).map_err(io_err(path))?;
        let mut table = Table {
            source: path.display().to_string(),
            ..Default::default()
        };
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                table.comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
            } else {
                table.rows.push((i + 1, line.split('\t').map(str::to_string).collect()));
            }
        }
        Ok(table)
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> RateError {
        RateError::Parse {
            location: format!("{}:{line}", self.source),
            message: message.into(),
        }
    }

    pub fn real(&self, line: usize, field: &str) -> Result<f64> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|_| self.error(line, format!("expected a number, found `{field}`")))
    }

    /// Takes the first row as a header and checks it.
    pub fn expect_header(&mut self, expected: &[&str]) -> Result<()> {
        if self.rows.is_empty() {
            return Err(self.error(0, "file has no header"));
        }
        let (line, header) = self.rows.remove(0);
        if header.iter().map(String::as_str).ne(expected.iter().copied()) {
            return Err(self.error(
                line,
                format!("expected header `{}`, found `{}`", expected.join("\t"), header.join("\t")),
            ));
        }
        Ok(())
    }

    /// Value of a `key=value` comment.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    pub fn meta_real(&self, key: &str) -> Result<f64> {
        let v = self
            .meta(key)
            .ok_or_else(|| self.error(0, format!("missing `# {key}=` metadata line")))?;
        v.parse()
            .map_err(|_| self.error(0, format!("metadata `{key}` is not a number: `{v}`")))
    }

    fn check_width(&self, line: usize, row: &[String], width: usize) -> Result<()> {
        if row.len() != width {
            return Err(self.error(line, format!("expected {width} fields, found {}", row.len())));
        }
        Ok(())
    }
}

fn parse_bool(t: &Table, line: usize, s: &str) -> Result<bool> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(t.error(line, format!("expected 0/1, found `{other}`"))),
    }
}

fn join_ids(ids: &[usize], names: &[String]) -> String {
    ids.iter().map(|&j| names[j].as_str()).collect::<Vec<_>>().join(",")
}

fn resolve_ids(t: &Table, list: &str, names: &[String]) -> Result<Vec<usize>> {
    if list.is_empty() {
        return Ok(Vec::new());
    }
    list.split(',')
        .map(|s| {
            names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| t.error(0, format!("unknown variable `{s}` in metadata")))
        })
        .collect()
}

/// Header of SNP ids, then one row of raw values per sample.
pub fn write_genotypes(path: &Path, x: &GenotypeMatrix) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    writeln!(w, "{}", x.snp_ids().join("\t")).map_err(&e)?;
    let raw = x.raw();
    let mut line = String::new();
    for i in 0..x.n_samples() {
        line.clear();
        for j in 0..x.n_snps() {
            if j > 0 {
                line.push('\t');
            }
            line.push_str(&fmt_genotype(raw[(i, j)]));
        }
        writeln!(w, "{line}").map_err(&e)?;
    }
    w.flush().map_err(&e)
}

/// Integral dosages are written without an exponent.
fn fmt_genotype(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        fmt_real(v)
    }
}

pub fn read_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    let t = Table::read(path)?;
    let Some((_, header)) = t.rows.first() else {
        return Err(t.error(0, "empty genotype file"));
    };
    let ids = header.clone();
    let p = ids.len();
    let body = &t.rows[1..];
    let n = body.len();
    let mut raw = Mat::<f64>::zeros(n, p);
    for (i, (line, row)) in body.iter().enumerate() {
        t.check_width(*line, row, p)?;
        for (j, field) in row.iter().enumerate() {
            raw[(i, j)] = t.real(*line, field)?;
        }
    }
    GenotypeMatrix::from_raw(raw, ids)
}

/// One phenotype value per line, no header.
pub fn write_phenotype(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    for v in y {
        writeln!(w, "{}", fmt_real(*v)).map_err(&e)?;
    }
    w.flush().map_err(&e)
}

pub fn read_phenotype(path: &Path) -> Result<Vec<f64>> {
    let t = Table::read(path)?;
    t.rows
        .iter()
        .map(|(line, row)| {
            t.check_width(*line, row, 1)?;
            t.real(*line, &row[0])
        })
        .collect()
}

/// Ground truth as read back from a truth file.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthFile {
    pub snp_ids: Vec<String>,
    pub beta: Vec<f64>,
    /// Zero-based causal indices in file order.
    pub causal: Vec<usize>,
    /// Zero-based interaction pairs with their effects.
    pub interactions: Vec<(usize, usize, f64)>,
}

const TRUTH_HEADER: [&str; 3] = ["snp_id", "beta", "is_causal"];

/// Per-SNP effects plus `# interaction` and `# variance` metadata lines.
pub fn write_truth(path: &Path, ids: &[String], truth: &SimTruth) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    let v = &truth.variance_report;
    writeln!(w, "# var_additive={}", fmt_real(v.additive)).map_err(&e)?;
    writeln!(w, "# var_interaction={}", fmt_real(v.interaction)).map_err(&e)?;
    writeln!(w, "# var_stratification={}", fmt_real(v.stratification)).map_err(&e)?;
    writeln!(w, "# var_noise={}", fmt_real(v.noise)).map_err(&e)?;
    for (&(a, b), g) in truth.interaction_pairs.iter().zip(&truth.gamma) {
        writeln!(w, "# interaction\t{}\t{}\t{}", ids[a], ids[b], fmt_real(*g)).map_err(&e)?;
    }
    writeln!(w, "{}", TRUTH_HEADER.join("\t")).map_err(&e)?;
    for (j, id) in ids.iter().enumerate() {
        let c = u8::from(truth.is_causal(j));
        writeln!(w, "{id}\t{}\t{c}", fmt_real(truth.beta[j])).map_err(&e)?;
    }
    w.flush().map_err(&e)
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let mut t = Table::read(path)?;
    t.expect_header(&TRUTH_HEADER)?;
    let mut out = TruthFile {
        snp_ids: Vec::new(),
        beta: Vec::new(),
        causal: Vec::new(),
        interactions: Vec::new(),
    };
    for (j, (line, row)) in t.rows.iter().enumerate() {
        t.check_width(*line, row, 3)?;
        out.snp_ids.push(row[0].clone());
        out.beta.push(t.real(*line, &row[1])?);
        if parse_bool(&t, *line, &row[2])? {
            out.causal.push(j);
        }
    }
    for c in &t.comments {
        if let Some(rest) = c.strip_prefix("interaction\t") {
            let f: Vec<&str> = rest.split('\t').collect();
            if f.len() != 3 {
                return Err(t.error(0, format!("malformed interaction line `{c}`")));
            }
            let find = |s: &str| {
                out.snp_ids
                    .iter()
                    .position(|id| id == s)
                    .ok_or_else(|| t.error(0, format!("unknown SNP `{s}` in interaction line")))
            };
            out.interactions.push((find(f[0])?, find(f[1])?, t.real(0, f[2])?));
        }
    }
    Ok(out)
}

const REPORT_HEADER: [&str; 4] = ["variable_id", "kld", "rate", "significant"];

/// Rows cover the variables still in play; `ids` names all original variables.
pub fn write_report(path: &Path, report: &CentralityReport, ids: &[String]) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    writeln!(w, "# delta={}", fmt_real(report.delta)).map_err(&e)?;
    writeln!(w, "# ess={}", fmt_real(report.ess)).map_err(&e)?;
    writeln!(w, "# p_effective={}", report.p_effective).map_err(&e)?;
    writeln!(w, "# nullified={}", join_ids(&report.nullified, ids)).map_err(&e)?;
    writeln!(w, "# clamped={}", report.clamped).map_err(&e)?;
    if report.quality_warning {
        writeln!(w, "# warning=more than 5% of KLDs were negative and clamped").map_err(&e)?;
    }
    if report.no_signal {
        writeln!(w, "# warning=no centrality signal; rates are uniform").map_err(&e)?;
    }
    writeln!(w, "{}", REPORT_HEADER.join("\t")).map_err(&e)?;
    for (k, &v) in report.variables.iter().enumerate() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            ids[v],
            fmt_real(report.kld[k]),
            fmt_real(report.rate[k]),
            u8::from(report.significant[k])
        )
        .map_err(&e)?;
    }
    w.flush().map_err(&e)
}

/// A report file as read back; `ids` are the row labels in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportFile {
    pub ids: Vec<String>,
    pub kld: Vec<f64>,
    pub rate: Vec<f64>,
    pub significant: Vec<bool>,
    pub delta: f64,
    pub ess: f64,
    pub p_effective: usize,
    pub nullified: Vec<String>,
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let mut t = Table::read(path)?;
    t.expect_header(&REPORT_HEADER)?;
    let mut out = ReportFile {
        ids: Vec::new(),
        kld: Vec::new(),
        rate: Vec::new(),
        significant: Vec::new(),
        delta: t.meta_real("delta")?,
        ess: t.meta_real("ess")?,
        p_effective: t.meta_real("p_effective")? as usize,
        nullified: t
            .meta("nullified")
            .filter(|s| !s.is_empty())
            .map(|s| s.split(',').map(str::to_string).collect())
            .unwrap_or_default(),
    };
    for (line, row) in &t.rows {
        t.check_width(*line, row, 4)?;
        out.ids.push(row[0].clone());
        out.kld.push(t.real(*line, &row[1])?);
        out.rate.push(t.real(*line, &row[2])?);
        out.significant.push(parse_bool(&t, *line, &row[3])?);
    }
    Ok(out)
}

/// Resolves report metadata names against the full id list.
pub fn report_nullified_indices(path: &Path, names: &[String]) -> Result<Vec<usize>> {
    let t = Table::read(path)?;
    resolve_ids(&t, t.meta("nullified").unwrap_or(""), names)
}

const SCAN_HEADER: [&str; 4] = ["variable_id", "beta", "t", "p_value"];

pub fn write_scan(path: &Path, scan: &ScanResult, ids: &[String]) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    writeln!(w, "# bonferroni_threshold={}", fmt_real(scan.bonferroni_threshold)).map_err(&e)?;
    writeln!(w, "{}", SCAN_HEADER.join("\t")).map_err(&e)?;
    for (j, id) in ids.iter().enumerate() {
        writeln!(
            w,
            "{id}\t{}\t{}\t{}",
            fmt_real(scan.betas[j]),
            fmt_real(scan.t_stats[j]),
            fmt_real(scan.p_values[j])
        )
        .map_err(&e)?;
    }
    w.flush().map_err(&e)
}

pub fn read_scan(path: &Path) -> Result<(Vec<String>, ScanResult)> {
    let mut t = Table::read(path)?;
    t.expect_header(&SCAN_HEADER)?;
    let mut ids = Vec::new();
    let mut scan = ScanResult {
        p_values: Vec::new(),
        betas: Vec::new(),
        t_stats: Vec::new(),
        bonferroni_threshold: t.meta_real("bonferroni_threshold")?,
    };
    for (line, row) in &t.rows {
        t.check_width(*line, row, 4)?;
        ids.push(row[0].clone());
        scan.betas.push(t.real(*line, &row[1])?);
        scan.t_stats.push(t.real(*line, &row[2])?);
        scan.p_values.push(t.real(*line, &row[3])?);
    }
    Ok((ids, scan))
}

/// ROC points with the AUC in a metadata line.
pub fn write_power(path: &Path, curve: &PowerCurve) -> Result<()> {
    write_curve(path, &curve.fpr, &curve.tpr, curve.auc, None)
}

/// Curve points with an AUC line and an optional standard error line.
pub fn write_curve(path: &Path, fpr: &[f64], tpr: &[f64], auc: f64, auc_se: Option<f64>) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    writeln!(w, "# auc={}", fmt_real(auc)).map_err(&e)?;
    if let Some(se) = auc_se {
        writeln!(w, "# auc_se={}", fmt_real(se)).map_err(&e)?;
    }
    writeln!(w, "fpr\ttpr").map_err(&e)?;
    for (a, b) in fpr.iter().zip(tpr) {
        writeln!(w, "{}\t{}", fmt_real(*a), fmt_real(*b)).map_err(&e)?;
    }
    w.flush().map_err(&e)
}

/// Returns `(fpr, tpr, auc)`.
pub fn read_curve(path: &Path) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut t = Table::read(path)?;
    t.expect_header(&["fpr", "tpr"])?;
    let auc = t.meta_real("auc")?;
    let mut fpr = Vec::new();
    let mut tpr = Vec::new();
    for (line, row) in &t.rows {
        t.check_width(*line, row, 2)?;
        fpr.push(t.real(*line, &row[0])?);
        tpr.push(t.real(*line, &row[1])?);
    }
    Ok((fpr, tpr, auc))
}

/// Retained draws: `iteration`, `tau2`, then `f_1..f_n`.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    let n = draws.n_samples();
    let mut header = vec!["iteration".to_string(), "tau2".to_string()];
    header.extend((1..=n).map(|i| format!("f_{i}")));
    writeln!(w, "{}", header.join("\t")).map_err(&e)?;
    let mut line = String::new();
    for t in 0..draws.n_draws() {
        line.clear();
        line.push_str(&draws.iterations()[t].to_string());
        line.push('\t');
        line.push_str(&fmt_real(draws.tau2_draws()[t]));
        for v in draws.f_draw(t) {
            line.push('\t');
            line.push_str(&fmt_real(*v));
        }
        writeln!(w, "{line}").map_err(&e)?;
    }
    w.flush().map_err(&e)
}

/// Posterior mean and marginal variance of each effect-size analog.
pub fn write_moments(path: &Path, post: &EffectSizePosterior, ids: &[String]) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    writeln!(w, "# n_draws={}", post.n_draws).map_err(&e)?;
    writeln!(w, "# rank_sigma={}", post.rank_sigma).map_err(&e)?;
    writeln!(w, "# ridge={}", fmt_real(post.ridge_applied)).map_err(&e)?;
    writeln!(w, "variable_id\tmu\tsigma_diag").map_err(&e)?;
    for (j, id) in ids.iter().enumerate() {
        writeln!(w, "{id}\t{}\t{}", fmt_real(post.mu[j]), fmt_real(post.sigma[(j, j)])).map_err(&e)?;
    }
    w.flush().map_err(&e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{roc_auc, scanone, Orientation};
    use crate::rate::report_from_klds;
    use crate::simdata::{simulate_genotypes, simulate_phenotype, SimConfig};

    #[test]
    fn reals_round_trip_bit_exact() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, f64::MIN_POSITIVE, f64::MAX, 123456.789] {
            assert_eq!(fmt_real(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn genotype_phenotype_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = simulate_genotypes(40, 6, (0.1, 0.5), 2).unwrap();
        let cfg = SimConfig::standard(40, 6, vec![3, 4, 5], 0.6, 0.5, 9);
        let truth = simulate_phenotype(&x, &cfg).unwrap();

        let gp = dir.path().join("g.tsv");
        write_genotypes(&gp, &x).unwrap();
        let x2 = read_genotypes(&gp).unwrap();
        assert_eq!(x2.values(), x.values());
        assert_eq!(x2.snp_ids(), x.snp_ids());

        let yp = dir.path().join("y.tsv");
        write_phenotype(&yp, &truth.y).unwrap();
        assert_eq!(read_phenotype(&yp).unwrap(), truth.y);

        let tp = dir.path().join("t.tsv");
        write_truth(&tp, x.snp_ids(), &truth).unwrap();
        let t2 = read_truth(&tp).unwrap();
        assert_eq!(t2.beta, truth.beta);
        assert_eq!(t2.causal, vec![3, 4, 5]);
        assert_eq!(t2.interactions.len(), 3);
        assert_eq!(t2.interactions[0].2, truth.gamma[0]);
    }

    #[test]
    fn report_scan_curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = (1..=4).map(|j| format!("v{j}")).collect();
        let r = report_from_klds(vec![0, 2, 3], &[0.1, 0.7, 0.2], vec![1]);
        let rp = dir.path().join("r.tsv");
        write_report(&rp, &r, &ids).unwrap();
        let r2 = read_report(&rp).unwrap();
        assert_eq!(r2.rate, r.rate);
        assert_eq!(r2.kld, r.kld);
        assert_eq!(r2.delta, r.delta);
        assert_eq!(r2.ess, r.ess);
        assert_eq!(r2.ids, vec!["v1", "v3", "v4"]);
        assert_eq!(r2.nullified, vec!["v2"]);
        assert_eq!(report_nullified_indices(&rp, &ids).unwrap(), vec![1]);

        let x = simulate_genotypes(30, 4, (0.1, 0.5), 3).unwrap();
        let y: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let s = scanone(&x, &y).unwrap();
        let sp = dir.path().join("s.tsv");
        write_scan(&sp, &s, x.snp_ids()).unwrap();
        assert_eq!(read_scan(&sp).unwrap().1, s);

        let c = roc_auc(&[0.3, 0.1, 0.9, 0.5], Orientation::HigherIsStronger, &[2]).unwrap();
        let cp = dir.path().join("c.tsv");
        write_power(&cp, &c).unwrap();
        assert_eq!(read_curve(&cp).unwrap(), (c.fpr.clone(), c.tpr.clone(), c.auc));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        std::fs::write(&p, "a\tb\n1\t2\n3\tx\n").unwrap();
        let err = read_genotypes(&p).unwrap_err().to_string();
        assert!(err.contains("bad.tsv:3"), "{err}");
        let missing = dir.path().join("missing.tsv");
        assert!(matches!(read_phenotype(&missing), Err(RateError::File { .. })));
    }
}
