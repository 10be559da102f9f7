//! Synthetic genotypes and phenotypes.
//!
//! Genotypes are 0/1/2 allele dosages drawn per SNP from a binomial with a
//! SNP-specific allele frequency, either independently across samples or from
//! Balding–Nichols subpopulation frequencies. Phenotypes follow
//!
//! ```text
//! standard:    y = Xβ + Wγ + ε
//! stratified:  y = Zω + Xβ + Wγ + ε
//! ```
//!
//! where `W` holds element-wise products of causal genotype columns and `Z`
//! holds the leading principal components of `X`. Every component is
//! rescaled by its realized sample standard deviation so the variance budget
//! (H², ρ, PC fraction) holds exactly on each draw.

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, StandardNormal};

use crate::error::{RateError, Result};
use crate::linalg;

/// Constant columns are redrawn at most this many times.
pub const MAX_REDRAWS: usize = 100;

/// Ancestral allele-frequency range used for structured genotypes.
pub const DEFAULT_FREQ_RANGE: (f64, f64) = (0.05, 0.5);

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Column-standardized design matrix (mean 0, sample standard deviation 1).
#[derive(Clone, Debug)]
pub struct GenotypeMatrix {
    values: Mat<f64>,
    /// Values as supplied, before standardization.
    raw: Mat<f64>,
    snp_ids: Vec<String>,
    raw_frequencies: Option<Vec<f64>>,
}

impl GenotypeMatrix {
    /// Standardizes every column of `raw`. Constant columns are rejected.
    pub fn from_raw(raw: Mat<f64>, snp_ids: Vec<String>) -> Result<Self> {
        let (n, p) = (raw.nrows(), raw.ncols());
        if n < 2 {
            return Err(RateError::param("n", format!("need at least 2 samples, got {n}")));
        }
        if p < 2 {
            return Err(RateError::param("p", format!("need at least 2 SNPs, got {p}")));
        }
        if snp_ids.len() != p {
            return Err(RateError::DimensionMismatch {
                context: "snp ids",
                expected: p,
                found: snp_ids.len(),
            });
        }
        if !linalg::is_finite(raw.as_ref()) {
            return Err(RateError::NonFinite {
                what: "genotype matrix",
                detail: "input contains NaN or infinity".into(),
            });
        }
        let mut values = raw.clone();
        for j in 0..p {
            if !standardize_column(values.col_as_slice_mut(j)) {
                return Err(RateError::DegenerateColumn {
                    column: j,
                    id: snp_ids[j].clone(),
                    attempts: 0,
                });
            }
        }
        Ok(GenotypeMatrix {
            values,
            raw,
            snp_ids,
            raw_frequencies: None,
        })
    }

    pub fn with_frequencies(mut self, freqs: Vec<f64>) -> Self {
        debug_assert_eq!(freqs.len(), self.n_snps());
        self.raw_frequencies = Some(freqs);
        self
    }

    pub fn values(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    /// Unstandardized input (dosages for simulated data).
    pub fn raw(&self) -> MatRef<'_, f64> {
        self.raw.as_ref()
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_snps(&self) -> usize {
        self.values.ncols()
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn raw_frequencies(&self) -> Option<&[f64]> {
        self.raw_frequencies.as_deref()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.values.col_as_slice(j)
    }

    /// Copy of the rows listed in `order`, in that order.
    pub fn permute_samples(&self, order: &[usize]) -> GenotypeMatrix {
        let p = self.n_snps();
        GenotypeMatrix {
            values: Mat::from_fn(order.len(), p, |i, j| self.values[(order[i], j)]),
            raw: Mat::from_fn(order.len(), p, |i, j| self.raw[(order[i], j)]),
            snp_ids: self.snp_ids.clone(),
            raw_frequencies: self.raw_frequencies.clone(),
        }
    }
}

/// Default SNP labels `snp1..snpP`, numbered from one.
pub fn default_snp_ids(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("snp{j}")).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Centers and scales in place; returns false for a (numerically) constant column.
pub fn standardize_column(col: &mut [f64]) -> bool {
    let m = mean(col);
    for x in col.iter_mut() {
        *x -= m;
    }
    let sd = sample_variance(col).sqrt();
    let scale = col.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if !(sd > 1e-12 * scale.max(1.0)) {
        return false;
    }
    for x in col.iter_mut() {
        *x /= sd;
    }
    true
}

fn check_dims(n: usize, p: usize) -> Result<()> {
    if n < 2 {
        return Err(RateError::param("n", format!("must be at least 2, got {n}")));
    }
    if p < 2 {
        return Err(RateError::param("p", format!("must be at least 2, got {p}")));
    }
    Ok(())
}

fn constant(col: &[f64]) -> bool {
    col.iter().all(|&x| x == col[0])
}

/// Raw 0/1/2 dosages and the allele frequency used for each column.
///
/// Columns that come out constant are redrawn (with a fresh frequency) up to
/// [`MAX_REDRAWS`] times.
pub fn simulate_dosages(
    n: usize,
    p: usize,
    freq_range: (f64, f64),
    seed: u64,
) -> Result<(Mat<f64>, Vec<f64>)> {
    check_dims(n, p)?;
    let (lo, hi) = freq_range;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(RateError::param(
            "freq_range",
            format!("need 0 < lo < hi < 1, got ({lo}, {hi})"),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut raw = Mat::<f64>::zeros(n, p);
    let mut freqs = vec![0.0; p];
    for j in 0..p {
        let mut attempts = 0;
        loop {
            let f = rng.random_range(lo..hi);
            let binom = Binomial::new(2, f).expect("frequency in (0,1)");
            let col = raw.col_as_slice_mut(j);
            for x in col.iter_mut() {
                *x = binom.sample(&mut rng) as f64;
            }
            freqs[j] = f;
            attempts += 1;
            if !constant(col) {
                break;
            }
            if attempts > MAX_REDRAWS {
                return Err(RateError::DegenerateColumn {
                    column: j,
                    id: format!("snp{}", j + 1),
                    attempts,
                });
            }
        }
    }
    Ok((raw, freqs))
}

/// Independent genotypes with per-SNP frequencies uniform on `freq_range`.
pub fn simulate_genotypes(
    n: usize,
    p: usize,
    freq_range: (f64, f64),
    seed: u64,
) -> Result<GenotypeMatrix> {
    let (raw, freqs) = simulate_dosages(n, p, freq_range, seed)?;
    Ok(GenotypeMatrix::from_raw(raw, default_snp_ids(p))?.with_frequencies(freqs))
}

/// Subpopulation label for sample `i` under equal block assignment.
pub fn subpopulation_of(i: usize, n: usize, n_subpops: usize) -> usize {
    i * n_subpops / n
}

/// Genotypes with Balding–Nichols population structure.
///
/// Each SNP gets an ancestral frequency `q` uniform on
/// [`DEFAULT_FREQ_RANGE`]; subpopulation frequencies are drawn from
/// `Beta(q(1-F)/F, (1-q)(1-F)/F)` with `F = fst`. Samples are assigned to
/// subpopulations in contiguous equal blocks. The recorded frequencies are
/// the ancestral ones.
pub fn simulate_structured_genotypes(
    n: usize,
    p: usize,
    n_subpops: usize,
    fst: f64,
    seed: u64,
) -> Result<GenotypeMatrix> {
    check_dims(n, p)?;
    if n_subpops < 2 {
        return Err(RateError::param(
            "n_subpops",
            format!("need at least 2 subpopulations, got {n_subpops}"),
        ));
    }
    if n_subpops > n {
        return Err(RateError::param(
            "n_subpops",
            format!("{n_subpops} subpopulations exceed {n} samples"),
        ));
    }
    if !(fst > 0.0 && fst < 0.5) {
        return Err(RateError::param("fst", format!("must lie in (0, 0.5), got {fst}")));
    }
    let (lo, hi) = DEFAULT_FREQ_RANGE;
    let mut rng = rng_from_seed(seed);
    let mut raw = Mat::<f64>::zeros(n, p);
    let mut freqs = vec![0.0; p];
    let drift = (1.0 - fst) / fst;
    for j in 0..p {
        let mut attempts = 0;
        loop {
            let q = rng.random_range(lo..hi);
            let beta = Beta::new(q * drift, (1.0 - q) * drift).map_err(|e| {
                RateError::param("fst", format!("invalid Balding-Nichols parameters: {e}"))
            })?;
            let sub: Vec<Binomial> = (0..n_subpops)
                .map(|_| {
                    let f: f64 = beta.sample(&mut rng);
                    Binomial::new(2, f.clamp(0.0, 1.0)).expect("clamped frequency")
                })
                .collect();
            let col = raw.col_as_slice_mut(j);
            for (i, x) in col.iter_mut().enumerate() {
                *x = sub[subpopulation_of(i, n, n_subpops)].sample(&mut rng) as f64;
            }
            freqs[j] = q;
            attempts += 1;
            if !constant(col) {
                break;
            }
            if attempts > MAX_REDRAWS {
                return Err(RateError::DegenerateColumn {
                    column: j,
                    id: format!("snp{}", j + 1),
                    attempts,
                });
            }
        }
    }
    Ok(GenotypeMatrix::from_raw(raw, default_snp_ids(p))?.with_frequencies(freqs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhenotypeModel {
    /// `y = Xβ + Wγ + ε`
    Standard,
    /// `y = Zω + Xβ + Wγ + ε` with `Z` the leading genotype PCs.
    Stratified,
}

/// Partition of the causal set; interactions are formed only across groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSplit {
    pub group1: Vec<usize>,
    pub group2: Vec<usize>,
}

impl GroupSplit {
    /// First `k` causal indices form group 1, the rest group 2.
    pub fn first_k(causal: &[usize], k: usize) -> Self {
        GroupSplit {
            group1: causal[..k.min(causal.len())].to_vec(),
            group2: causal[k.min(causal.len())..].to_vec(),
        }
    }
}

/// How causal additive effects are drawn before rescaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EffectDraw {
    /// `β_j ~ N(0, 1)` on the causal set.
    Gaussian,
    /// Every causal effect equals the given value.
    Constant(f64),
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Zero-based causal SNP indices.
    pub causal_indices: Vec<usize>,
    pub h2: f64,
    pub rho: f64,
    pub model: PhenotypeModel,
    pub n_pcs: usize,
    pub pc_variance_fraction: f64,
    pub group_split: Option<GroupSplit>,
    pub effects: EffectDraw,
    pub seed: u64,
}

impl SimConfig {
    pub fn standard(n: usize, p: usize, causal_indices: Vec<usize>, h2: f64, rho: f64, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            causal_indices,
            h2,
            rho,
            model: PhenotypeModel::Standard,
            n_pcs: 0,
            pc_variance_fraction: 0.0,
            group_split: None,
            effects: EffectDraw::Gaussian,
            seed,
        }
    }

    pub fn validate(&self, x: &GenotypeMatrix) -> Result<()> {
        if self.n != x.n_samples() {
            return Err(RateError::DimensionMismatch {
                context: "simulation sample count",
                expected: x.n_samples(),
                found: self.n,
            });
        }
        if self.p != x.n_snps() {
            return Err(RateError::DimensionMismatch {
                context: "simulation SNP count",
                expected: x.n_snps(),
                found: self.p,
            });
        }
        if let Some(&bad) = self.causal_indices.iter().find(|&&j| j >= self.p) {
            return Err(RateError::param(
                "causal",
                format!("index {bad} out of range for {} SNPs", self.p),
            ));
        }
        let mut sorted = self.causal_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.causal_indices.len() {
            return Err(RateError::param("causal", "duplicate causal indices"));
        }
        if !(0.0..1.0).contains(&self.h2) {
            return Err(RateError::param("h2", format!("must lie in [0, 1), got {}", self.h2)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(RateError::param("rho", format!("must lie in (0, 1], got {}", self.rho)));
        }
        if self.h2 > 0.0 && self.causal_indices.is_empty() {
            return Err(RateError::param("causal", "h2 > 0 requires at least one causal SNP"));
        }
        if self.h2 > 0.0 && self.rho < 1.0 && self.causal_indices.len() < 2 {
            return Err(RateError::param(
                "rho",
                "rho < 1 needs at least two causal SNPs to form interactions",
            ));
        }
        if let Some(split) = &self.group_split {
            let mut all: Vec<usize> = split.group1.iter().chain(&split.group2).copied().collect();
            all.sort_unstable();
            let before = all.len();
            all.dedup();
            if all != sorted || before != all.len() {
                return Err(RateError::param(
                    "groups",
                    "group split must partition the causal set",
                ));
            }
            if self.h2 > 0.0 && self.rho < 1.0 && (split.group1.is_empty() || split.group2.is_empty()) {
                return Err(RateError::param("groups", "both groups must be non-empty"));
            }
        }
        if let EffectDraw::Constant(c) = self.effects {
            if !(c.is_finite() && c != 0.0) {
                return Err(RateError::param("beta", "constant effect must be finite and non-zero"));
            }
        }
        if self.model == PhenotypeModel::Stratified {
            if self.n_pcs == 0 || self.n_pcs > self.n.min(self.p) {
                return Err(RateError::param(
                    "pcs",
                    format!("need 1 <= n_pcs <= min(n, p), got {}", self.n_pcs),
                ));
            }
            if !(self.pc_variance_fraction > 0.0 && self.h2 + self.pc_variance_fraction <= 1.0) {
                return Err(RateError::param(
                    "pc_var",
                    format!(
                        "need 0 < pc_var <= 1 - h2, got {} with h2 = {}",
                        self.pc_variance_fraction, self.h2
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Interaction pairs implied by the causal set and optional group split.
    pub fn interaction_pairs(&self) -> Vec<(usize, usize)> {
        match &self.group_split {
            Some(split) => split
                .group1
                .iter()
                .flat_map(|&a| split.group2.iter().map(move |&b| (a.min(b), a.max(b))))
                .collect(),
            None => {
                let c = &self.causal_indices;
                let mut pairs = Vec::new();
                for a in 0..c.len() {
                    for b in (a + 1)..c.len() {
                        pairs.push((c[a].min(c[b]), c[a].max(c[b])));
                    }
                }
                pairs
            }
        }
    }
}

/// Achieved sample variance of each phenotype component.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VarianceReport {
    pub additive: f64,
    pub interaction: f64,
    pub stratification: f64,
    pub noise: f64,
}

impl VarianceReport {
    pub fn total(&self) -> f64 {
        self.additive + self.interaction + self.stratification + self.noise
    }
}

#[derive(Clone, Debug)]
pub struct SimTruth {
    /// Rescaled additive effects, zero off the causal set.
    pub beta: Vec<f64>,
    pub causal_indices: Vec<usize>,
    /// Rescaled interaction effects, one per pair.
    pub gamma: Vec<f64>,
    pub interaction_pairs: Vec<(usize, usize)>,
    /// Rescaled PC effects (empty for the standard model).
    pub omega: Vec<f64>,
    pub y: Vec<f64>,
    pub additive: Vec<f64>,
    pub interaction: Vec<f64>,
    pub stratification: Vec<f64>,
    pub noise: Vec<f64>,
    pub variance_report: VarianceReport,
}

impl SimTruth {
    pub fn is_causal(&self, j: usize) -> bool {
        self.causal_indices.contains(&j)
    }
}

/// Rescales `v` so its sample variance equals `target`; returns the factor used.
fn rescale(v: &mut [f64], target: f64, what: &'static str) -> Result<f64> {
    if target == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return Ok(0.0);
    }
    let sd = sample_variance(v).sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(RateError::DegenerateDesign(format!("{what} component has zero variance")));
    }
    let factor = target.sqrt() / sd;
    v.iter_mut().for_each(|x| *x *= factor);
    Ok(factor)
}

fn standard_normals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample(StandardNormal)).collect()
}

/// Top `k` principal component scores of the standardized genotypes.
///
/// Each component is oriented so that the loading with the largest
/// magnitude is positive.
pub fn genotype_pcs(x: &GenotypeMatrix, k: usize) -> Result<Mat<f64>> {
    let svd = linalg::thin_svd(x.values())?;
    let n = x.n_samples();
    let mut z = Mat::<f64>::zeros(n, k);
    for c in 0..k {
        let v = svd.v.col(c);
        let mut lead = 0;
        for i in 0..v.nrows() {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            z[(i, c)] = sign * svd.u[(i, c)] * svd.s[c];
        }
    }
    Ok(z)
}

/// Simulates a phenotype on `x` under `cfg`.
pub fn simulate_phenotype(x: &GenotypeMatrix, cfg: &SimConfig) -> Result<SimTruth> {
    cfg.validate(x)?;
    let (n, p) = (x.n_samples(), x.n_snps());
    let mut rng = rng_from_seed(cfg.seed);
    let xv = x.values();

    // Additive part.
    let mut beta = vec![0.0; p];
    for &j in &cfg.causal_indices {
        beta[j] = match cfg.effects {
            EffectDraw::Gaussian => rng.sample(StandardNormal),
            EffectDraw::Constant(c) => c,
        };
    }
    let mut additive = vec![0.0; n];
    let rho_target = if cfg.causal_indices.is_empty() { 0.0 } else { cfg.rho * cfg.h2 };
    if rho_target > 0.0 {
        additive = linalg::mat_vec(xv, &beta);
    }
    let factor = rescale(&mut additive, rho_target, "additive")?;
    beta.iter_mut().for_each(|b| *b *= factor);

    // Pairwise interactions among causal SNPs.
    let inter_target = (1.0 - cfg.rho) * cfg.h2;
    let (interaction_pairs, mut gamma, mut interaction) = if inter_target > 0.0 {
        let pairs = cfg.interaction_pairs();
        let mut w = Mat::<f64>::zeros(n, pairs.len());
        for (c, &(a, b)) in pairs.iter().enumerate() {
            let (ca, cb) = (x.column(a), x.column(b));
            let col = w.col_as_slice_mut(c);
            for i in 0..n {
                col[i] = ca[i] * cb[i];
            }
            if !standardize_column(col) {
                return Err(RateError::DegenerateDesign(format!(
                    "interaction column for SNPs {} and {} is constant",
                    a + 1,
                    b + 1
                )));
            }
        }
        let gamma = standard_normals(&mut rng, pairs.len());
        let wg = linalg::mat_vec(w.as_ref(), &gamma);
        (pairs, gamma, wg)
    } else {
        (Vec::new(), Vec::new(), vec![0.0; n])
    };
    let factor = rescale(&mut interaction, inter_target, "interaction")?;
    gamma.iter_mut().for_each(|g| *g *= factor);

    // Population structure through genotype PCs.
    let (mut omega, mut stratification) = match cfg.model {
        PhenotypeModel::Standard => (Vec::new(), vec![0.0; n]),
        PhenotypeModel::Stratified => {
            let z = genotype_pcs(x, cfg.n_pcs)?;
            let omega = standard_normals(&mut rng, cfg.n_pcs);
            let zw = linalg::mat_vec(z.as_ref(), &omega);
            (omega, zw)
        }
    };
    let strat_target = match cfg.model {
        PhenotypeModel::Standard => 0.0,
        PhenotypeModel::Stratified => cfg.pc_variance_fraction,
    };
    let factor = rescale(&mut stratification, strat_target, "stratification")?;
    omega.iter_mut().for_each(|w| *w *= factor);

    let noise_target = (1.0 - cfg.h2 - strat_target).max(0.0);
    let mut noise = standard_normals(&mut rng, n);
    rescale(&mut noise, noise_target, "noise")?;

    let y: Vec<f64> = (0..n)
        .map(|i| stratification[i] + additive[i] + interaction[i] + noise[i])
        .collect();
    let variance_report = VarianceReport {
        additive: sample_variance(&additive),
        interaction: sample_variance(&interaction),
        stratification: sample_variance(&stratification),
        noise: sample_variance(&noise),
    };
    Ok(SimTruth {
        beta,
        causal_indices: cfg.causal_indices.clone(),
        gamma,
        interaction_pairs,
        omega,
        y,
        additive,
        interaction,
        stratification,
        noise,
        variance_report,
    })
}

/// Draws `k` distinct causal indices out of `p`, returned in sampled order.
pub fn random_causal_set(p: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > p {
        return Err(RateError::param("causal", format!("cannot choose {k} of {p} SNPs")));
    }
    let mut rng = rng_from_seed(seed);
    let mut all: Vec<usize> = (0..p).collect();
    all.shuffle(&mut rng);
    all.truncate(k);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_stats(x: &GenotypeMatrix, j: usize) -> (f64, f64) {
        let c = x.column(j);
        (mean(c), sample_variance(c).sqrt())
    }

    #[test]
    fn genotypes_are_standardized() {
        let x = simulate_genotypes(2000, 25, (0.05, 0.5), 11).unwrap();
        assert_eq!((x.n_samples(), x.n_snps()), (2000, 25));
        for j in 0..25 {
            let (m, sd) = col_stats(&x, j);
            assert!(m.abs() < 1e-10, "column {j} mean {m}");
            assert!((sd - 1.0).abs() < 1e-10, "column {j} sd {sd}");
        }
        let f = x.raw_frequencies().unwrap();
        assert!(f.iter().all(|&v| (0.05..0.5).contains(&v)));
    }

    #[test]
    fn tiny_matrix_is_deterministic() {
        let a = simulate_genotypes(2, 2, (0.49, 0.5), 3).unwrap();
        let b = simulate_genotypes(2, 2, (0.49, 0.5), 3).unwrap();
        assert_eq!(a.values(), b.values());
        for j in 0..2 {
            assert!(col_stats(&a, j).0.abs() < 1e-12);
        }
    }

    #[test]
    fn raw_dosages_in_binomial_support() {
        let (raw, _) = simulate_dosages(500, 10, (0.05, 0.5), 5).unwrap();
        for j in 0..10 {
            assert!(raw.col_as_slice(j).iter().all(|&d| d == 0.0 || d == 1.0 || d == 2.0));
        }
    }

    #[test]
    fn bad_frequency_range_rejected() {
        assert!(simulate_genotypes(10, 3, (0.5, 0.4), 1).is_err());
        assert!(simulate_genotypes(10, 3, (0.0, 0.4), 1).is_err());
        assert!(simulate_genotypes(1, 3, (0.1, 0.4), 1).is_err());
    }

    #[test]
    fn constant_column_rejected_with_name() {
        let raw = Mat::from_fn(4, 2, |i, j| if j == 0 { i as f64 } else { 1.0 });
        let err = GenotypeMatrix::from_raw(raw, vec!["a".into(), "b".into()]).unwrap_err();
        assert!(err.to_string().contains("(b)"), "{err}");
    }

    #[test]
    fn single_subpopulation_rejected() {
        assert!(simulate_structured_genotypes(100, 10, 1, 0.1, 1).is_err());
        assert!(simulate_structured_genotypes(100, 10, 2, 0.0, 1).is_err());
        assert!(simulate_structured_genotypes(100, 10, 2, 0.5, 1).is_err());
    }

    #[test]
    fn restandardizing_is_idempotent() {
        let x = simulate_genotypes(300, 8, (0.05, 0.5), 2).unwrap();
        let again = GenotypeMatrix::from_raw(x.values().to_owned(), x.snp_ids().to_vec()).unwrap();
        for j in 0..8 {
            for i in 0..300 {
                assert!((x.values()[(i, j)] - again.values()[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn proof_of_concept_budget() {
        let x = simulate_genotypes(2000, 25, (0.05, 0.5), 1).unwrap();
        let cfg = SimConfig::standard(2000, 25, vec![22, 23, 24], 0.6, 1.0, 7);
        let t = simulate_phenotype(&x, &cfg).unwrap();
        let v = t.variance_report;
        assert!((v.additive - 0.6).abs() < 1e-10);
        assert_eq!(v.interaction, 0.0);
        assert!(t.interaction_pairs.is_empty());
        assert!((v.total() - 1.0).abs() < 1e-8);
        assert!(t.beta.iter().enumerate().all(|(j, &b)| (b != 0.0) == (j >= 22)));
    }

    #[test]
    fn equal_split_between_additive_and_interaction() {
        let x = simulate_genotypes(1000, 25, (0.05, 0.5), 2).unwrap();
        let cfg = SimConfig::standard(1000, 25, vec![22, 23, 24], 0.6, 0.5, 9);
        let t = simulate_phenotype(&x, &cfg).unwrap();
        let v = t.variance_report;
        assert!((v.additive - 0.3).abs() < 1e-10);
        assert!((v.interaction - 0.3).abs() < 1e-10);
        assert_eq!(t.interaction_pairs, vec![(22, 23), (22, 24), (23, 24)]);
    }

    #[test]
    fn zero_heritability_is_pure_noise() {
        let x = simulate_genotypes(200, 5, (0.05, 0.5), 2).unwrap();
        let cfg = SimConfig::standard(200, 5, vec![], 0.0, 1.0, 1);
        let t = simulate_phenotype(&x, &cfg).unwrap();
        assert_eq!(t.variance_report.additive, 0.0);
        assert_eq!(t.variance_report.interaction, 0.0);
        assert_eq!(t.y, t.noise);
        assert!((t.variance_report.noise - 1.0).abs() < 1e-10);
    }

    #[test]
    fn interactions_need_two_causal() {
        let x = simulate_genotypes(100, 5, (0.05, 0.5), 2).unwrap();
        let cfg = SimConfig::standard(100, 5, vec![1], 0.5, 0.5, 1);
        assert!(simulate_phenotype(&x, &cfg).is_err());
    }

    #[test]
    fn group_split_forms_only_cross_pairs() {
        let causal: Vec<usize> = (0..30).collect();
        let mut cfg = SimConfig::standard(50, 40, causal.clone(), 0.3, 0.5, 1);
        cfg.group_split = Some(GroupSplit::first_k(&causal, 5));
        let pairs = cfg.interaction_pairs();
        assert_eq!(pairs.len(), 125);
        for (a, b) in pairs {
            assert!(a < 5 && b >= 5, "within-group pair ({a}, {b})");
        }
    }

    #[test]
    fn stratified_budget() {
        let x = simulate_structured_genotypes(300, 60, 3, 0.1, 4).unwrap();
        let causal = random_causal_set(60, 30, 8).unwrap();
        let mut cfg = SimConfig::standard(300, 60, causal.clone(), 0.3, 0.5, 3);
        cfg.model = PhenotypeModel::Stratified;
        cfg.n_pcs = 5;
        cfg.pc_variance_fraction = 0.3;
        cfg.group_split = Some(GroupSplit::first_k(&causal, 5));
        let t = simulate_phenotype(&x, &cfg).unwrap();
        let v = t.variance_report;
        assert!((v.additive - 0.15).abs() < 1e-10);
        assert!((v.interaction - 0.15).abs() < 1e-10);
        assert!((v.stratification - 0.3).abs() < 1e-10);
        assert!((v.noise - 0.4).abs() < 1e-10);
        assert_eq!(t.omega.len(), 5);
    }

    #[test]
    fn pc_fraction_beyond_budget_rejected() {
        let x = simulate_genotypes(100, 10, (0.05, 0.5), 2).unwrap();
        let mut cfg = SimConfig::standard(100, 10, vec![1, 2], 0.6, 1.0, 1);
        cfg.model = PhenotypeModel::Stratified;
        cfg.n_pcs = 2;
        cfg.pc_variance_fraction = 0.5;
        assert!(simulate_phenotype(&x, &cfg).is_err());
    }

    #[test]
    fn pc_sign_convention() {
        let x = simulate_genotypes(80, 12, (0.05, 0.5), 6).unwrap();
        let z = genotype_pcs(&x, 3).unwrap();
        // Scores equal X v with v oriented so its largest entry is positive.
        let svd = linalg::thin_svd(x.values()).unwrap();
        for c in 0..3 {
            let v = svd.v.col(c);
            let lead = (0..12).max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap()).unwrap();
            let sign = v[lead].signum();
            let xv = linalg::mat_vec(x.values(), &(0..12).map(|i| sign * v[i]).collect::<Vec<_>>());
            for i in 0..80 {
                assert!((z[(i, c)] - xv[i]).abs() < 1e-9);
            }
        }
    }
}
