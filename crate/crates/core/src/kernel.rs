//! Sample covariance matrices for the GP prior.

use faer::{Mat, MatRef};

use crate::error::{RateError, Result};
use crate::simdata::GenotypeMatrix;

pub const DEFAULT_JITTER: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind {
    /// `k(x, x') = exp(-||x - x'||² / (2θ²))`
    Gaussian,
    /// `K = X Xᵀ / p`
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Gaussian bandwidth θ; `None` selects the median heuristic.
    pub bandwidth: Option<f64>,
    /// Added to the diagonal after the kernel is evaluated.
    pub jitter: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::Gaussian,
            bandwidth: None,
            jitter: DEFAULT_JITTER,
        }
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(theta) = self.bandwidth {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(RateError::param("bandwidth", format!("must be positive, got {theta}")));
            }
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(RateError::param("jitter", format!("must be non-negative, got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Symmetric `n × n` kernel matrix with the `KernelSpec` that produced it.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    values: Mat<f64>,
    spec: KernelSpec,
}

impl CovarianceMatrix {
    /// Wraps an explicit matrix (used for custom kernels and tests).
    pub fn from_matrix(values: Mat<f64>, spec: KernelSpec) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(RateError::DimensionMismatch {
                context: "covariance matrix columns",
                expected: values.nrows(),
                found: values.ncols(),
            });
        }
        if !crate::linalg::is_finite(values.as_ref()) {
            return Err(RateError::NonFinite {
                what: "covariance matrix",
                detail: "entries contain NaN or infinity".into(),
            });
        }
        Ok(CovarianceMatrix { values, spec })
    }

    pub fn values(&self) -> MatRef<'_, f64> {
        self.values.as_ref()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Rows and columns reordered by `order`.
    pub fn permute(&self, order: &[usize]) -> CovarianceMatrix {
        CovarianceMatrix {
            values: Mat::from_fn(order.len(), order.len(), |i, j| self.values[(order[i], order[j])]),
            spec: self.spec,
        }
    }
}

fn squared_distance(x: MatRef<'_, f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..x.ncols() {
        let d = x[(a, j)] - x[(b, j)];
        s += d * d;
    }
    s
}

/// Median of the `n(n-1)/2` pairwise Euclidean distances between rows.
///
/// Self-distances are excluded; an even number of pairs averages the two
/// middle order statistics.
pub fn median_heuristic(x: &GenotypeMatrix) -> Result<f64> {
    median_pairwise_distance(x.values())
}

pub fn median_pairwise_distance(x: MatRef<'_, f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(RateError::DegenerateDesign("need at least two rows".into()));
    }
    // Row-major copy keeps the inner loop contiguous.
    let p = x.ncols();
    let rows: Vec<f64> = (0..n).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| x[(i, j)]).collect();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        let ra = &rows[a * p..(a + 1) * p];
        for b in (a + 1)..n {
            let rb = &rows[b * p..(b + 1) * p];
            let s: f64 = ra.iter().zip(rb).map(|(u, v)| (u - v) * (u - v)).sum();
            d.push(s.sqrt());
        }
    }
    let m = d.len();
    let cmp = |u: &f64, v: &f64| u.total_cmp(v);
    let median = if m % 2 == 1 {
        *d.select_nth_unstable_by(m / 2, cmp).1
    } else {
        let (lower, hi, _) = d.select_nth_unstable_by(m / 2, cmp);
        let hi = *hi;
        let lo = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if !(median > 0.0) {
        return Err(RateError::DegenerateDesign(
            "median pairwise distance is zero (rows are identical)".into(),
        ));
    }
    Ok(median)
}

/// Evaluates the kernel over all sample pairs and adds the diagonal jitter.
pub fn build_covariance(x: &GenotypeMatrix, spec: KernelSpec) -> Result<CovarianceMatrix> {
    spec.validate()?;
    let xv = x.values();
    let n = xv.nrows();
    let (mut k, resolved) = match spec.kind {
        KernelKind::Gaussian => {
            let theta = match spec.bandwidth {
                Some(t) => t,
                None => median_heuristic(x)?,
            };
            let scale = 1.0 / (2.0 * theta * theta);
            let mut k = Mat::<f64>::zeros(n, n);
            for j in 0..n {
                k[(j, j)] = 1.0;
                for i in (j + 1)..n {
                    let v = (-squared_distance(xv, i, j) * scale).exp();
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            (k, KernelSpec { bandwidth: Some(theta), ..spec })
        }
        KernelKind::Linear => {
            let inv_p = 1.0 / xv.ncols() as f64;
            let mut k = xv * xv.transpose();
            for j in 0..n {
                for i in 0..n {
                    k[(i, j)] *= inv_p;
                }
            }
            crate::linalg::symmetrize(&mut k);
            (k, spec)
        }
    };
    for i in 0..n {
        k[(i, i)] += resolved.jitter;
    }
    CovarianceMatrix::from_matrix(k, resolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{default_snp_ids, simulate_genotypes};

    fn raw(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn median_of_single_pair() {
        let m = raw(&[&[0.0, 0.0], &[3.0, 4.0]]);
        assert_eq!(median_pairwise_distance(m.as_ref()).unwrap(), 5.0);
    }

    #[test]
    fn median_of_odd_count() {
        let m = raw(&[&[0.0], &[1.0], &[3.0]]);
        assert_eq!(median_pairwise_distance(m.as_ref()).unwrap(), 2.0);
    }

    #[test]
    fn median_of_even_count_averages() {
        // distances {1, 2, 3, 1, 2, 1} -> sorted {1,1,1,2,2,3} -> (1+2)/2
        let m = raw(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        assert_eq!(median_pairwise_distance(m.as_ref()).unwrap(), 1.5);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let m = raw(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert!(matches!(
            median_pairwise_distance(m.as_ref()),
            Err(RateError::DegenerateDesign(_))
        ));
    }

    #[test]
    fn median_matches_brute_force_double_loop() {
        let x = simulate_genotypes(2000, 25, (0.05, 0.5), 3).unwrap();
        let xv = x.values();
        let mut d = Vec::new();
        for i in 0..2000 {
            for j in 0..i {
                let mut s = 0.0;
                for c in 0..25 {
                    s += (xv[(i, c)] - xv[(j, c)]).powi(2);
                }
                d.push(s.sqrt());
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = d.len();
        let brute = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
        assert!((median_heuristic(&x).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn gaussian_diagonal_is_one_plus_jitter() {
        let x = simulate_genotypes(40, 6, (0.05, 0.5), 1).unwrap();
        for jitter in [0.0, 1e-6] {
            let k = build_covariance(&x, KernelSpec { jitter, ..Default::default() }).unwrap();
            for i in 0..40 {
                assert!((k.values()[(i, i)] - 1.0 - jitter).abs() < 1e-12);
            }
            assert!(k.spec().bandwidth.is_some());
        }
    }

    #[test]
    fn linear_kernel_is_scaled_gram() {
        let x = simulate_genotypes(30, 5, (0.05, 0.5), 2).unwrap();
        let k = build_covariance(&x, KernelSpec { jitter: 0.0, ..KernelSpec::linear() }).unwrap();
        let xv = x.values();
        for i in 0..30 {
            for j in 0..30 {
                let g: f64 = (0..5).map(|c| xv[(i, c)] * xv[(j, c)]).sum::<f64>() / 5.0;
                assert!((k.values()[(i, j)] - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wide_bandwidth_flattens_kernel() {
        let m = raw(&[&[0.0, 1.0], &[2.0, -1.0], &[5.0, 3.0]]);
        let x = GenotypeMatrix::from_raw(m, default_snp_ids(2)).unwrap();
        let k = build_covariance(
            &x,
            KernelSpec { bandwidth: Some(1e8), jitter: 0.0, ..Default::default() },
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.values()[(i, j)] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let x = simulate_genotypes(10, 3, (0.05, 0.5), 1).unwrap();
        assert!(build_covariance(&x, KernelSpec { bandwidth: Some(0.0), ..Default::default() }).is_err());
        assert!(build_covariance(&x, KernelSpec { jitter: -1.0, ..Default::default() }).is_err());
    }
}
