#![allow(clippy::needless_range_loop)]

//! Small dense-matrix oracles written from scratch, so tests do not lean on
//! the factorizations they are checking.
#![allow(dead_code)]

use faer::Mat;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn normal(rng: &mut StdRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn to_mat(a: &Dense) -> Mat<f64> {
    let n = a.len();
    let m = if n == 0 { 0 } else { a[0].len() };
    Mat::from_fn(n, m, |i, j| a[i][j])
}

pub fn to_dense(a: faer::MatRef<'_, f64>) -> Dense {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..m {
                c[i][j] += ail * b[l][j];
            }
        }
    }
    c
}

pub fn transpose(a: &Dense) -> Dense {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn mat_vec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn trace(a: &Dense) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `A Aᵀ + shift·I` with standard normal `A` (p × p).
pub fn random_spd(rng: &mut StdRng, p: usize, shift: f64) -> Dense {
    let a: Dense = (0..p).map(|_| (0..p).map(|_| normal(rng)).collect()).collect();
    let mut s = matmul(&a, &transpose(&a));
    for (i, row) in s.iter_mut().enumerate() {
        row[i] += shift;
    }
    s
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular matrix in oracle inverse");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Log-determinant by LU with partial pivoting (sign ignored; callers pass SPD).
pub fn log_det(a: &Dense) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut acc = 0.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        acc += d.abs().ln();
        for r in (c + 1)..n {
            let f = m[r][c] / d;
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    acc
}

/// Lower Cholesky factor, for sampling.
pub fn cholesky(a: &Dense) -> Dense {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

pub fn drop_index(a: &Dense, j: usize) -> Dense {
    a.iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, row)| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect())
        .collect()
}

pub fn drop_entry(v: &[f64], j: usize) -> Vec<f64> {
    v.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| *x).collect()
}

/// `KL(N(m0, s0) ‖ N(m1, s1))` from the textbook expression.
pub fn gaussian_kl(m0: &[f64], s0: &Dense, m1: &[f64], s1: &Dense) -> f64 {
    let k = m0.len() as f64;
    let s1_inv = inverse(s1);
    let diff: Vec<f64> = m1.iter().zip(m0).map(|(a, b)| a - b).collect();
    0.5 * (trace(&matmul(&s1_inv, s0)) + dot(&diff, &mat_vec(&s1_inv, &diff)) - k + log_det(s1) - log_det(s0))
}

/// Moments of `β₋ⱼ | β_j = value` from the covariance-side partition.
pub fn condition_on(mu: &[f64], sigma: &Dense, j: usize, value: f64) -> (Vec<f64>, Dense) {
    let sjj = sigma[j][j];
    let cross: Vec<f64> = drop_entry(&sigma[j], j);
    let m: Vec<f64> = drop_entry(mu, j)
        .iter()
        .zip(&cross)
        .map(|(m, c)| m + c / sjj * (value - mu[j]))
        .collect();
    let mut s = drop_index(sigma, j);
    for (a, row) in s.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v -= cross[a] * cross[b] / sjj;
        }
    }
    (m, s)
}

/// Random mean and SPD covariance for a `p`-dimensional posterior.
pub fn random_posterior(rng: &mut StdRng, p: usize) -> (Vec<f64>, Dense) {
    let mu = (0..p).map(|_| normal(rng)).collect();
    let sigma = random_spd(rng, p, 0.1);
    (mu, sigma)
}
