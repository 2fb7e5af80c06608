//! Dense symmetric eigendecomposition and covariance helpers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    fn max_off_diagonal(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                m = m.max(self.get(i, j).abs());
            }
        }
        m
    }
}

/// Column means of the rows.
pub fn column_means<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for row in rows {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
        n += 1;
    }
    if n > 0 {
        for m in &mut mean {
            *m /= n as f64;
        }
    }
    mean
}

/// Sample covariance (divisor `n - 1`) about `mean`. Accumulated in row order.
pub fn covariance<'a>(rows: impl Iterator<Item = &'a [f64]>, mean: &[f64]) -> SymMatrix {
    let dim = mean.len();
    let mut cov = SymMatrix::zeros(dim);
    let mut centered = vec![0.0; dim];
    let mut n = 0usize;
    for row in rows {
        for ((c, &x), &m) in centered.iter_mut().zip(row).zip(mean) {
            *c = x - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            let base = i * dim;
            for j in i..dim {
                cov.data[base + j] += ci * centered[j];
            }
        }
        n += 1;
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    cov
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    /// Non-increasing.
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector of `values[k]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps until every off-diagonal magnitude is below `1e-12 * |trace|`
/// (Frobenius norm when the trace is zero). Eigenpairs are returned sorted by
/// value, descending; equal values keep their diagonal order.
pub fn symmetric_eigen(matrix: &SymMatrix) -> Result<Eigen> {
    let n = matrix.n;
    if matrix.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in symmetric matrix".into()));
    }
    let mut a = matrix.clone();
    let mut v = SymMatrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale = {
        let t = a.trace().abs();
        if t > 0.0 {
            t
        } else {
            libm::sqrt(a.data.iter().map(|x| x * x).sum::<f64>())
        }
    };
    let threshold = 1e-12 * scale;

    let mut sweeps = 0;
    while a.max_off_diagonal() >= threshold && threshold > 0.0 {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric("Jacobi eigensolver did not converge".into()));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let values = order.iter().map(|&k| a.get(k, k)).collect();
    let vectors = order.iter().map(|&k| (0..n).map(|r| v.get(r, k)).collect()).collect();
    Ok(Eigen { values, vectors, sweeps })
}

fn rotate(a: &mut SymMatrix, v: &mut SymMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.n;
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn two_by_two_closed_form() {
        let mut m = SymMatrix::zeros(2);
        m.data = vec![2.0, 1.0, 1.0, 2.0];
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[0][0].abs() - r).abs() < 1e-14);
        assert!((e.vectors[0][0] - e.vectors[0][1]).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_symmetric_matrix() {
        let mut rng = Rng::seed_from_u64(17);
        for n in [1, 3, 7, 20] {
            let mut m = SymMatrix::zeros(n);
            for i in 0..n {
                for j in i..n {
                    let x = rng.normal();
                    m.set(i, j, x);
                    m.set(j, i, x);
                }
            }
            let e = symmetric_eigen(&m).unwrap();
            for w in e.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            for i in 0..n {
                for j in 0..n {
                    let r: f64 = (0..n).map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j]).sum();
                    assert!((r - m.get(i, j)).abs() < 1e-10, "n={n} ({i},{j})");
                    let g = dot(&e.vectors[i], &e.vectors[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_matrix_is_already_diagonal() {
        let e = symmetric_eigen(&SymMatrix::zeros(4)).unwrap();
        assert_eq!(e.values, [0.0; 4]);
        assert_eq!(e.sweeps, 0);
    }
}
