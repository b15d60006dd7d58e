use crate::error::{Error, Result};

/// Symmetric positive definite matrix in lower band storage.
///
/// Row `i` stores the entries `A[i][i-b..=i]` contiguously, padded on the
/// left for the first `b` rows.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bandwidth + 1) + self.bandwidth + j - i
    }

    /// Entry `(i, j)` of the symmetric matrix; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` with `i >= j`.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.bandwidth);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let b = self.bandwidth;
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            let row = &self.data[self.slot(i, lo)..=self.slot(i, i)];
            let mut acc = 0.0;
            for (k, &a) in row.iter().enumerate() {
                let j = lo + k;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    /// In-place banded Cholesky factorization `A = L L^T`.
    pub fn factorize(mut self) -> Result<BandedCholesky> {
        let b = self.bandwidth;
        for i in 0..self.n {
            let lo_i = i.saturating_sub(b);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(b));
                let mut s = self.data[self.slot(i, j)];
                if lo < j {
                    let ri = self.slot(i, lo);
                    let rj = self.slot(j, lo);
                    let len = j - lo;
                    s -= dot(&self.data[ri..ri + len], &self.data[rj..rj + len]);
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Solver(format!(
                            "matrix not positive definite at pivot {i}"
                        )));
                    }
                    let sl = self.slot(i, i);
                    self.data[sl] = s.sqrt();
                } else {
                    let d = self.data[self.slot(j, j)];
                    let sl = self.slot(i, j);
                    self.data[sl] = s / d;
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: BandedSpd,
}

impl BandedCholesky {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let l = &self.factor;
        let b = l.bandwidth;
        let n = l.n;
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let r = l.slot(i, lo);
            let s = dot(&l.data[r..r + (i - lo)], &x[lo..i]);
            x[i] = (x[i] - s) / l.data[l.slot(i, i)];
        }
        for i in (0..n).rev() {
            x[i] /= l.data[l.slot(i, i)];
            let xi = x[i];
            let lo = i.saturating_sub(b);
            for j in lo..i {
                x[j] -= l.data[l.slot(i, j)] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> BandedSpd {
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.add_lower(i, i, 2.0);
            if i > 0 {
                a.add_lower(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let a = tridiag(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut rhs = vec![0.0; n];
        a.mul_vec(&x_true, &mut rhs);
        let chol = a.factorize().unwrap();
        chol.solve_in_place(&mut rhs);
        for (a, b) in rhs.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_band_matches_dense_product() {
        let n = 12;
        let b = 4;
        let mut a = BandedSpd::zeros(n, b);
        for i in 0..n {
            a.add_lower(i, i, 10.0 + i as f64);
            for j in i.saturating_sub(b)..i {
                a.add_lower(i, j, 1.0 / (1.0 + (i + j) as f64));
            }
        }
        assert_eq!(a.get(3, 5), a.get(5, 3));
        assert_eq!(a.get(0, 9), 0.0);
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let mut y = vec![0.0; n];
        a.mul_vec(&x, &mut y);
        for i in 0..n {
            let dense: f64 = (0..n).map(|j| a.get(i, j) * x[j]).sum();
            assert!((dense - y[i]).abs() < 1e-12);
        }
        let chol = a.factorize().unwrap();
        chol.solve_in_place(&mut y);
        for (u, v) in y.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add_lower(0, 0, 1.0);
        a.add_lower(1, 0, 2.0);
        a.add_lower(1, 1, 1.0);
        assert!(matches!(a.factorize(), Err(Error::Solver(_))));
    }
}
