//! Banded symmetric positive definite systems and compensated summation.

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band: `data[i * (bw + 1) + (i - j)] = A[i][j]`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// `y = A x` (only valid before factoring).
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.slot(i, i)] * x[i];
        }
        y
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn factor(&mut self) -> Result<()> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let mlo = lo.max(j.saturating_sub(self.bw));
                let mut s = self.data[i * w + (i - j)];
                for m in mlo..j {
                    s -= self.data[i * w + (i - m)] * self.data[j * w + (j - m)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Numeric {
                            what: format!("banded Cholesky lost positive definiteness at row {i}"),
                            achieved: s,
                        });
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` using the factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "solve called before factor");
        let w = self.bw + 1;
        let mut x = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for m in lo..i {
                s -= self.data[i * w + (i - m)] * x[m];
            }
            x[i] = s / self.data[i * w];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.data[i * w];
            let xi = x[i];
            let lo = i.saturating_sub(self.bw);
            for m in lo..i {
                x[m] -= self.data[i * w + (i - m)] * xi;
            }
        }
        x
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = CompensatedSum::default();
    for v in it {
        s.add(v);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tridiagonal(n: usize) -> BandedSpd {
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn solves_second_difference_system() {
        let n = 50;
        let mut a = tridiagonal(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&x_true);
        a.factor().unwrap();
        let x = a.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.factor().is_err());
    }

    #[test]
    fn compensation_recovers_small_terms() {
        let v = compensated_sum([1.0, 1e100, 1.0, -1e100]);
        assert_eq!(v, 2.0);
    }

    proptest! {
        #[test]
        fn random_banded_spd_round_trip(seed in 0u64..1000, n in 3usize..40, bw in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bw = bw.min(n - 1);
            let mut a = BandedSpd::zeros(n, bw);
            for i in 0..n {
                for j in i.saturating_sub(bw)..i {
                    a.add(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            // Diagonal dominance makes the matrix SPD.
            for i in 0..n {
                a.add(i, i, 2.0 * bw as f64 + 1.0);
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.mul(&x_true);
            a.factor().unwrap();
            let x = a.solve(&b);
            for (u, v) in x.iter().zip(&x_true) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }
    }
}
