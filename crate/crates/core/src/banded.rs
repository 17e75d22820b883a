//! Banded LU with partial pivoting, enough for the 1D Newton solve.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals. Extra room for
/// `kl` diagonals of fill-in from row interchanges is reserved per row.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    #[cfg(test)]
    fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Solves `A x = rhs` in place, consuming the factorization.
    pub(crate) fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::NewtonFailed(format!("singular Jacobian at column {k}")));
            }
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
                rhs.swap(k, p);
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let s = self.slot(i, k);
                let l = self.data[s] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[s] = 0.0;
                for j in k + 1..=last_col {
                    let t = self.data[self.slot(k, j)];
                    let s = self.slot(i, j);
                    self.data[s] -= l * t;
                }
                rhs[i] -= l * rhs[k];
            }
        }
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            let last = (i + reach).min(n - 1);
            for (j, x) in rhs.iter().enumerate().take(last + 1).skip(i + 1) {
                acc -= self.data[self.slot(i, j)] * x;
            }
            rhs[i] = acc / self.data[self.slot(i, i)];
        }
        Ok(())
    }
}
