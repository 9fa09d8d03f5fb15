//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// A square matrix with `kl` sub- and `ku` super-diagonals, factored in place.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row windows covering columns `[row − kl, row + kl + ku]`.
    data: Vec<f64>,
    width: usize,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * width],
            width,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.kl + self.ku);
        row * self.width + (col + self.kl - row)
    }

    /// Adds to entry (row, col), which must lie inside the band.
    pub fn add(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if row >= self.n || col >= self.n || col + self.kl < row || col > row + self.ku {
            return Err(Error::Construction(format!("entry ({row}, {col}) outside the band")));
        }
        let s = self.slot(row, col);
        self.data[s] += value;
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if col + self.kl < row || col > row + self.kl + self.ku || col >= self.n {
            return 0.0;
        }
        self.data[self.slot(row, col)]
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let mut lower = vec![0.0; n * kl.max(1)];
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.get(j, j).abs();
            for r in j + 1..=last {
                let v = self.get(r, j).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > 1e-14 * scale) {
                return Err(Error::Singular(format!("zero pivot in column {j}")));
            }
            pivots[j] = p;
            let end = (j + kl + ku).min(n - 1);
            if p != j {
                for c in j..=end {
                    let (a, b) = (self.slot(j, c), self.slot(p, c));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.slot(j, j)];
            for r in j + 1..=last {
                let s = self.slot(r, j);
                let m = self.data[s] / d;
                self.data[s] = 0.0;
                lower[j * kl + (r - j - 1)] = m;
                if m == 0.0 {
                    continue;
                }
                for c in j + 1..=end {
                    let u = self.data[self.slot(j, c)];
                    let t = self.slot(r, c);
                    self.data[t] -= m * u;
                }
            }
        }
        Ok(BandedLu {
            upper: self,
            lower,
            pivots,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    upper: BandedMatrix,
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, b: &mut [f64]) {
        let u = &self.upper;
        let (n, kl, ku) = (u.n, u.kl, u.ku);
        for j in 0..n {
            b.swap(j, self.pivots[j]);
            let bj = b[j];
            for r in j + 1..=(j + kl).min(n.saturating_sub(1)) {
                b[r] -= self.lower[j * kl + (r - j - 1)] * bj;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for c in i + 1..=(i + kl + ku).min(n - 1) {
                s -= u.data[u.slot(i, c)] * b[c];
            }
            b[i] = s / u.data[u.slot(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn solves_random_banded_systems_needing_pivots() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (40, 3, 2), (60, 5, 5)] {
            let mut a = BandedMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for r in 0..n {
                for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                    // weak diagonal forces row exchanges
                    let v: f64 = rng.gen_range(-1.0..1.0) * if r == c { 0.01 } else { 1.0 };
                    a.add(r, c, v).unwrap();
                    dense[r][c] = v;
                }
            }
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
            let mut b: Vec<f64> = dense.iter().map(|row| row.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
            a.factor().unwrap().solve(&mut b);
            for (p, q) in b.iter().zip(&x) {
                assert!((p - q).abs() < 1e-8, "n={n}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn rejects_singular_and_out_of_band() {
        let mut a = BandedMatrix::zeros(3, 1, 1);
        assert!(a.add(0, 2, 1.0).is_err());
        a.add(0, 0, 1.0).unwrap();
        assert!(matches!(a.factor(), Err(Error::Singular(_))));
    }
}
