//! Symmetric positive definite band matrices and their Cholesky factorization.

/// Lower band storage: `rows[k][j]` holds `A[k][k - j]` for `j ≤ p`.
#[derive(Debug, Clone)]
pub(crate) struct Band {
    pub p: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Band {
    pub fn zeros(m: usize, p: usize) -> Band {
        Band {
            p,
            rows: vec![vec![0.0; p + 1]; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Adds `c` to `A[i][j]` (and by symmetry `A[j][i]`); `|i − j| ≤ p`.
    pub fn add(&mut self, i: usize, j: usize, c: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.rows[hi][hi - lo] += c;
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut y = vec![0.0; m];
        for k in 0..m {
            y[k] += self.rows[k][0] * x[k];
            for j in 1..=self.p.min(k) {
                let a = self.rows[k][j];
                y[k] += a * x[k - j];
                y[k - j] += a * x[k];
            }
        }
        y
    }

    /// Solves `A x = b` by band Cholesky. `None` if a pivot is not positive.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let m = self.dim();
        let p = self.p;
        let mut l = self.rows.clone();
        for k in 0..m {
            for j in (1..=p.min(k)).rev() {
                // L[k][k-j]
                let c = k - j;
                let mut s = l[k][j];
                for i in 1..=p.min(c) {
                    // L[k][c-i] * L[c][c-i]
                    if j + i <= p {
                        s -= l[k][j + i] * l[c][i];
                    }
                }
                l[k][j] = s / l[c][0];
            }
            let mut d = l[k][0];
            for j in 1..=p.min(k) {
                d -= l[k][j] * l[k][j];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            l[k][0] = d.sqrt();
        }
        let mut y = b.to_vec();
        for k in 0..m {
            let mut s = y[k];
            for j in 1..=p.min(k) {
                s -= l[k][j] * y[k - j];
            }
            y[k] = s / l[k][0];
        }
        for k in (0..m).rev() {
            let mut s = y[k];
            for j in 1..=p.min(m - 1 - k) {
                s -= l[k + j][j] * y[k + j];
            }
            y[k] = s / l[k][0];
        }
        Some(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_matches_multiply() {
        let m = 9;
        let mut a = Band::zeros(m, 2);
        for k in 0..m {
            a.add(k, k, 6.0 + k as f64);
            if k >= 1 {
                a.add(k, k - 1, -2.0 + 0.1 * k as f64);
            }
            if k >= 2 {
                a.add(k, k - 2, 0.5);
            }
        }
        let x: Vec<f64> = (0..m).map(|k| (k as f64).sin()).collect();
        let b = a.mul(&x);
        let got = a.solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12);
        }
        let mut bad = Band::zeros(2, 1);
        bad.add(0, 0, 1.0);
        bad.add(1, 1, 1.0);
        bad.add(1, 0, 2.0);
        assert!(bad.solve(&[1.0, 1.0]).is_none());
    }
}
