/// Dense row-major basis inverse.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub m: usize,
    pub binv: Vec<f64>,
    /// Product-form updates applied since the last refactorization.
    pub pivots: usize,
}

impl Factor {
    pub fn identity(m: usize) -> Self {
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Factor { m, binv, pivots: 0 }
    }

    /// Invert the dense basis matrix given column-major as `columns[r]`
    /// (sparse, one per basic position). Returns `None` when singular.
    pub fn invert(m: usize, columns: &[Vec<(usize, f64)>]) -> Option<Self> {
        // augmented [B | I], Gauss-Jordan with partial pivoting
        let w = 2 * m;
        let mut a = vec![0.0; m * w];
        for (r, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                a[i * w + r] = v;
            }
        }
        for i in 0..m {
            a[i * w + m + i] = 1.0;
        }
        for c in 0..m {
            let (mut piv, mut best) = (c, a[c * w + c].abs());
            for r in c + 1..m {
                let v = a[r * w + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return None;
            }
            if piv != c {
                for k in 0..w {
                    a.swap(c * w + k, piv * w + k);
                }
            }
            let inv = 1.0 / a[c * w + c];
            for k in 0..w {
                a[c * w + k] *= inv;
            }
            let (head, tail) = a.split_at_mut(c * w);
            let (prow, rest) = tail.split_at_mut(w);
            for row in head.chunks_mut(w).chain(rest.chunks_mut(w)) {
                let f = row[c];
                if f != 0.0 {
                    for k in c..w {
                        row[k] -= f * prow[k];
                    }
                }
            }
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m..(i + 1) * m].copy_from_slice(&a[i * w + m..(i + 1) * w]);
        }
        Some(Factor { m, binv, pivots: 0 })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.binv[r * self.m..(r + 1) * self.m]
    }

    /// `B^{-1} a` for a sparse column `a`.
    pub fn ftran(&self, col: &[(usize, f64)]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for &(i, v) in col {
            for r in 0..m {
                out[r] += self.binv[r * m + i] * v;
            }
        }
        out
    }

    /// `y^T = c^T B^{-1}` for a dense row vector `c`.
    pub fn btran(&self, c: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for (r, &cr) in c.iter().enumerate() {
            if cr == 0.0 {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            for (o, b) in out.iter_mut().zip(row) {
                *o += cr * b;
            }
        }
        out
    }

    /// Replace basic position `r` by a column whose ftran is `alpha`.
    pub fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let inv = 1.0 / alpha[r];
        for k in 0..m {
            self.binv[r * m + k] *= inv;
        }
        let prow: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (x, p) in row.iter_mut().zip(&prow) {
                *x -= a * p;
            }
        }
        self.pivots += 1;
    }
}
