//! Banded LU with partial pivoting, enough for the penta- and tridiagonal
//! systems that arise from the radial operators.

pub(crate) struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl Banded {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        // room for the fill-in that pivoting creates above the diagonal
        let width = 2 * kl + ku + 1;
        Banded { n, kl, ku, width, data: vec![0.0; n * width], pivots: vec![0; n], factored: false }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[cfg(test)]
    pub(crate) fn entry(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// In-place LU. Returns false if a zero pivot is met.
    pub(crate) fn factor(&mut self) -> bool {
        let n = self.n;
        let span = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[k] = p;
            if best == 0.0 {
                return false;
            }
            let last_col = (k + span).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        self.factored = true;
        true
    }

    pub(crate) fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "solve called before factor");
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            for i in k + 1..=(k + self.kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * b[k];
            }
        }
        let span = self.ku + self.kl;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + span).min(n - 1) {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }
}
