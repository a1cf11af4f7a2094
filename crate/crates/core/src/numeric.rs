//! Compensated summation and a small dense linear solver.

/// Neumaier variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator of values.
pub fn ksum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Solves `m x = b` in place by Gaussian elimination with partial pivoting.
///
/// `m` is a dense row-major square matrix. Returns `None` when a pivot
/// degenerates to zero.
pub fn solve_dense(m: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(m.len() == n && m.iter().all(|r| r.len() == n));
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col][col].abs();
        for row in col + 1..n {
            let v = m[row][col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if pivot != col {
            m.swap(pivot, col);
            b.swap(pivot, col);
        }
        let d = m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / d;
            if f == 0.0 {
                continue;
            }
            m[row][col] = 0.0;
            for k in col + 1..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}
