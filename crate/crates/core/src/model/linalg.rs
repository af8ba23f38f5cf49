//! Dense row-major kernels over slices of the flat parameter vector.

/// A row-major matrix (or, with `cols == 1`, a vector) inside a flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mat {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Mat {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.off..self.off + self.len()
    }

    pub fn row<'a>(&self, buf: &'a [f64], r: usize) -> &'a [f64] {
        let start = self.off + r * self.cols;
        &buf[start..start + self.cols]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = M x`
pub fn matvec(buf: &[f64], m: Mat, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), m.cols);
    debug_assert_eq!(out.len(), m.rows);
    let data = &buf[m.range()];
    for (o, row) in out.iter_mut().zip(data.chunks_exact(m.cols)) {
        *o = dot(row, x);
    }
}

/// `out += Mᵀ y`
pub fn matvec_t_acc(buf: &[f64], m: Mat, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(y.len(), m.rows);
    debug_assert_eq!(out.len(), m.cols);
    let data = &buf[m.range()];
    for (&yr, row) in y.iter().zip(data.chunks_exact(m.cols)) {
        if yr == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o += yr * w;
        }
    }
}

/// `G += y xᵀ` for the block of `grad` described by `m`.
pub fn outer_acc(grad: &mut [f64], m: Mat, y: &[f64], x: &[f64]) {
    debug_assert_eq!(y.len(), m.rows);
    debug_assert_eq!(x.len(), m.cols);
    let data = &mut grad[m.range()];
    for (&yr, row) in y.iter().zip(data.chunks_exact_mut(m.cols)) {
        if yr == 0.0 {
            continue;
        }
        for (g, &xc) in row.iter_mut().zip(x) {
            *g += yr * xc;
        }
    }
}

pub fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_with_loops() {
        let buf: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let m = Mat { off: 0, rows: 2, cols: 3 };
        let mut out = [0.0; 2];
        matvec(&buf, m, &[1.0, 1.0, 1.0], &mut out);
        assert_eq!(out, [3.0, 12.0]);
        let mut back = [0.0; 3];
        matvec_t_acc(&buf, m, &[1.0, 2.0], &mut back);
        assert_eq!(back, [6.0, 9.0, 12.0]);
        let mut g = vec![0.0; 6];
        outer_acc(&mut g, m, &[1.0, 2.0], &[1.0, 0.0, -1.0]);
        assert_eq!(g, vec![1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 140.0);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
