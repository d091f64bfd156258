//! Dense row-major matrices and the handful of kernels the networks need.
//!
//! Batches are stored feature-major: a `(features, points)` matrix keeps each
//! feature contiguous across the batch, so the affine kernels vectorize over
//! points while the reduction over input features stays in strict index
//! order. That fixed accumulation order (bias first, then products in input
//! index order) is part of the reproducibility contract: a straight-line
//! per-point evaluation of the same layer produces bit-identical results.

/// Row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match rows*cols");
        Mat { rows, cols, data }
    }

    /// Build from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Copy of the columns `lo..hi` (a batch slice of a feature-major matrix).
    pub fn col_range(&self, lo: usize, hi: usize) -> Mat {
        assert!(lo <= hi && hi <= self.cols);
        let w = hi - lo;
        let mut out = Mat::zeros(self.rows, w);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[lo..hi]);
        }
        out
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out[o][b] = bias[o] + sum_k w[o][k] * x[k][b]`, products accumulated in
/// ascending `k`. `w` is `(fan_out, fan_in)`, `x` is `(fan_in, points)`.
pub fn affine_forward(w: &Mat, bias: &[f64], x: &Mat, out: &mut Mat) {
    let (fo, fi) = (w.rows, w.cols);
    assert_eq!(bias.len(), fo);
    assert_eq!(x.rows, fi, "affine input features");
    assert_eq!(out.rows, fo);
    assert_eq!(out.cols, x.cols);
    for o in 0..fo {
        let w_row = w.row(o);
        let out_row = out.row_mut(o);
        out_row.fill(bias[o]);
        for (k, &w_ok) in w_row.iter().enumerate() {
            let x_row = x.row(k);
            for (acc, &xv) in out_row.iter_mut().zip(x_row) {
                *acc += w_ok * xv;
            }
        }
    }
}

/// `dw[o][i] += sum_b dz[o][b] * x[i][b]` (gradient of an affine layer's
/// weights). Unrolled reduction; deterministic but not the forward order.
pub fn accumulate_weight_grad(dz: &Mat, x: &Mat, dw: &mut Mat) {
    assert_eq!(dz.cols, x.cols, "batch size");
    assert_eq!(dw.rows, dz.rows);
    assert_eq!(dw.cols, x.rows);
    for o in 0..dz.rows {
        let dz_row = dz.row(o);
        let dw_row = dw.row_mut(o);
        for (i, dst) in dw_row.iter_mut().enumerate() {
            *dst += dot(dz_row, x.row(i));
        }
    }
}

/// `db[o] += sum_b dz[o][b]`.
pub fn accumulate_bias_grad(dz: &Mat, db: &mut [f64]) {
    assert_eq!(db.len(), dz.rows);
    for (o, dst) in db.iter_mut().enumerate() {
        *dst += sum(dz.row(o));
    }
}

/// `dx[i][b] = sum_o w[o][i] * dz[o][b]` (backprop through an affine layer).
pub fn backprop_input(w: &Mat, dz: &Mat, dx: &mut Mat) {
    assert_eq!(w.rows, dz.rows);
    assert_eq!(dx.rows, w.cols);
    assert_eq!(dx.cols, dz.cols);
    dx.fill(0.0);
    for o in 0..w.rows {
        let w_row = w.row(o);
        let dz_row = dz.row(o);
        for i in 0..w.cols {
            let w_oi = w_row[i];
            let dx_row = dx.row_mut(i);
            for (dst, &g) in dx_row.iter_mut().zip(dz_row) {
                *dst += w_oi * g;
            }
        }
    }
}

/// Four-accumulator dot product. Fixed association, so results are
/// reproducible run to run, just not identical to a serial sum.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i];
        acc[1] += a[i + 1];
        acc[2] += a[i + 2];
        acc[3] += a[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_straight_line_evaluation_bitwise() {
        let w = Mat::from_fn(3, 5, |r, c| (r * 5 + c) as f64 * 0.137 - 0.4);
        let bias = [0.25, -1.5, 0.75];
        let x = Mat::from_fn(5, 7, |r, c| ((r + 2 * c) as f64).sin());
        let mut out = Mat::zeros(3, 7);
        affine_forward(&w, &bias, &x, &mut out);
        for b in 0..7 {
            for o in 0..3 {
                let mut acc = bias[o];
                for k in 0..5 {
                    acc += w.get(o, k) * x.get(k, b);
                }
                assert_eq!(out.get(o, b), acc, "element ({o},{b}) must be bit-equal");
            }
        }
    }

    #[test]
    fn weight_grad_matches_dense_loops() {
        let dz = Mat::from_fn(3, 9, |r, c| (r as f64 + 1.0) * (c as f64 - 4.0) * 0.01);
        let x = Mat::from_fn(4, 9, |r, c| ((r * c) as f64).cos());
        let mut dw = Mat::zeros(3, 4);
        accumulate_weight_grad(&dz, &x, &mut dw);
        for o in 0..3 {
            for i in 0..4 {
                let mut acc = 0.0;
                for b in 0..9 {
                    acc += dz.get(o, b) * x.get(i, b);
                }
                assert!((dw.get(o, i) - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn backprop_input_is_transpose_action() {
        let w = Mat::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.3);
        let dz = Mat::from_fn(3, 2, |r, c| 1.0 + (r * 2 + c) as f64);
        let mut dx = Mat::zeros(4, 2);
        backprop_input(&w, &dz, &mut dx);
        for i in 0..4 {
            for b in 0..2 {
                let mut acc = 0.0;
                for o in 0..3 {
                    acc += w.get(o, i) * dz.get(o, b);
                }
                assert!((dx.get(i, b) - acc).abs() < 1e-14);
            }
        }
    }
}
