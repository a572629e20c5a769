//! Dense row-major matrices of `f64`.
//!
//! The product kernels accumulate every output element in ascending inner
//! index order, so a row of `a · b` is bitwise independent of the other rows
//! of `a`. Batched and single-sample forward passes therefore agree exactly.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}) ", self.rows, self.cols)?;
        f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length does not match {rows}x{cols}"
        );
        Matrix { rows, cols, data }
    }

    pub fn row_vector(data: &[f64]) -> Self {
        Self::from_vec(1, data.len(), data.to_vec())
    }

    pub fn column_vector(data: &[f64]) -> Self {
        Self::from_vec(data.len(), 1, data.to_vec())
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// The single entry of a 1×1 matrix.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "item() on a non-scalar matrix");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }

    pub fn hconcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "hconcat row mismatch");
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Matrix {
            rows: self.rows,
            cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }
}

/// Broadcast shape of two operands: each dimension must match or be 1.
pub(crate) fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

/// Elementwise `f(a, b)` with row/column broadcasting.
pub(crate) fn zip_broadcast(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (rows, cols) = broadcast_shape(a.shape(), b.shape())
        .unwrap_or_else(|| panic!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()));
    if a.shape() == b.shape() {
        return Matrix {
            rows,
            cols,
            data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        };
    }
    let at = |m: &Matrix, i: usize, j: usize| {
        let r = if m.rows == 1 { 0 } else { i };
        let c = if m.cols == 1 { 0 } else { j };
        m.data[r * m.cols + c]
    };
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            data.push(f(at(a, i, j), at(b, i, j)));
        }
    }
    Matrix { rows, cols, data }
}

/// Sums `g` down to `shape`, undoing a broadcast.
pub(crate) fn reduce_to(g: Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g;
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for i in 0..g.rows {
        let r = if shape.0 == 1 { 0 } else { i };
        for j in 0..g.cols {
            let c = if shape.1 == 1 { 0 } else { j };
            out.data[r * shape.1 + c] += g.data[i * g.cols + j];
        }
    }
    out
}

/// `out[i][j] += Σ_p a[i][p]·w[p][j]` for row-major `a: n×k`, `w: k×m`.
///
/// Every output element accumulates onto its initial value with `p`
/// increasing, whatever tile it falls in and whichever instruction set runs,
/// so results are bitwise reproducible and a row's result never depends on
/// which other rows share the call.
fn gemm_acc(n: usize, k: usize, m: usize, a: &[f64], w: &[f64], out: &mut [f64]) {
    assert!(a.len() >= n * k && w.len() >= k * m && out.len() >= n * m);
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            unsafe { gemm_acc_avx2(n, k, m, a, w, out) };
            return;
        }
    }
    gemm_tiles::<4, 4>(n, k, m, a, w, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_acc_avx2(n: usize, k: usize, m: usize, a: &[f64], w: &[f64], out: &mut [f64]) {
    gemm_tiles::<4, 8>(n, k, m, a, w, out);
}

#[inline(always)]
fn gemm_tiles<const R: usize, const C: usize>(n: usize, k: usize, m: usize, a: &[f64], w: &[f64], out: &mut [f64]) {
    let mut i = 0;
    while i < n {
        let rows = if i + R <= n { R } else { 1 };
        let mut j = 0;
        while j + C <= m {
            let mut acc = [[0.0; C]; R];
            for r in 0..rows {
                acc[r].copy_from_slice(&out[(i + r) * m + j..(i + r) * m + j + C]);
            }
            if rows == R {
                for p in 0..k {
                    let wr: [f64; C] = w[p * m + j..p * m + j + C].try_into().unwrap();
                    for (r, acc_r) in acc.iter_mut().enumerate() {
                        let x = a[(i + r) * k + p];
                        for c in 0..C {
                            acc_r[c] += x * wr[c];
                        }
                    }
                }
            } else {
                for p in 0..k {
                    let wr: [f64; C] = w[p * m + j..p * m + j + C].try_into().unwrap();
                    let x = a[i * k + p];
                    for c in 0..C {
                        acc[0][c] += x * wr[c];
                    }
                }
            }
            for r in 0..rows {
                out[(i + r) * m + j..(i + r) * m + j + C].copy_from_slice(&acc[r]);
            }
            j += C;
        }
        for r in 0..rows {
            for jj in j..m {
                let mut s = out[(i + r) * m + jj];
                for p in 0..k {
                    s += a[(i + r) * k + p] * w[p * m + jj];
                }
                out[(i + r) * m + jj] = s;
            }
        }
        i += rows;
    }
}

/// `a · w + bias` where `w` is `in × out` row-major and `bias` has `out` entries.
pub(crate) fn affine(a: &Matrix, w: &[f64], bias: &[f64]) -> Matrix {
    let (n, k) = a.shape();
    let m = bias.len();
    assert_eq!(w.len(), k * m, "weight shape mismatch");
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        out.data[i * m..(i + 1) * m].copy_from_slice(bias);
    }
    gemm_acc(n, k, m, &a.data, w, &mut out.data);
    out
}

/// `a · b`
pub(crate) fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimension mismatch");
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm_acc(a.rows, a.cols, b.cols, &a.data, &b.data, &mut out.data);
    out
}

/// `g · bᵀ` for `g: n×m`, `b: k×m`.
pub(crate) fn matmul_transpose_b(g: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(g.cols, b.cols);
    matmul(g, &b.transpose())
}

/// `aᵀ · g` for `a: n×k`, `g: n×m`.
pub(crate) fn matmul_transpose_a(a: &Matrix, g: &Matrix) -> Matrix {
    assert_eq!(a.rows, g.rows);
    matmul(&a.transpose(), g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.as_mut_slice()[i * b.cols() + j] = s;
            }
        }
        out
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut x = seed as f64 + 0.5;
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| {
                    x = (x * 1.618_033_988_75 + 0.3).fract();
                    x - 0.5
                })
                .collect(),
        )
    }

    #[test]
    fn products_match_naive_loops() {
        let a = sample(5, 4, 1);
        let b = sample(4, 3, 2);
        let g = sample(5, 3, 3);
        let close = |x: &Matrix, y: &Matrix| {
            x.as_slice()
                .iter()
                .zip(y.as_slice())
                .all(|(p, q)| (p - q).abs() < 1e-14)
        };
        assert!(close(&matmul(&a, &b), &naive(&a, &b)));
        assert!(close(&matmul_transpose_b(&g, &b), &naive(&g, &b.transpose())));
        assert!(close(&matmul_transpose_a(&a, &g), &naive(&a.transpose(), &g)));
    }

    #[test]
    fn rows_are_independent_of_batch() {
        let a = sample(7, 6, 4);
        let w = sample(6, 5, 5);
        let bias = [0.1, -0.2, 0.3, 0.0, 0.5];
        let batch = affine(&a, w.as_slice(), &bias);
        for i in 0..7 {
            let single = affine(&a.select_rows(&[i]), w.as_slice(), &bias);
            assert_eq!(single.as_slice(), batch.row(i));
        }
    }

    #[test]
    fn broadcast_and_reduce() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let r = Matrix::row_vector(&[10.0, 20.0]);
        let s = zip_broadcast(&a, &r, |x, y| x + y);
        assert_eq!(s.as_slice(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(reduce_to(a.clone(), (1, 2)).as_slice(), &[4.0, 6.0]);
        assert_eq!(reduce_to(a.clone(), (2, 1)).as_slice(), &[3.0, 7.0]);
        assert_eq!(reduce_to(a, (1, 1)).as_slice(), &[10.0]);
        assert!(broadcast_shape((2, 3), (3, 2)).is_none());
    }
}
