//! Small dense matrix kernels.
//!
//! Everything here operates on matrices of order (l+1) or s — single digits
//! in practice — and sits on the innermost loop of the simulation harness,
//! so the kernels are hand-rolled, allocation-light and deterministic rather
//! than delegated to a general linear-algebra backend.

use crate::error::{EivError, Result};

/// Dense row-major matrix of `f64`.
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

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Mat {
        let mut out = self.clone();
        for x in &mut out.data {
            *x *= c;
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x -= y;
        }
        out
    }

    /// tr(self · other).
    pub fn trace_product(&self, other: &Mat) -> f64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = 0.0;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// x' · self · y.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(self.rows, x.len());
        assert_eq!(self.cols, y.len());
        let mut acc = 0.0;
        for i in 0..self.rows {
            let row = self.row(i);
            let mut inner = 0.0;
            for j in 0..self.cols {
                inner += row[j] * y[j];
            }
            acc += x[i] * inner;
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// (A + A')/2.
    pub fn symmetrized(&self) -> Mat {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Rows and columns where `keep` is true, in their original order.
    pub fn select(&self, keep: &[bool]) -> Mat {
        assert_eq!(keep.len(), self.rows);
        assert_eq!(self.rows, self.cols);
        let idx: Vec<usize> = (0..self.rows).filter(|&i| keep[i]).collect();
        let mut out = Mat::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor P with P P' = Σ.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Mat,
}

/// Relative asymmetry beyond this is rejected; below it the input is
/// symmetrized before factoring, since accumulated derivative arithmetic
/// produces harmless asymmetry.
const SYMMETRY_TOL: f64 = 1e-10;

pub fn cholesky(sigma: &Mat) -> Result<CholeskyFactor> {
    let n = sigma.rows();
    if sigma.cols() != n {
        return Err(EivError::DimensionMismatch {
            context: "cholesky of non-square matrix",
        });
    }
    let scale = sigma.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(EivError::DimensionMismatch {
                    context: "cholesky of asymmetric matrix",
                });
            }
        }
    }
    let a = sigma.symmetrized();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if s <= 0.0 || !s.is_finite() {
            return Err(EivError::NotPositiveDefinite { pivot: j });
        }
        let d = s.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Mat {
        &self.lower
    }

    /// Solve P x = b by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                x[i] -= l[(i, k)] * x[k];
            }
            x[i] /= l[(i, i)];
        }
        x
    }

    /// Solve P X = B column by column.
    pub fn solve_lower_mat(&self, b: &Mat) -> Mat {
        assert_eq!(b.rows(), self.dim());
        let mut out = Mat::zeros(b.rows(), b.cols());
        let mut col = vec![0.0; b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve_lower(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    /// Solve P' x = b by back substitution.
    pub fn solve_lower_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= l[(k, i)] * x[k];
            }
            x[i] /= l[(i, i)];
        }
        x
    }

    /// Solve Σ x = b, i.e. P P' x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }

    /// Σ⁻¹ = P⁻ᵀ P⁻¹, assembled column by column.
    pub fn inverse_spd(&self) -> Mat {
        let n = self.dim();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrized()
    }

    /// log |Σ| = 2 Σᵢ log Pᵢᵢ.
    pub fn log_det(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            acc += self.lower[(i, i)].ln();
        }
        2.0 * acc
    }

    /// ‖P⁻¹ d‖², the quadratic form d' Σ⁻¹ d.
    pub fn whitened_sq_norm(&self, d: &[f64]) -> f64 {
        let y = self.solve_lower(d);
        dot(&y, &y)
    }
}

/// Forward-mode derivative of the Cholesky factor (Smith's algorithm).
///
/// Given P with P P' = Σ and a symmetric direction dΣ, runs the Cholesky
/// recurrences in tangent mode and returns the lower-triangular dP
/// satisfying dP P' + P dP' = dΣ.
pub fn d_cholesky(factor: &CholeskyFactor, d_sigma: &Mat) -> Result<Mat> {
    let n = factor.dim();
    if d_sigma.rows() != n || d_sigma.cols() != n {
        return Err(EivError::DimensionMismatch {
            context: "d_cholesky direction shape",
        });
    }
    let l = &factor.lower;
    let mut dl = Mat::zeros(n, n);
    for j in 0..n {
        let mut s = d_sigma[(j, j)];
        for k in 0..j {
            s -= 2.0 * l[(j, k)] * dl[(j, k)];
        }
        dl[(j, j)] = s / (2.0 * l[(j, j)]);
        for i in (j + 1)..n {
            let mut s = d_sigma[(i, j)];
            for k in 0..j {
                s -= dl[(i, k)] * l[(j, k)] + l[(i, k)] * dl[(j, k)];
            }
            s -= l[(i, j)] * dl[(j, j)];
            dl[(i, j)] = s / l[(j, j)];
        }
    }
    Ok(dl)
}

/// LU factorization with partial pivoting, for the general (possibly
/// asymmetric) blocks that show up in the sample-space derivative matrices.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
}

pub fn lu_factor(a: &Mat) -> Result<LuFactor> {
    let n = a.rows();
    if a.cols() != n {
        return Err(EivError::DimensionMismatch {
            context: "lu of non-square matrix",
        });
    }
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in (k + 1)..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(EivError::SingularMatrix);
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let piv = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / piv;
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                let v = f * lu[(k, j)];
                lu[(i, j)] -= v;
            }
        }
    }
    Ok(LuFactor { lu, perm, sign })
}

impl LuFactor {
    /// (log |det|, sign of det).
    pub fn log_abs_det(&self) -> (f64, f64) {
        let n = self.lu.rows();
        let mut log = 0.0;
        let mut sign = self.sign;
        for i in 0..n {
            let d = self.lu[(i, i)];
            log += d.abs().ln();
            if d < 0.0 {
                sign = -sign;
            }
        }
        (log, sign)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Block-diagonal matrix with one dense block per group.
///
/// The score, observed information and all sample-space derivative matrices
/// are block diagonal over groups, so determinants, solves and submatrix
/// selection are done per block and never materialize the m×m dense form.
#[derive(Debug, Clone)]
pub struct BlockDiag {
    blocks: Vec<Mat>,
}

impl BlockDiag {
    pub fn new(blocks: Vec<Mat>) -> Self {
        for b in &blocks {
            assert_eq!(b.rows(), b.cols(), "block-diagonal blocks must be square");
        }
        BlockDiag { blocks }
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.rows()).sum()
    }

    /// (log |det|, sign), via per-block LU.
    pub fn log_abs_det(&self) -> Result<(f64, f64)> {
        let mut log = 0.0;
        let mut sign = 1.0;
        for b in &self.blocks {
            if b.rows() == 0 {
                continue;
            }
            let (l, s) = lu_factor(b)?.log_abs_det();
            log += l;
            sign *= s;
        }
        Ok((log, sign))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.dim());
        let mut out = Vec::with_capacity(rhs.len());
        let mut offset = 0;
        for b in &self.blocks {
            let n = b.rows();
            if n > 0 {
                let x = lu_factor(b)?.solve(&rhs[offset..offset + n]);
                out.extend_from_slice(&x);
            }
            offset += n;
        }
        Ok(out)
    }

    /// Submatrix keeping the coordinates where `keep` is true (flat index).
    pub fn select(&self, keep: &[bool]) -> BlockDiag {
        assert_eq!(keep.len(), self.dim());
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut offset = 0;
        for b in &self.blocks {
            let n = b.rows();
            out.push(b.select(&keep[offset..offset + n]));
            offset += n;
        }
        BlockDiag::new(out)
    }

    pub fn to_dense(&self) -> Mat {
        let m = self.dim();
        let mut out = Mat::zeros(m, m);
        let mut offset = 0;
        for b in &self.blocks {
            let n = b.rows();
            for i in 0..n {
                for j in 0..n {
                    out[(offset + i, offset + j)] = b[(i, j)];
                }
            }
            offset += n;
        }
        out
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Used for fit diagnostics (information eigen-summary), not on any hot path.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut m = a.symmetrized();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * m.max_abs().max(1.0) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}
