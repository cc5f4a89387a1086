//! Small dense linear algebra and sample statistics.
//!
//! Only what the estimator and its covariance pipeline need: row-major
//! matrices, matrix-vector products, a Cholesky-based inverse for small
//! symmetric positive definite matrices, and a handful of sample summaries.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return dim_err(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "matrix entry {i} is not finite"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice gives a `0 x cols` matrix.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return dim_err(format!("row {i} has {} entries, expected {cols}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// New matrix holding the listed rows, in the listed order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return dim_err(format!(
                "cannot stack {} rows beside {} rows",
                self.rows, other.rows
            ));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return dim_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self[(i, k)] * other[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Matrix-vector product. Each row is accumulated left to right.
pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    if m.cols != v.len() {
        return dim_err(format!(
            "matrix has {} columns, vector has {} entries",
            m.cols,
            v.len()
        ));
    }
    Ok((0..m.rows).map(|i| dot(m.row(i), v)).collect())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if m.rows != m.cols {
        return dim_err(format!("cholesky needs a square matrix, got {}x{}", m.rows, m.cols));
    }
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Singular { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a small symmetric positive definite matrix via its Cholesky factor.
pub fn sym_inverse(m: &Matrix) -> Result<Matrix> {
    let l = cholesky(m)?;
    let n = m.rows;
    // Solve L Lᵀ x = e_k column by column.
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for col in 0..n {
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    // Symmetrize away rounding asymmetry.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = avg;
            inv[(j, i)] = avg;
        }
    }
    Ok(inv)
}

pub fn mean(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty sample".into()));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "standard deviation needs at least 2 values, got {}",
            v.len()
        )));
    }
    let m = mean(v)?;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (v.len() - 1) as f64).sqrt())
}

/// Type-7 sample quantile: `h = (n - 1) p`, linear interpolation between
/// the adjacent order statistics.
pub fn quantile_type7(v: &[f64], p: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, p))
}

/// Type-7 quantile of an already sorted, non-empty slice.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Interquartile range with type-7 quantiles.
pub fn sample_iqr(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "IQR needs at least 2 values, got {}",
            v.len()
        )));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25))
}

/// Sample covariance of the rows of `m` (`n - 1` denominator).
pub fn sample_covariance(m: &Matrix) -> Result<Matrix> {
    let n = m.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 rows, got {n}"
        )));
    }
    let p = m.cols();
    let mut means = vec![0.0; p];
    for i in 0..n {
        for (acc, v) in means.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    for v in &mut means {
        *v /= n as f64;
    }
    let mut cov = Matrix::zeros(p, p);
    for i in 0..n {
        let r = m.row(i);
        for a in 0..p {
            let da = r[a] - means[a];
            for b in 0..=a {
                cov[(a, b)] += da * (r[b] - means[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_examples() {
        assert_eq!(matvec(&Matrix::identity(2), &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        assert_eq!(matvec(&Matrix::zeros(2, 2), &[3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        let m = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matvec(&m, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        assert!(matches!(
            matvec(&Matrix::identity(2), &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(sym_inverse(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let inv = sym_inverse(&Matrix::diag(&[2.0, 4.0])).unwrap();
        assert!(inv.max_abs_diff(&Matrix::diag(&[0.5, 0.25])) < 1e-15);
        let m = Matrix::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let want =
            Matrix::from_row_major(2, 2, vec![2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0])
                .unwrap();
        assert!(sym_inverse(&m).unwrap().max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn inverse_rejects_indefinite() {
        let m = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(sym_inverse(&m), Err(Error::Singular { pivot: 1, .. })));
        assert!(matches!(
            sym_inverse(&Matrix::zeros(1, 1)),
            Err(Error::Singular { pivot: 0, .. })
        ));
    }

    #[test]
    fn sd_and_iqr_examples() {
        assert_eq!(sample_sd(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((sample_sd(&[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sample_iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 2.0);
        assert!(sample_sd(&[1.0]).is_err());
        assert!(sample_iqr(&[1.0]).is_err());
    }

    #[test]
    fn type7_interpolates() {
        // h = 3 * 0.5 = 1.5 -> halfway between 2 and 3
        assert_eq!(quantile_type7(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 2.5);
        assert_eq!(quantile_type7(&[4.0, 1.0, 3.0, 2.0], 1.0).unwrap(), 4.0);
    }

    #[test]
    fn covariance_of_two_columns() {
        let m = Matrix::from_row_major(3, 2, vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
        let c = sample_covariance(&m).unwrap();
        assert!(c.max_abs_diff(&Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap()) < 1e-15);
    }

    fn spd_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..=6).prop_flat_map(|p| {
            prop::collection::vec(-1.0f64..1.0, p * p).prop_map(move |a| {
                let a = Matrix::from_row_major(p, p, a).unwrap();
                let mut m = a.matmul(&a.transpose()).unwrap();
                for i in 0..p {
                    m[(i, i)] += 0.1;
                }
                m
            })
        })
    }

    proptest! {
        #[test]
        fn inverse_is_right_inverse(m in spd_strategy()) {
            let inv = sym_inverse(&m).unwrap();
            let prod = m.matmul(&inv).unwrap();
            prop_assert!(prod.max_abs_diff(&Matrix::identity(m.rows())) < 1e-8);
        }

        #[test]
        fn matvec_is_bit_deterministic(v in prop::collection::vec(-1e3f64..1e3, 12)) {
            let m = Matrix::from_row_major(3, 4, v.clone()).unwrap();
            let a = matvec(&m, &v[..4]).unwrap();
            let b = matvec(&m, &v[..4]).unwrap();
            prop_assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
