//! Dense row-major matrices and a cyclic Jacobi eigensolver for symmetric input.

use thiserror::Error;

pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not symmetric: |m[{row}][{col}] - m[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error(
        "Jacobi iteration did not converge in {sweeps} sweeps (off-diagonal norm {off_norm:e})"
    )]
    NoConvergence { sweeps: usize, off_norm: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut sum = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if r != c {
                    sum += self[(r, c)] * self[(r, c)];
                }
            }
        }
        sum.sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Flips `v` so that its first component with magnitude above `1e-12` is
/// positive.
pub fn canonical_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Eigenpairs of a symmetric matrix, sorted by non-increasing eigenvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` pairs with `values[i]`; unit length, canonical sign.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// `1e-12 * ||M||_F`, capped at 100 sweeps.
pub fn symmetric_eigen(m: &Matrix) -> Result<SymmetricEigen, LinalgError> {
    let n = m.rows;
    if n != m.cols {
        return Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    let mut a = m.clone();
    for r in 0..n {
        for c in r + 1..n {
            let gap = (m[(r, c)] - m[(c, r)]).abs();
            if gap > SYMMETRY_TOLERANCE || gap.is_nan() {
                return Err(LinalgError::NotSymmetric {
                    row: r,
                    col: c,
                    gap,
                });
            }
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            a[(r, c)] = avg;
            a[(c, r)] = avg;
        }
    }

    let threshold = CONVERGENCE_TOLERANCE * m.frobenius_norm();
    let mut v = Matrix::identity(n);
    let mut sweeps = 0;
    let mut off = a.off_diagonal_norm();
    while off > threshold {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
        off = a.off_diagonal_norm();
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col = v.column(i);
            canonical_sign(&mut col);
            col
        })
        .collect();
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// One Jacobi rotation zeroing `a[p][q]`, accumulated into the columns of `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows;
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    // smaller root of t^2 + 2 t theta - 1 = 0
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(m: &Matrix, value: f64, vector: &[f64]) -> f64 {
        let mv = m.mul_vec(vector);
        mv.iter()
            .zip(vector)
            .map(|(a, b)| (a - value * b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = symmetric_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn diagonal_is_sorted_with_axis_vectors() {
        let e = symmetric_eigen(&Matrix::from_diagonal(&[5.0, 2.0, 9.0])).unwrap();
        assert_eq!(e.values, vec![9.0, 5.0, 2.0]);
        assert_eq!(e.vectors[0], vec![0.0, 0.0, 1.0]);
        assert_eq!(e.vectors[1], vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vectors[2], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let e = symmetric_eigen(&Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]])).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        for (got, want) in e.vectors[0].iter().zip([h, h]) {
            assert!((got - want).abs() < 1e-14);
        }
        for (got, want) in e.vectors[1].iter().zip([h, -h]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn asymmetric_and_non_square_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]);
        assert!(matches!(
            symmetric_eigen(&m),
            Err(LinalgError::NotSymmetric { .. })
        ));
        assert!(matches!(
            symmetric_eigen(&Matrix::zeros(2, 3)),
            Err(LinalgError::NotSquare { .. })
        ));
        assert_eq!(
            symmetric_eigen(&Matrix::zeros(0, 0)),
            Err(LinalgError::Empty)
        );
    }

    #[test]
    fn zero_matrix_converges_immediately() {
        let e = symmetric_eigen(&Matrix::zeros(4, 4)).unwrap();
        assert_eq!(e.values, vec![0.0; 4]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.0, -1e-14, -0.6, 0.8];
        canonical_sign(&mut v);
        assert_eq!(v, vec![-0.0, 1e-14, 0.6, -0.8]);
    }

    fn symmetric(n: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-10.0f64..10.0, n * n).prop_map(move |raw| {
            let mut m = Matrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] = raw[r.min(c) * n + r.max(c)];
                }
            }
            m
        })
    }

    proptest! {
        #[test]
        fn eigenpairs_satisfy_definition(m in (1usize..9).prop_flat_map(symmetric)) {
            let e = symmetric_eigen(&m).unwrap();
            let scale = m.frobenius_norm();
            for (i, (val, vec)) in e.values.iter().zip(&e.vectors).enumerate() {
                prop_assert!(residual(&m, *val, vec) <= 1e-8 * scale.max(f64::MIN_POSITIVE));
                for (j, other) in e.vectors.iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(vec, other) - expected).abs() < 1e-8);
                }
            }
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let trace: f64 = (0..m.rows()).map(|i| m[(i, i)]).sum();
            prop_assert!((e.values.iter().sum::<f64>() - trace).abs() < 1e-9 * scale.max(1.0));
        }
    }
}
