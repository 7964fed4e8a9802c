use alloc::vec::Vec;

use super::Mat;
use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_RTOL · ‖A‖_max` marks the
/// matrix as numerically singular.
const PIVOT_RTOL: f64 = 1e-12;

/// Partial-pivot LU factorization `P·A = L·U` stored in place.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let threshold = PIVOT_RTOL * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= threshold || pivot == 0.0 {
                return Err(Error::SingularMatrix { pivot, threshold });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let inv = 1.0 / lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] * inv;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "solve: rhs length mismatch");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &Mat) -> Mat {
        assert_eq!(b.rows(), self.dim(), "solve: rhs row mismatch");
        let mut x = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let col = self.solve_vec(&b.col(j));
            for (i, v) in col.into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        x
    }

    pub fn determinant(&self) -> f64 {
        let n = self.dim();
        let mut det: f64 = (0..n).map(|i| self.lu[(i, i)]).product();
        // parity of the permutation
        let mut seen = alloc::vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }
}

/// Solves `A·X = B` for square `A`.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    if b.rows() != a.rows() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "solve: A is {}x{}, B has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    Ok(Lu::factor(a)?.solve(b))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    Ok(Lu::factor(a)?.solve(&Mat::identity(a.rows())))
}
