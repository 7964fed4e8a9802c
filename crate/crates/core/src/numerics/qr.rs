use alloc::vec;
use alloc::vec::Vec;

use super::Mat;

struct PivotedQr {
    r: Mat,
    q: Option<Mat>,
}

/// Householder QR with column pivoting. Column norms are recomputed at
/// every step; at the sizes used here that is cheaper than being clever
/// about downdating.
fn pivoted_qr(a: &Mat, want_q: bool) -> PivotedQr {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = want_q.then(|| Mat::identity(m));
    let steps = m.min(n);
    let mut v = vec![0.0; m];
    for k in 0..steps {
        let (p, _) = (k..n)
            .map(|j| (j, (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if p != k {
            for i in 0..m {
                let t = r[(i, k)];
                r[(i, k)] = r[(i, p)];
                r[(i, p)] = t;
            }
        }
        let norm = libm::sqrt((k..m).map(|i| r[(i, k)] * r[(i, k)]).sum());
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] >= 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vtv: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i] * r[(i, j)]).sum::<f64>() * beta;
            for i in k..m {
                r[(i, j)] -= s * v[i];
            }
        }
        for i in k + 1..m {
            r[(i, k)] = 0.0;
        }
        if let Some(q) = q.as_mut() {
            for i in 0..m {
                let s: f64 = (k..m).map(|l| q[(i, l)] * v[l]).sum::<f64>() * beta;
                for l in k..m {
                    q[(i, l)] -= s * v[l];
                }
            }
        }
    }
    PivotedQr { r, q }
}

/// Default rank tolerance `1e-9 · ‖A‖_max · max(m, n)`.
pub fn default_rank_tol(a: &Mat) -> f64 {
    1e-9 * a.max_abs() * a.rows().max(a.cols()) as f64
}

fn rank_of(r: &Mat, tol: f64) -> usize {
    (0..r.rows().min(r.cols())).filter(|&k| r[(k, k)].abs() > tol).count()
}

/// Numerical rank by column-pivoted orthogonal triangularization: the number
/// of diagonal entries of `R` whose magnitude exceeds `tol` (defaults to
/// [`default_rank_tol`]).
pub fn numerical_rank(a: &Mat, tol: Option<f64>) -> usize {
    if a.rows() == 0 || a.cols() == 0 {
        return 0;
    }
    let tol = tol.unwrap_or_else(|| default_rank_tol(a));
    rank_of(&pivoted_qr(a, false).r, tol)
}

/// Orthonormal basis (as columns) of the orthogonal complement of the
/// column space of `a`.
pub fn orthonormal_complement(a: &Mat, tol: Option<f64>) -> Mat {
    let m = a.rows();
    if a.cols() == 0 {
        return Mat::identity(m);
    }
    let tol = tol.unwrap_or_else(|| default_rank_tol(a));
    let qr = pivoted_qr(a, true);
    let rank = rank_of(&qr.r, tol);
    let q = qr.q.expect("q requested");
    let cols: Vec<usize> = (rank..m).collect();
    let mut out = Mat::zeros(m, cols.len());
    for (c, &j) in cols.iter().enumerate() {
        for i in 0..m {
            out[(i, c)] = q[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_identity() {
        assert_eq!(numerical_rank(&Mat::zeros(3, 4), Some(1e-9)), 0);
        assert_eq!(numerical_rank(&Mat::zeros(3, 4), None), 0);
        assert_eq!(numerical_rank(&Mat::identity(4), None), 4);
    }

    #[test]
    fn path_laplacian_has_rank_three() {
        let l = Mat::from_rows(&[
            [1.0, -1.0, 0.0, 0.0],
            [-1.0, 2.0, -1.0, 0.0],
            [0.0, -1.0, 2.0, -1.0],
            [0.0, 0.0, -1.0, 1.0],
        ]);
        assert_eq!(numerical_rank(&l, None), 3);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let a = Mat::from_rows(&[[1.0, 0.0], [1.0, 1.0], [0.0, 2.0], [3.0, -1.0]]);
        let w = orthonormal_complement(&a, None);
        assert_eq!(w.shape(), (4, 2));
        let wtw = &w.transpose() * &w;
        assert!((&wtw - &Mat::identity(2)).max_abs() < 1e-12);
        assert!((&w.transpose() * &a).max_abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rank_is_transpose_invariant(
            m in 1usize..7,
            n in 1usize..7,
            k in 0usize..7,
            seed in proptest::collection::vec(-1.0f64..1.0, 2 * 7 * 7),
        ) {
            // product of random m×k and k×n factors has rank min(m, n, k)
            let k = k.min(m).min(n);
            let left = Mat::new(m, k, seed[..m * k].to_vec()).unwrap();
            let right = Mat::new(k, n, seed[49..49 + k * n].to_vec()).unwrap();
            let a = &left * &right;
            let r = numerical_rank(&a, None);
            prop_assert_eq!(r, numerical_rank(&a.transpose(), None));
            prop_assert!(r <= k);
        }
    }
}
