use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::Mat;
use crate::error::{Error, Result};

/// Coefficients `[c0, …, c_{n-1}]` of the monic polynomial
/// `s^n + c_{n-1} s^{n-1} + … + c0` whose roots are `roots`.
///
/// The root set must be closed under conjugation (to 1e-9 relative), so the
/// coefficients are real.
pub fn monic_from_roots(roots: &[Complex64]) -> Result<Vec<f64>> {
    // ascending coefficients, leading 1 kept at the end while building
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        coeffs = next;
    }
    let scale = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let mut out = Vec::with_capacity(roots.len());
    for c in &coeffs[..roots.len()] {
        if c.im.abs() > 1e-9 * libm::pow(scale, roots.len() as f64) {
            return Err(Error::InvalidInput(
                "pole set is not closed under complex conjugation".into(),
            ));
        }
        out.push(c.re);
    }
    Ok(out)
}

/// Companion matrix of `s^n + c_{n-1} s^{n-1} + … + c0`: ones on the
/// superdiagonal and `-c` in the last row.
pub fn companion(coeffs: &[f64]) -> Mat {
    let n = coeffs.len();
    let mut m = Mat::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    for (j, c) in coeffs.iter().enumerate() {
        m[(n - 1, j)] = -c;
    }
    m
}

/// `A^n + c_{n-1} A^{n-1} + … + c0 I` by Horner's scheme.
pub fn eval_matrix_poly(a: &Mat, coeffs: &[f64]) -> Mat {
    let n = a.rows();
    let mut acc = Mat::identity(n);
    for c in coeffs.iter().rev() {
        acc = &(&acc * a) + &Mat::identity(n).scale(*c);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_root_two() {
        let c = monic_from_roots(&[Complex64::new(-2.0, 0.0); 2]).unwrap();
        assert_eq!(c, [4.0, 4.0]);
    }

    #[test]
    fn conjugate_pair() {
        let c = monic_from_roots(&[Complex64::new(-1.0, 2.0), Complex64::new(-1.0, -2.0)]).unwrap();
        assert!((c[0] - 5.0).abs() < 1e-14 && (c[1] - 2.0).abs() < 1e-14);
        assert!(monic_from_roots(&[Complex64::new(-1.0, 2.0)]).is_err());
    }

    #[test]
    fn cayley_hamilton_on_companion() {
        let coeffs = [6.0, 11.0, 6.0];
        let p = eval_matrix_poly(&companion(&coeffs), &coeffs);
        assert!(p.max_abs() < 1e-12);
    }
}
