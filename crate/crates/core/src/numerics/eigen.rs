use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::Mat;
use crate::error::{Error, Result};

/// Iterations allowed per eigenvalue before giving up.
const MAX_ITERATIONS: usize = 60;

/// Eigenvalues of a real square matrix together with the spectral abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub abscissa: f64,
}

impl Spectrum {
    fn from_values(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(|a, b| {
            b.re.partial_cmp(&a.re)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(b.im.partial_cmp(&a.im).unwrap_or(core::cmp::Ordering::Equal))
        });
        let abscissa = eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        Spectrum { eigenvalues, abscissa }
    }

    /// True when every eigenvalue has real part below `-margin`.
    pub fn is_hurwitz(&self, margin: f64) -> bool {
        self.abscissa < -margin
    }
}

/// Eigenvalues of a real square matrix: balancing, orthogonal Hessenberg
/// reduction, then Francis double-shift QR on the Hessenberg form.
/// Complex eigenvalues come out in conjugate pairs.
///
/// An empty matrix has an empty spectrum with abscissa `-inf`.
pub fn eigenvalues(a: &Mat) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Spectrum::from_values(Vec::new()));
    }
    // 1-based working copy keeps the QR sweep readable
    let mut h = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = a[(i, j)];
        }
    }
    balance(&mut h, n);
    hessenberg(&mut h, n);
    let values = hqr(&mut h, n)?;
    Ok(Spectrum::from_values(values))
}

/// Diagonal similarity scaling by powers of two so row and column norms are
/// comparable.
fn balance(a: &mut [Vec<f64>], n: usize) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        a[i][j] *= g;
                    }
                    for j in 1..=n {
                        a[j][i] *= f;
                    }
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form (similarity transform).
fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n + 1];
    for k in 1..=n - 2 {
        let norm = libm::sqrt((k + 1..=n).map(|i| a[i][k] * a[i][k]).sum());
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k + 1][k] >= 0.0 { -norm } else { norm };
        for i in k + 1..=n {
            v[i] = a[i][k];
        }
        v[k + 1] -= alpha;
        let vtv: f64 = (k + 1..=n).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        // left: A <- (I - beta v vᵀ) A
        for j in 1..=n {
            let s: f64 = (k + 1..=n).map(|i| v[i] * a[i][j]).sum::<f64>() * beta;
            for i in k + 1..=n {
                a[i][j] -= s * v[i];
            }
        }
        // right: A <- A (I - beta v vᵀ)
        for i in 1..=n {
            let s: f64 = (k + 1..=n).map(|j| a[i][j] * v[j]).sum::<f64>() * beta;
            for j in k + 1..=n {
                a[i][j] -= s * v[j];
            }
        }
        for i in k + 2..=n {
            a[i][k] = 0.0;
        }
    }
}

#[inline]
fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (1-based storage),
/// with exceptional shifts every ten stalled iterations.
#[allow(clippy::many_single_char_names)]
fn hqr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<Complex64>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let nnu = nn as usize;
            let mut l = nnu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nnu][nnu];
            if l == nnu {
                wr[nnu] = x + t;
                wi[nnu] = 0.0;
                nn -= 1;
                break;
            }
            y = a[nnu - 1][nnu - 1];
            w = a[nnu][nnu - 1] * a[nnu - 1][nnu];
            if l == nnu - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = libm::sqrt(q.abs());
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nnu - 1] = x + z;
                    wr[nnu] = x + z;
                    if z != 0.0 {
                        wr[nnu] = x - w / z;
                    }
                    wi[nnu - 1] = 0.0;
                    wi[nnu] = 0.0;
                } else {
                    wr[nnu - 1] = x + p;
                    wr[nnu] = x + p;
                    wi[nnu - 1] = -z;
                    wi[nnu] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITERATIONS {
                return Err(Error::NoConvergence { iterations: its });
            }
            if its > 0 && its.is_multiple_of(10) {
                t += x;
                for i in 1..=nnu {
                    a[i][i] -= x;
                }
                let s = a[nnu][nnu - 1].abs() + a[nnu - 1][nnu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nnu - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nnu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nnu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k != nnu - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign(libm::sqrt(p * p + q * q + r * r), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nnu {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nnu - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = if nnu < k + 3 { nnu } else { k + 3 };
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nnu - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
                    }
                }
                k += 1;
            }
            if l + 1 >= nnu {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}
