use super::{Lu, Mat};
use crate::error::Result;

/// Padé coefficients of degree 6.
const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Matrix exponential by scaling and squaring with a degree-6 Padé
/// approximant (scaled so that `‖A‖_∞ / 2^s ≤ 1/2`).
pub fn expm(a: &Mat) -> Result<Mat> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.rows();
    let inf_norm = (0..n)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while inf_norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a.scale(scale);
    let mut num = Mat::identity(n).scale(PADE6[0]);
    let mut den = num.clone();
    let mut power = Mat::identity(n);
    for (k, c) in PADE6.iter().enumerate().skip(1) {
        power = &power * &x;
        let term = power.scale(*c);
        num = &num + &term;
        den = if k % 2 == 0 { &den + &term } else { &den - &term };
    }
    let mut e = Lu::factor(&den)?.solve(&num);
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}
