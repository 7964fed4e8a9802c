//! Single-input single-output agent dynamics `ẋ = A x + B u + E ω`,
//! `y = C x`, driven by an exosystem `ω̇ = S ω`, and the structural
//! predicates the controllers rely on.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, inverse, numerical_rank, orthonormal_complement, Mat};

/// Threshold (relative to the matrix scale) below which `C A^(k-1) B` is
/// treated as zero.
const MARKOV_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlant {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub e: Mat,
}

impl AgentPlant {
    /// Checks shapes: `A` n×n, `B` n×1, `C` 1×n, `E` n×q.
    pub fn new(a: Mat, b: Mat, c: Mat, e: Mat) -> Result<Self> {
        let n = a.rows();
        let bad = |what: &str| Err(Error::DimensionMismatch(format!("plant: {what}")));
        if !a.is_square() || n == 0 {
            return bad("A must be square and nonempty");
        }
        if b.shape() != (n, 1) {
            return bad("B must be n x 1");
        }
        if c.shape() != (1, n) {
            return bad("C must be 1 x n");
        }
        if e.rows() != n {
            return bad("E must have n rows");
        }
        Ok(AgentPlant { a, b, c, e })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn q(&self) -> usize {
        self.e.cols()
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.c.row(0).iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// `A x + B u + E ω`
    pub fn rhs(&self, x: &[f64], u: f64, w: &[f64]) -> Vec<f64> {
        let mut dx = self.a.mul_vec(x);
        if self.q() > 0 {
            self.e.mul_vec_acc(w, &mut dx);
        }
        for (d, b) in dx.iter_mut().zip(self.b.as_slice()) {
            *d += b * u;
        }
        dx
    }

    /// `[B, AB, …, A^(n-1) B]`
    pub fn controllability_matrix(&self) -> Mat {
        let n = self.n();
        let mut m = Mat::zeros(n, n);
        let mut col = self.b.clone();
        for k in 0..n {
            m.set_block(0, k, &col);
            col = &self.a * &col;
        }
        m
    }

    /// `[C; CA; …; CA^(n-1)]`
    pub fn observability_matrix(&self) -> Mat {
        stacked_observability(&self.c, &self.a)
    }

    pub fn is_controllable(&self) -> bool {
        numerical_rank(&self.controllability_matrix(), None) == self.n()
    }

    pub fn is_observable(&self) -> bool {
        numerical_rank(&self.observability_matrix(), None) == self.n()
    }

    /// Kalman rank tests on both `(A, B)` and `(C, A)`.
    pub fn is_minimal(&self) -> bool {
        self.is_controllable() && self.is_observable()
    }

    /// Markov parameter `C A^(k-1) B` for `k ≥ 1`.
    pub fn markov(&self, k: usize) -> f64 {
        (&(&self.c * &self.a.pow(k - 1)) * &self.b)[(0, 0)]
    }

    /// Smallest `k` with `C A^(k-1) B` nonzero.
    pub fn relative_degree(&self) -> Result<usize> {
        let n = self.n();
        let a_scale = self.a.max_abs().max(1.0);
        let base = self.b.max_abs() * self.c.max_abs();
        for k in 1..=n {
            let scale = base * libm::pow(a_scale, (k - 1) as f64);
            if self.markov(k).abs() > MARKOV_RTOL * scale.max(f64::MIN_POSITIVE) {
                return Ok(k);
            }
        }
        Err(Error::NoRelativeDegree { n })
    }

    /// Sufficient condition for the regulator equations: the Rosenbrock
    /// matrix `[A − λI, B; C, 0]` has full rank `n + 1` at every eigenvalue
    /// of `S` and at zero.
    pub fn regulator_rank_check(&self, s: &Mat) -> Result<bool> {
        let mut points: Vec<Complex64> = eigenvalues(s)?.eigenvalues;
        points.push(Complex64::new(0.0, 0.0));
        Ok(points.iter().all(|lam| self.rosenbrock_rank(*lam) == self.n() + 1))
    }

    /// Rank of the complex Rosenbrock matrix, computed on its real
    /// embedding `[[Re M, −Im M], [Im M, Re M]]` (whose rank is twice the
    /// complex rank).
    fn rosenbrock_rank(&self, lam: Complex64) -> usize {
        let n = self.n();
        let mut re = Mat::zeros(n + 1, n + 1);
        re.set_block(0, 0, &self.a);
        re.set_block(0, n, &self.b);
        re.set_block(n, 0, &self.c);
        let mut im = Mat::zeros(n + 1, n + 1);
        for i in 0..n {
            re[(i, i)] -= lam.re;
            im[(i, i)] = -lam.im;
        }
        let mut big = Mat::zeros(2 * (n + 1), 2 * (n + 1));
        big.set_block(0, 0, &re);
        big.set_block(0, n + 1, &im.scale(-1.0));
        big.set_block(n + 1, 0, &im);
        big.set_block(n + 1, n + 1, &re);
        numerical_rank(&big, None) / 2
    }

    /// Coordinates `χ = (C x, C A x, …, C A^(r-1) x)` and `χᶻ = W x` with
    /// `W B = 0`, plus the zero dynamics matrix `A⁰ = W A V`.
    pub fn normal_form(&self) -> Result<NormalForm> {
        let r = self.relative_degree()?;
        let n = self.n();
        let mut chain_map = Mat::zeros(r, n);
        let mut row = self.c.clone();
        for k in 0..r {
            chain_map.set_block(k, 0, &row);
            row = &row * &self.a;
        }
        // W spans the vectors orthogonal to B and to the first r-1 chain rows
        let mut constraints = self.b.transpose();
        if r > 1 {
            constraints = constraints.vstack(&chain_map.block(0, 0, r - 1, n));
        }
        let complement = orthonormal_complement(&constraints.transpose(), None);
        if complement.cols() != n - r {
            return Err(Error::DegenerateTransform);
        }
        let zero_map = complement.transpose();
        let transform = chain_map.vstack(&zero_map);
        let inverse = match inverse(&transform) {
            Ok(inv) => inv,
            Err(_) => return Err(Error::DegenerateTransform),
        };
        let cond = transform.max_abs() * inverse.max_abs();
        if !(cond < 1e9) {
            return Err(Error::DegenerateTransform);
        }
        let v_chain = inverse.block(0, 0, n, r);
        let v_zero = inverse.block(0, r, n, n - r);
        let wa = &zero_map * &self.a;
        Ok(NormalForm {
            relative_degree: r,
            a0: &wa * &v_zero,
            bz: &wa * &v_chain,
            ez: &zero_map * &self.e,
            chain_map,
            zero_map,
            inverse,
        })
    }
}

/// `[C; C S; …; C S^(q-1)]` for a `m×q` output map and `q×q` dynamics.
pub fn stacked_observability(c: &Mat, s: &Mat) -> Mat {
    let q = s.rows();
    let mut m = Mat::zeros(c.rows() * q, q);
    let mut block = c.clone();
    for k in 0..q {
        m.set_block(k * c.rows(), 0, &block);
        block = &block * s;
    }
    m
}

/// Observability of the exosystem through `E`: `E` (n×q) acts as the
/// measurement map of `ω`, so the stack `[E; E S; …; E S^(q-1)]` must have
/// rank `q`. This is exactly what lets `S − L̄ E` be made Hurwitz.
pub fn check_observable(e: &Mat, s: &Mat) -> bool {
    let q = s.rows();
    q == 0 || numerical_rank(&stacked_observability(e, s), None) == q
}

/// Exosystem `ω̇ = S ω` with its initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    pub s: Mat,
    pub w0: Vec<f64>,
}

impl DisturbanceModel {
    pub fn new(s: Mat, w0: Vec<f64>) -> Result<Self> {
        if !s.is_square() || s.rows() != w0.len() {
            return Err(Error::DimensionMismatch(
                "disturbance: S must be q x q and w0 of length q".into(),
            ));
        }
        Ok(DisturbanceModel { s, w0 })
    }

    /// No disturbance (`q = 0`).
    pub fn none() -> Self {
        DisturbanceModel {
            s: Mat::zeros(0, 0),
            w0: Vec::new(),
        }
    }

    pub fn q(&self) -> usize {
        self.w0.len()
    }
}

/// Byrnes–Isidori normal form of a plant with relative degree `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub relative_degree: usize,
    /// Rows `C A^(k-1)`, `k = 1..r`.
    pub chain_map: Mat,
    /// Orthonormal rows `W` with `W B = 0`.
    pub zero_map: Mat,
    /// Inverse of `[chain_map; zero_map]`.
    pub inverse: Mat,
    pub a0: Mat,
    pub bz: Mat,
    pub ez: Mat,
}

impl NormalForm {
    /// Zero dynamics Hurwitz; vacuously true when `r = n`.
    pub fn is_minimum_phase(&self) -> Result<bool> {
        Ok(self.zero_abscissa()? < 0.0)
    }

    pub fn zero_abscissa(&self) -> Result<f64> {
        Ok(eigenvalues(&self.a0)?.abscissa)
    }

    /// `(χ, χᶻ)` for a state `x`.
    pub fn to_normal(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.chain_map.mul_vec(x), self.zero_map.mul_vec(x))
    }

    pub fn from_normal(&self, chi: &[f64], chi_z: &[f64]) -> Vec<f64> {
        let mut stacked = chi.to_vec();
        stacked.extend_from_slice(chi_z);
        self.inverse.mul_vec(&stacked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn double_integrator(e: Mat) -> AgentPlant {
        AgentPlant::new(
            Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]),
            Mat::col_vector(&[0.0, 1.0]),
            Mat::row_vector(&[1.0, 0.0]),
            e,
        )
        .unwrap()
    }

    fn mass_spring(f: f64, g: f64, force: &[f64]) -> AgentPlant {
        let mut e = Mat::zeros(2, force.len());
        for (j, v) in force.iter().enumerate() {
            e[(1, j)] = *v;
        }
        AgentPlant::new(
            Mat::from_rows(&[[0.0, 1.0], [-f, -g]]),
            Mat::col_vector(&[0.0, 1.0]),
            Mat::row_vector(&[1.0, 0.0]),
            e,
        )
        .unwrap()
    }

    /// Controllable companion realization of (s + 3)/(s + 1)³.
    fn stable_zero_plant() -> AgentPlant {
        AgentPlant::new(
            Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -3.0, -3.0]]),
            Mat::col_vector(&[0.0, 0.0, 1.0]),
            Mat::row_vector(&[3.0, 1.0, 0.0]),
            Mat::zeros(3, 0),
        )
        .unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p = double_integrator(Mat::zeros(2, 0));
        assert_eq!(p.rhs(&[1.0, 2.0], 3.0, &[]), [2.0, 3.0]);
        let p = mass_spring(1.0, 1.0, &[1.0, 0.0]);
        assert_eq!(p.rhs(&[0.5, -1.0], 2.0, &[0.25, 9.0]), [-1.0, -0.5 + 1.0 + 2.0 + 0.25]);
        assert_eq!(p.rhs(&[0.0, 0.0], 0.0, &[0.0, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn relative_degrees() {
        assert_eq!(double_integrator(Mat::zeros(2, 0)).relative_degree().unwrap(), 2);
        let si = AgentPlant::new(Mat::zeros(1, 1), Mat::identity(1), Mat::identity(1), Mat::zeros(1, 0)).unwrap();
        assert_eq!(si.relative_degree().unwrap(), 1);
        for (f, g) in [(1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (0.0, 0.0)] {
            assert_eq!(mass_spring(f, g, &[1.0]).relative_degree().unwrap(), 2);
        }
        let dead = AgentPlant::new(
            Mat::zeros(2, 2),
            Mat::col_vector(&[1.0, 0.0]),
            Mat::row_vector(&[0.0, 1.0]),
            Mat::zeros(2, 0),
        )
        .unwrap();
        assert!(matches!(dead.relative_degree(), Err(Error::NoRelativeDegree { n: 2 })));
    }

    #[test]
    fn minimality_and_observability() {
        assert!(double_integrator(Mat::zeros(2, 0)).is_minimal());
        let decoupled = AgentPlant::new(
            Mat::diag(&[-1.0, -1.0]),
            Mat::col_vector(&[1.0, 0.0]),
            Mat::row_vector(&[1.0, 0.0]),
            Mat::zeros(2, 0),
        )
        .unwrap();
        assert!(!decoupled.is_minimal());
        let s = Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(check_observable(&Mat::row_vector(&[1.0, 0.0]), &s));
        assert!(!check_observable(&Mat::row_vector(&[0.0, 1.0]), &s));
        // mass-spring agent with E = [0; F] and a ramp exosystem
        let e = Mat::from_rows(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(check_observable(&e, &s));
        assert!(check_observable(&Mat::zeros(2, 0), &Mat::zeros(0, 0)));
    }

    #[test]
    fn regulator_rank_condition() {
        assert!(double_integrator(Mat::zeros(2, 0))
            .regulator_rank_check(&Mat::zeros(1, 1))
            .unwrap());
        let si = AgentPlant::new(Mat::zeros(1, 1), Mat::identity(1), Mat::identity(1), Mat::identity(1)).unwrap();
        assert!(si.regulator_rank_check(&Mat::zeros(1, 1)).unwrap());
        // C = (1, -1) puts a transmission zero at s = 1
        let zero_at_one = AgentPlant::new(
            Mat::from_rows(&[[0.0, 1.0], [-2.0, -3.0]]),
            Mat::col_vector(&[0.0, 1.0]),
            Mat::row_vector(&[1.0, -1.0]),
            Mat::zeros(2, 0),
        )
        .unwrap();
        assert!(!zero_at_one.regulator_rank_check(&Mat::identity(1)).unwrap());
        assert!(zero_at_one.regulator_rank_check(&Mat::zeros(1, 1)).unwrap());
        // zeros on the imaginary axis: (s² + 4)/(s+1)³ against a frequency-2 exosystem
        let notch = AgentPlant::new(
            Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -3.0, -3.0]]),
            Mat::col_vector(&[0.0, 0.0, 1.0]),
            Mat::row_vector(&[4.0, 0.0, 1.0]),
            Mat::zeros(3, 0),
        )
        .unwrap();
        let rot2 = Mat::from_rows(&[[0.0, 2.0], [-2.0, 0.0]]);
        assert!(!notch.regulator_rank_check(&rot2).unwrap());
        assert!(notch
            .regulator_rank_check(&Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]))
            .unwrap());
    }

    #[test]
    fn normal_form_cases() {
        let nf = double_integrator(Mat::zeros(2, 0)).normal_form().unwrap();
        assert_eq!(nf.relative_degree, 2);
        assert_eq!(nf.a0.shape(), (0, 0));
        assert!(nf.is_minimum_phase().unwrap());

        let p = AgentPlant::new(
            Mat::from_rows(&[[-1.0, 0.0], [1.0, 0.0]]),
            Mat::col_vector(&[1.0, 0.0]),
            Mat::row_vector(&[0.0, 1.0]),
            Mat::zeros(2, 0),
        )
        .unwrap();
        let nf = p.normal_form().unwrap();
        assert_eq!(nf.relative_degree, 2);
        assert_eq!(nf.zero_map.rows(), 0);

        let nf = stable_zero_plant().normal_form().unwrap();
        assert_eq!(nf.relative_degree, 2);
        assert_eq!(nf.a0.shape(), (1, 1));
        assert!((nf.a0[(0, 0)] + 3.0).abs() < 1e-10);
        assert!(nf.is_minimum_phase().unwrap());
        assert!((&nf.zero_map * &stable_zero_plant().b).max_abs() < 1e-12);
    }

    #[test]
    fn non_minimum_phase_detected() {
        // (s − 1)/(s + 1)³
        let p = AgentPlant::new(
            Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -3.0, -3.0]]),
            Mat::col_vector(&[0.0, 0.0, 1.0]),
            Mat::row_vector(&[-1.0, 1.0, 0.0]),
            Mat::zeros(3, 0),
        )
        .unwrap();
        let nf = p.normal_form().unwrap();
        assert!((nf.a0[(0, 0)] - 1.0).abs() < 1e-10);
        assert!(!nf.is_minimum_phase().unwrap());
    }

    #[test]
    fn output_is_invariant_along_trajectory() {
        // Euler-free check: the normal-form output coordinate is C x exactly
        let p = stable_zero_plant();
        let nf = p.normal_form().unwrap();
        let mut x = [0.3, -1.2, 0.8];
        for k in 0..200 {
            let u = libm::sin(0.01 * k as f64);
            let dx = p.rhs(&x, u, &[]);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += 0.01 * d;
            }
            let (chi, _) = nf.to_normal(&x);
            assert!((chi[0] - p.output(&x)).abs() < 1e-9);
        }
    }

    fn random_invertible(n: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-0.5f64..0.5, n * n).prop_map(move |v| {
            let mut m = Mat::new(n, n, v).unwrap();
            for i in 0..n {
                m[(i, i)] += 2.0;
            }
            m
        })
    }

    proptest! {
        #[test]
        fn normal_coordinates_round_trip(x in proptest::collection::vec(-10.0f64..10.0, 3)) {
            let nf = stable_zero_plant().normal_form().unwrap();
            let (chi, chi_z) = nf.to_normal(&x);
            let back = nf.from_normal(&chi, &chi_z);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn relative_degree_survives_similarity(t in random_invertible(3)) {
            let p = stable_zero_plant();
            let ti = inverse(&t).unwrap();
            let q = AgentPlant::new(
                &(&t * &p.a) * &ti,
                &t * &p.b,
                &p.c * &ti,
                Mat::zeros(3, 0),
            ).unwrap();
            prop_assert_eq!(q.relative_degree().unwrap(), 2);
            let nf = q.normal_form().unwrap();
            prop_assert!((nf.a0[(0, 0)] + 3.0).abs() < 1e-8);
        }
    }
}
