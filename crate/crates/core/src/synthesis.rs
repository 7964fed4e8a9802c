//! Offline gain computation: regulator equations, pole placement for the
//! state feedback and both observers, and the high-gain quantities used by
//! the real-time gradient law.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::numerics::{
    companion, eigenvalues, eval_matrix_poly, inverse, monic_from_roots, numerical_rank, solve_linear, Mat,
};
use crate::plant::{check_observable, stacked_observability, AgentPlant};

/// Requested vs achieved poles must agree to this (relative) distance.
const PLACEMENT_TOL: f64 = 1e-6;
const OBSERVER_RETRIES: usize = 10;

/// Solution of the two regulator blocks
/// `X1 S = A X1 + B U1 + E, C X1 = 0` and `A X2 + B U2 = 0, C X2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution {
    pub x1: Mat,
    pub u1: Mat,
    pub x2: Mat,
    pub u2: f64,
}

/// Max-norm residuals of both regulator blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulatorResiduals {
    pub disturbance_block: f64,
    pub output_block: f64,
}

impl RegulatorResiduals {
    pub fn max(&self) -> f64 {
        self.disturbance_block.max(self.output_block)
    }
}

impl RegulatorSolution {
    pub fn residuals(&self, p: &AgentPlant, s: &Mat) -> RegulatorResiduals {
        let dyn1 = &(&(&(&self.x1 * s) - &(&p.a * &self.x1)) - &(&p.b * &self.u1)) - &p.e;
        let out1 = &p.c * &self.x1;
        let dyn2 = &(&p.a * &self.x2) + &p.b.scale(self.u2);
        let out2 = (&p.c * &self.x2)[(0, 0)] - 1.0;
        RegulatorResiduals {
            disturbance_block: dyn1.max_abs().max(out1.max_abs()),
            output_block: dyn2.max_abs().max(out2.abs()),
        }
    }
}

/// Solves both regulator blocks by Kronecker lifting, followed by one step
/// of iterative refinement.
pub fn solve_regulator_equations(p: &AgentPlant, s: &Mat) -> Result<RegulatorSolution> {
    let n = p.n();
    let q = p.q();
    if s.shape() != (q, q) {
        return Err(Error::DimensionMismatch(format!(
            "exosystem is {}x{} but E has {q} columns",
            s.rows(),
            s.cols()
        )));
    }

    let (x1, u1) = if q == 0 {
        (Mat::zeros(n, 0), Mat::zeros(1, 0))
    } else {
        // [Sᵀ⊗I − I⊗A, −I⊗B; I⊗C, 0] [vec X1; vec U1] = [vec E; 0]
        let nq = n * q;
        let iq = Mat::identity(q);
        let mut lifted = Mat::zeros(nq + q, nq + q);
        lifted.set_block(0, 0, &(&s.transpose().kron(&Mat::identity(n)) - &iq.kron(&p.a)));
        lifted.set_block(0, nq, &iq.kron(&p.b).scale(-1.0));
        lifted.set_block(nq, 0, &iq.kron(&p.c));
        let mut rhs = p.e.vec_cols();
        rhs.resize(nq + q, 0.0);
        let sol = refined_solve(&lifted, &rhs)
            .map_err(|_| Error::Unsolvable("disturbance block is singular (rank condition fails on σ(S))".into()))?;
        (
            Mat::from_vec_cols(n, q, &sol[..nq]),
            Mat::from_vec_cols(1, q, &sol[nq..]),
        )
    };

    let mut rosenbrock = Mat::zeros(n + 1, n + 1);
    rosenbrock.set_block(0, 0, &p.a);
    rosenbrock.set_block(0, n, &p.b);
    rosenbrock.set_block(n, 0, &p.c);
    let mut rhs = alloc::vec![0.0; n + 1];
    rhs[n] = 1.0;
    let sol = refined_solve(&rosenbrock, &rhs)
        .map_err(|_| Error::Unsolvable("output block is singular (transmission zero at 0)".into()))?;
    Ok(RegulatorSolution {
        x1,
        u1,
        x2: Mat::col_vector(&sol[..n]),
        u2: sol[n],
    })
}

fn refined_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let lu = crate::numerics::Lu::factor(a)?;
    let mut x = lu.solve_vec(b);
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let dx = lu.solve_vec(&r);
    x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    Ok(x)
}

/// `K1` with `A + B K1` having the given poles (Ackermann).
pub fn stabilizing_gain(a: &Mat, b: &Mat, poles: &[Complex64]) -> Result<Mat> {
    validate_poles(poles, a.rows())?;
    let coeffs = monic_from_roots(poles)?;
    let k = stabilizing_gain_from_poly(a, b, &coeffs)?;
    verify_placement(&(a + &(b * &k)), poles)?;
    Ok(k)
}

/// `K1 = −e_nᵀ 𝒞⁻¹ p(A)` for the monic polynomial with ascending
/// coefficients `coeffs` (leading one implied).
pub fn stabilizing_gain_from_poly(a: &Mat, b: &Mat, coeffs: &[f64]) -> Result<Mat> {
    let n = a.rows();
    if b.shape() != (n, 1) || coeffs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "pole placement needs B of shape {n}x1 and {n} coefficients"
        )));
    }
    let mut ctrb = Mat::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        ctrb.set_block(0, k, &col);
        col = a * &col;
    }
    if numerical_rank(&ctrb, None) < n {
        return Err(Error::Uncontrollable);
    }
    // last row of 𝒞⁻¹ is the solution of 𝒞ᵀ w = e_n
    let mut en = Mat::zeros(n, 1);
    en[(n - 1, 0)] = 1.0;
    let w = solve_linear(&ctrb.transpose(), &en).map_err(|_| Error::Uncontrollable)?;
    Ok((&w.transpose() * &eval_matrix_poly(a, coeffs)).scale(-1.0))
}

/// Gain `L` (q×m) making `S − L C` Hurwitz for an `m×q` measurement map.
/// A single measurement row is placed exactly by dual Ackermann; several
/// rows go through a Sylvester assignment with random right factors drawn
/// from `seed`.
pub fn observer_gain(cobs: &Mat, s: &Mat, poles: &[Complex64], seed: u64) -> Result<Mat> {
    let q = s.rows();
    let m = cobs.rows();
    if !s.is_square() || cobs.cols() != q {
        return Err(Error::DimensionMismatch(format!(
            "observer needs S square and C with {q} columns"
        )));
    }
    if q == 0 {
        return Ok(Mat::zeros(0, m));
    }
    validate_poles(poles, q)?;
    if !check_observable(cobs, s) {
        return Err(Error::Unobservable);
    }
    if m == 1 {
        let k = stabilizing_gain(&s.transpose(), &cobs.transpose(), poles).map_err(|e| match e {
            Error::Uncontrollable => Error::Unobservable,
            e => e,
        })?;
        return Ok(k.transpose().scale(-1.0));
    }

    let f = real_block_form(poles);
    let st = s.transpose();
    let iq = Mat::identity(q);
    // vec(SᵀX − XF) = (I⊗Sᵀ − Fᵀ⊗I) vec X
    let lifted = &iq.kron(&st) - &f.transpose().kron(&iq);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..OBSERVER_RETRIES {
        let g_data: Vec<f64> = (0..m * q).map(|_| unit_uniform(&mut rng)).collect();
        let g = Mat::new(m, q, g_data)?;
        let rhs = (&cobs.transpose() * &g).vec_cols();
        let Ok(xv) = solve_linear(&lifted, &Mat::col_vector(&rhs)) else {
            continue;
        };
        let x = Mat::from_vec_cols(q, q, xv.as_slice());
        let Ok(xinv) = inverse(&x) else {
            continue;
        };
        if x.max_abs() * xinv.max_abs() > 1e10 {
            continue;
        }
        let l = (&g * &xinv).transpose();
        if (s - &(&l * cobs)).spectral_abscissa()? < 0.0 {
            return Ok(l);
        }
    }
    Err(Error::AssignmentFailure {
        attempts: OBSERVER_RETRIES,
    })
}

/// Uniform sample in `[-1, 1)`.
fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    let bits = rng.next_u64() >> 11;
    2.0 * (bits as f64 / (1u64 << 53) as f64) - 1.0
}

/// Real matrix with the given spectrum: 2×2 rotation blocks for conjugate
/// pairs, Jordan coupling between repeated real poles so that a single
/// random output row keeps the pair observable.
fn real_block_form(poles: &[Complex64]) -> Mat {
    let n = poles.len();
    let mut f = Mat::zeros(n, n);
    let mut i = 0;
    let mut prev_real: Option<f64> = None;
    while i < n {
        let p = poles[i];
        if p.im.abs() > 0.0 && i + 1 < n {
            f[(i, i)] = p.re;
            f[(i + 1, i + 1)] = p.re;
            f[(i, i + 1)] = p.im.abs();
            f[(i + 1, i)] = -p.im.abs();
            prev_real = None;
            i += 2;
        } else {
            f[(i, i)] = p.re;
            if prev_real == Some(p.re) {
                f[(i - 1, i)] = 1.0;
            }
            prev_real = Some(p.re);
            i += 1;
        }
    }
    f
}

fn validate_poles(poles: &[Complex64], n: usize) -> Result<()> {
    if poles.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} poles, got {}", poles.len())));
    }
    if poles.iter().any(|p| !(p.re < 0.0) || !p.im.is_finite()) {
        return Err(Error::InvalidInput("poles must have negative real part".into()));
    }
    // conjugate pairs must be adjacent for the block form
    let mut i = 0;
    while i < n {
        if poles[i].im != 0.0 {
            if i + 1 >= n || (poles[i + 1] - poles[i].conj()).norm() > 1e-12 * poles[i].norm() {
                return Err(Error::InvalidInput(
                    "complex poles must be listed as adjacent conjugate pairs".into(),
                ));
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok(())
}

/// Greedy multiset match of achieved against requested eigenvalues.
fn verify_placement(closed: &Mat, poles: &[Complex64]) -> Result<()> {
    let achieved = eigenvalues(closed)?.eigenvalues;
    let mut used = alloc::vec![false; achieved.len()];
    for p in poles {
        let best = achieved
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, a)| (k, (a - p).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));
        match best {
            Some((k, dist)) if dist <= PLACEMENT_TOL * p.norm().max(1.0) => used[k] = true,
            _ => return Err(Error::AssignmentFailure { attempts: 1 }),
        }
    }
    Ok(())
}

/// `K2 = U1 − K1 X1`, `K3 = U2 − K1 X2`.
pub fn composite_gains(reg: &RegulatorSolution, k1: &Mat) -> (Mat, f64) {
    let k2 = &reg.u1 - &(k1 * &reg.x1);
    let k3 = reg.u2 - (k1 * &reg.x2)[(0, 0)];
    (k2, k3)
}

/// Gains of the state- and output-feedback laws.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGains {
    pub k1: Mat,
    pub k2: Mat,
    pub k3: f64,
    /// Disturbance observer gain, `q×n`.
    pub lbar: Mat,
    /// Output observer gain, `n×1`.
    pub lhat: Mat,
}

/// Quantities of the real-time gradient law with relative degree `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighGainSet {
    pub relative_degree: usize,
    /// Rows of the steady-state disturbance map along the output chain, `r×q`.
    pub xbar1: Mat,
    pub ubar1: Mat,
    /// `(1, 0, …, 0)ᵀ`
    pub xbar2: Mat,
    pub ubar2: f64,
    pub kbar1: Mat,
    pub kbar2: Mat,
    pub kbar3: f64,
    /// Rows `C A^(k-1)`, `k = 1..r`.
    pub xhat: Mat,
    /// `C A^r / (C A^(r-1) B)`, cancelled by the control.
    pub output_row: Mat,
    /// `C A^(r-1) B`
    pub hf_gain: f64,
    pub eps: f64,
    pub coeffs: Vec<f64>,
    /// Disturbance observer gain, `q×n`.
    pub lbar: Mat,
}

impl HighGainSet {
    /// Companion matrix of `s^r + c_{r-1} s^{r-1} + … + c0`.
    pub fn companion(&self) -> Mat {
        companion(&self.coeffs)
    }
}

/// Builds the high-gain quantities; `lbar` is left empty (`q×n` zeros) for
/// the caller to fill from [`observer_gain`].
pub fn high_gain_synthesis(p: &AgentPlant, s: &Mat, coeffs: &[f64], eps: f64) -> Result<HighGainSet> {
    let n = p.n();
    let q = p.q();
    if s.shape() != (q, q) {
        return Err(Error::DimensionMismatch("exosystem does not match E".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} must lie in (0, 1]")));
    }
    let r = p.relative_degree()?;
    if coeffs.len() != r {
        return Err(Error::InvalidInput(format!(
            "relative degree {r} needs {r} polynomial coefficients, got {}",
            coeffs.len()
        )));
    }
    let poly_abscissa = companion(coeffs).spectral_abscissa()?;
    if !(poly_abscissa < 0.0) {
        return Err(Error::InvalidInput(format!(
            "polynomial with coefficients {coeffs:?} is not Hurwitz"
        )));
    }
    let nf = p.normal_form()?;
    let zero_abscissa = nf.zero_abscissa()?;
    if !(zero_abscissa < 0.0) {
        return Err(Error::NotMinimumPhase {
            abscissa: zero_abscissa,
        });
    }
    let hf_gain = p.markov(r);
    if hf_gain.abs() < 1e-12 {
        return Err(Error::ZeroHighFrequencyGain);
    }

    // xhat rows C A^(k-1); CE_k = C A^(k-1) E
    let xhat = stacked_observability(&p.c, &p.a).block(0, 0, r, n);
    let ca_r = &xhat.block(r - 1, 0, 1, n) * &p.a;
    let mut xbar1 = Mat::zeros(r, q);
    let mut row = Mat::zeros(1, q);
    for k in 0..r {
        xbar1.set_block(k, 0, &row);
        let cake = &xhat.block(k, 0, 1, n) * &p.e;
        row = &(&row * s) - &cake;
    }
    let ubar1 = row.scale(1.0 / hf_gain);

    let mut kbar1 = Mat::zeros(1, r);
    let lead = -1.0 / (hf_gain * libm::pow(eps, r as f64));
    for (k, c) in coeffs.iter().enumerate() {
        kbar1[(0, k)] = lead * libm::pow(eps, k as f64) * c;
    }
    let mut xbar2 = Mat::zeros(r, 1);
    xbar2[(0, 0)] = 1.0;
    let kbar2 = &ubar1 - &(&kbar1 * &xbar1);
    let kbar3 = -(&kbar1 * &xbar2)[(0, 0)];
    Ok(HighGainSet {
        relative_degree: r,
        xbar1,
        ubar1,
        xbar2,
        ubar2: 0.0,
        kbar1,
        kbar2,
        kbar3,
        xhat,
        output_row: ca_r.scale(1.0 / hf_gain),
        hf_gain,
        eps,
        coeffs: coeffs.to_vec(),
        lbar: Mat::zeros(q, n),
    })
}

/// `−2, −2.5, −3, …`
pub fn default_feedback_poles(n: usize) -> Vec<Complex64> {
    (0..n).map(|k| Complex64::new(-2.0 - 0.5 * k as f64, 0.0)).collect()
}

/// `−5·(1 + 0.2k)`, i.e. `−5, −6, −7, …`
pub fn default_observer_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::new(-5.0 * (1.0 + 0.2 * k as f64), 0.0))
        .collect()
}

/// Coefficients of `(s + 2)^r`.
pub fn default_high_gain_coeffs(r: usize) -> Vec<f64> {
    monic_from_roots(&alloc::vec![Complex64::new(-2.0, 0.0); r]).unwrap_or_default()
}

pub const DEFAULT_EPS: f64 = 0.1;

/// Which law the gains are for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlLawKind {
    StateFeedback,
    OutputFeedback,
    RealtimeGradient,
}

/// Per-agent overrides; `None` picks the defaults above.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthesisOptions {
    pub k1_poles: Option<Vec<Complex64>>,
    pub lbar_poles: Option<Vec<Complex64>>,
    pub lhat_poles: Option<Vec<Complex64>>,
    pub eps: Option<f64>,
    pub coeffs: Option<Vec<f64>>,
    pub seed: u64,
}

/// Gains of one agent under the selected law.
// one value per agent, built once
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum AgentGains {
    Feedback(FeedbackGains),
    HighGain(HighGainSet),
}

impl AgentGains {
    pub fn lbar(&self) -> &Mat {
        match self {
            AgentGains::Feedback(g) => &g.lbar,
            AgentGains::HighGain(h) => &h.lbar,
        }
    }
}

/// Spectral abscissas of every closed-loop matrix built during synthesis.
/// Entries that do not apply (e.g. `q = 0`) are `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abscissas {
    pub state_feedback: f64,
    pub disturbance_observer: f64,
    pub output_observer: f64,
    pub high_gain_poly: f64,
}

impl Abscissas {
    pub fn worst(&self) -> f64 {
        self.state_feedback
            .max(self.disturbance_observer)
            .max(self.output_observer)
            .max(self.high_gain_poly)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSynthesis {
    pub regulator: RegulatorSolution,
    pub residuals: RegulatorResiduals,
    pub gains: AgentGains,
    pub abscissas: Abscissas,
}

/// Full offline synthesis for one agent, with every Hurwitz claim checked
/// by an eigenvalue computation.
pub fn synthesize(p: &AgentPlant, s: &Mat, law: ControlLawKind, opts: &SynthesisOptions) -> Result<AgentSynthesis> {
    let n = p.n();
    let q = p.q();
    if !p.is_minimal() {
        return Err(Error::NotMinimal);
    }
    let regulator = solve_regulator_equations(p, s)?;
    let residuals = regulator.residuals(p, s);

    let lbar_poles = opts.lbar_poles.clone().unwrap_or_else(|| default_observer_poles(q));
    let lbar = observer_gain(&p.e, s, &lbar_poles, opts.seed)?;
    let disturbance_observer = (s - &(&lbar * &p.e)).spectral_abscissa()?;

    let (gains, abscissas) = match law {
        ControlLawKind::StateFeedback | ControlLawKind::OutputFeedback => {
            let k1_poles = opts.k1_poles.clone().unwrap_or_else(|| default_feedback_poles(n));
            let k1 = stabilizing_gain(&p.a, &p.b, &k1_poles)?;
            let lhat_poles = opts.lhat_poles.clone().unwrap_or_else(|| default_observer_poles(n));
            let lhat = observer_gain(&p.c, &p.a, &lhat_poles, opts.seed)?.scale(-1.0);
            let (k2, k3) = composite_gains(&regulator, &k1);
            let abscissas = Abscissas {
                state_feedback: (&p.a + &(&p.b * &k1)).spectral_abscissa()?,
                disturbance_observer,
                output_observer: (&p.a + &(&lhat * &p.c)).spectral_abscissa()?,
                high_gain_poly: f64::NEG_INFINITY,
            };
            (
                AgentGains::Feedback(FeedbackGains { k1, k2, k3, lbar, lhat }),
                abscissas,
            )
        }
        ControlLawKind::RealtimeGradient => {
            let r = p.relative_degree()?;
            let coeffs = opts.coeffs.clone().unwrap_or_else(|| default_high_gain_coeffs(r));
            let mut hg = high_gain_synthesis(p, s, &coeffs, opts.eps.unwrap_or(DEFAULT_EPS))?;
            hg.lbar = lbar;
            let abscissas = Abscissas {
                state_feedback: f64::NEG_INFINITY,
                disturbance_observer,
                output_observer: f64::NEG_INFINITY,
                high_gain_poly: hg.companion().spectral_abscissa()?,
            };
            (AgentGains::HighGain(hg), abscissas)
        }
    };
    if !(abscissas.worst() < 0.0) {
        return Err(Error::AssignmentFailure { attempts: 1 });
    }
    Ok(AgentSynthesis {
        regulator,
        residuals,
        gains,
        abscissas,
    })
}
