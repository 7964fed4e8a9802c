//! Runtime controllers: the reduced-order disturbance observer, the three
//! control laws, and the per-agent closed loop that embeds the generator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::costs::LocalCost;
use crate::error::{Error, Result};
use crate::generator::{local_generator_rhs, LocalGenerator, NeighborMessage};
use crate::numerics::{norm2, Mat};
use crate::plant::AgentPlant;
use crate::synthesis::{AgentGains, AgentSynthesis, FeedbackGains, HighGainSet};

pub use crate::synthesis::ControlLawKind;

/// `η̄̇ = (S − L̄E) η̄ + (S L̄ − L̄ E L̄ − L̄ A) x − L̄ B u` with estimate
/// `η = η̄ + L̄ x`. The estimation error obeys `ė = (S − L̄E) e`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedObserver {
    lbar: Mat,
    drift: Mat,
    state_gain: Mat,
    input_gain: Vec<f64>,
}

impl ReducedObserver {
    pub fn new(p: &AgentPlant, s: &Mat, lbar: &Mat) -> Result<Self> {
        let q = p.q();
        if s.shape() != (q, q) || lbar.shape() != (q, p.n()) {
            return Err(Error::DimensionMismatch(format!(
                "observer gain must be {q}x{} for a {q}-dimensional exosystem",
                p.n()
            )));
        }
        let le = lbar * &p.e;
        let drift = s - &le;
        let state_gain = &(&(s * lbar) - &(&le * lbar)) - &(lbar * &p.a);
        let input_gain = (lbar * &p.b).scale(-1.0).into_vec();
        Ok(ReducedObserver {
            lbar: lbar.clone(),
            drift,
            state_gain,
            input_gain,
        })
    }

    pub fn q(&self) -> usize {
        self.drift.rows()
    }

    /// `S − L̄ E`
    pub fn error_matrix(&self) -> &Mat {
        &self.drift
    }

    pub fn rhs(&self, x: &[f64], u: f64, eta_bar: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q()];
        self.rhs_into(x, u, eta_bar, &mut out);
        out
    }

    pub fn rhs_into(&self, x: &[f64], u: f64, eta_bar: &[f64], out: &mut [f64]) {
        self.drift.mul_vec_into(eta_bar, out);
        self.state_gain.mul_vec_acc(x, out);
        for (o, g) in out.iter_mut().zip(&self.input_gain) {
            *o += g * u;
        }
    }

    /// `η = η̄ + L̄ x`
    pub fn estimate(&self, eta_bar: &[f64], x: &[f64]) -> Vec<f64> {
        let mut eta = eta_bar.to_vec();
        self.lbar.mul_vec_acc(x, &mut eta);
        eta
    }

    /// Observer state that yields the estimate `eta` at plant state `x`.
    pub fn state_for_estimate(&self, eta: &[f64], x: &[f64]) -> Vec<f64> {
        let lx = self.lbar.mul_vec(x);
        eta.iter().zip(&lx).map(|(e, l)| e - l).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// `u = K1 x + K2 η + K3 z`, with the `K2 η` term dropped while rejection
/// is disabled.
pub fn state_feedback_control(g: &FeedbackGains, x: &[f64], eta: &[f64], z: f64, rejection: bool) -> f64 {
    let mut u = dot(g.k1.row(0), x) + g.k3 * z;
    if rejection {
        u += dot(g.k2.row(0), eta);
    }
    u
}

/// Luenberger copy `ξ̇ = A ξ + B u + L̂ (C ξ − y)`.
pub fn output_feedback_rhs(g: &FeedbackGains, p: &AgentPlant, y: f64, u: f64, xi: &[f64]) -> Vec<f64> {
    let innovation = p.output(xi) - y;
    let mut d = p.a.mul_vec(xi);
    for ((d, b), l) in d.iter_mut().zip(p.b.as_slice()).zip(g.lhat.as_slice()) {
        *d += b * u + l * innovation;
    }
    d
}

/// `u = −(C A^r / C A^(r-1) B) x + K̄1 X̂ x + K̄2 η + K̄3 z`.
pub fn realtime_gradient_control(hg: &HighGainSet, x: &[f64], eta: &[f64], z: f64, rejection: bool) -> f64 {
    let chain = hg.xhat.mul_vec(x);
    let mut u = -dot(hg.output_row.row(0), x) + dot(hg.kbar1.row(0), &chain) + hg.kbar3 * z;
    if rejection {
        u += dot(hg.kbar2.row(0), eta);
    }
    u
}

/// Which inputs are switched on for one agent at the current time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gates {
    /// The plant sees `ω` (otherwise zero).
    pub disturbance: bool,
    /// The `K2 η` compensation is applied.
    pub rejection: bool,
}

impl Gates {
    pub const ALL_ON: Gates = Gates {
        disturbance: true,
        rejection: true,
    };
}

/// Offsets into one agent's state slice `[x, ω, η̄, ξ, z, λ, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub q: usize,
    /// Length of the Luenberger copy (zero unless output feedback).
    pub xi_len: usize,
}

impl StateLayout {
    pub fn x(&self) -> core::ops::Range<usize> {
        0..self.n
    }
    pub fn w(&self) -> core::ops::Range<usize> {
        self.n..self.n + self.q
    }
    pub fn eta_bar(&self) -> core::ops::Range<usize> {
        self.n + self.q..self.n + 2 * self.q
    }
    pub fn xi(&self) -> core::ops::Range<usize> {
        let s = self.n + 2 * self.q;
        s..s + self.xi_len
    }
    pub fn generator(&self) -> usize {
        self.n + 2 * self.q + self.xi_len
    }
    pub fn len(&self) -> usize {
        self.generator() + 3
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

// one value per agent, built once
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
enum Law {
    State(FeedbackGains),
    Output(FeedbackGains),
    Gradient(HighGainSet),
}

/// One agent's plant, exosystem, controller and local cost.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentLoop {
    plant: AgentPlant,
    s: Mat,
    cost: LocalCost,
    observer: ReducedObserver,
    law: Law,
    layout: StateLayout,
}

/// Signals of one agent at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSample {
    pub y: f64,
    pub u: f64,
    pub z: f64,
    pub lam: f64,
    pub v: f64,
    /// `‖η − ω_seen‖`, where `ω_seen` is what the plant currently receives.
    pub eta_err: f64,
}

impl AgentLoop {
    pub fn new(plant: AgentPlant, s: Mat, cost: LocalCost, kind: ControlLawKind, syn: &AgentSynthesis) -> Result<Self> {
        let observer = ReducedObserver::new(&plant, &s, syn.gains.lbar())?;
        let law = match (kind, &syn.gains) {
            (ControlLawKind::StateFeedback, AgentGains::Feedback(g)) => Law::State(g.clone()),
            (ControlLawKind::OutputFeedback, AgentGains::Feedback(g)) => Law::Output(g.clone()),
            (ControlLawKind::RealtimeGradient, AgentGains::HighGain(h)) => Law::Gradient(h.clone()),
            _ => {
                return Err(Error::InvalidInput(
                    "synthesized gains do not match the control law".into(),
                ))
            }
        };
        let layout = StateLayout {
            n: plant.n(),
            q: plant.q(),
            xi_len: if matches!(law, Law::Output(_)) { plant.n() } else { 0 },
        };
        Ok(AgentLoop {
            plant,
            s,
            cost,
            observer,
            law,
            layout,
        })
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn plant(&self) -> &AgentPlant {
        &self.plant
    }

    pub fn cost(&self) -> &LocalCost {
        &self.cost
    }

    pub fn observer(&self) -> &ReducedObserver {
        &self.observer
    }

    /// Initial slice: plant at `x0`, exosystem at `w0`, estimate `η = 0`,
    /// `ξ = 0`, and the generator at `gen`.
    pub fn initial_state(&self, x0: &[f64], w0: &[f64], gen: LocalGenerator) -> Result<Vec<f64>> {
        let l = self.layout;
        if x0.len() != l.n || w0.len() != l.q {
            return Err(Error::DimensionMismatch(format!(
                "initial state needs {} plant and {} exosystem entries",
                l.n, l.q
            )));
        }
        let mut st = vec![0.0; l.len()];
        st[l.x()].copy_from_slice(x0);
        st[l.w()].copy_from_slice(w0);
        // ξ(0) = 0 is the measurement the observer uses in output feedback
        let measured = if l.xi_len > 0 { vec![0.0; l.n] } else { x0.to_vec() };
        let eb = self.observer.state_for_estimate(&vec![0.0; l.q], &measured);
        st[l.eta_bar()].copy_from_slice(&eb);
        let g = l.generator();
        st[g] = gen.z;
        st[g + 1] = gen.lam;
        st[g + 2] = gen.v;
        Ok(st)
    }

    pub fn generator(&self, own: &[f64]) -> LocalGenerator {
        let g = self.layout.generator();
        LocalGenerator {
            z: own[g],
            lam: own[g + 1],
            v: own[g + 2],
        }
    }

    fn measured<'a>(&self, own: &'a [f64]) -> &'a [f64] {
        if self.layout.xi_len > 0 {
            &own[self.layout.xi()]
        } else {
            &own[self.layout.x()]
        }
    }

    fn input(&self, own: &[f64], eta: &[f64], z: f64, gates: Gates) -> f64 {
        let m = self.measured(own);
        match &self.law {
            Law::State(g) | Law::Output(g) => state_feedback_control(g, m, eta, z, gates.rejection),
            Law::Gradient(h) => realtime_gradient_control(h, m, eta, z, gates.rejection),
        }
    }

    /// Writes the derivative of this agent's slice. Only the agent's own
    /// slice and its neighbors' published `(λ, v)` are read.
    pub fn rhs(&self, own: &[f64], messages: &[NeighborMessage], gates: Gates, out: &mut [f64]) {
        let l = self.layout;
        let x = &own[l.x()];
        let w = &own[l.w()];
        let eta_bar = &own[l.eta_bar()];
        let gen = self.generator(own);
        let measured = self.measured(own);
        let eta = self.observer.estimate(eta_bar, measured);
        let u = self.input(own, &eta, gen.z, gates);
        let y = self.plant.output(x);

        let dx = &mut out[l.x()];
        self.plant.a.mul_vec_into(x, dx);
        if gates.disturbance {
            self.plant.e.mul_vec_acc(w, dx);
        }
        for (d, b) in dx.iter_mut().zip(self.plant.b.as_slice()) {
            *d += b * u;
        }
        self.s.mul_vec_into(w, &mut out[l.w()]);
        self.observer.rhs_into(measured, u, eta_bar, &mut out[l.eta_bar()]);
        if let Law::Output(g) = &self.law {
            let dxi = output_feedback_rhs(g, &self.plant, y, u, measured);
            out[l.xi()].copy_from_slice(&dxi);
        }

        let grad = match self.law {
            Law::Gradient(_) => self.cost.grad(y),
            _ => self.cost.grad(gen.z),
        };
        let dg = local_generator_rhs(gen, grad, self.cost.d, messages);
        let g = l.generator();
        out[g] = dg.z;
        out[g + 1] = dg.lam;
        out[g + 2] = dg.v;
    }

    pub fn sample(&self, own: &[f64], gates: Gates) -> AgentSample {
        let l = self.layout;
        let gen = self.generator(own);
        let eta = self.observer.estimate(&own[l.eta_bar()], self.measured(own));
        let u = self.input(own, &eta, gen.z, gates);
        let w = &own[l.w()];
        let err: Vec<f64> = if gates.disturbance {
            eta.iter().zip(w).map(|(e, w)| e - w).collect()
        } else {
            eta
        };
        AgentSample {
            y: self.plant.output(&own[l.x()]),
            u,
            z: gen.z,
            lam: gen.lam,
            v: gen.v,
            eta_err: norm2(&err),
        }
    }
}
