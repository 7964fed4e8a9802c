//! Fixed-step closed-loop integration of all agents, their controllers and
//! the embedded generator, with timed switching events and metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::control::{AgentLoop, AgentSample, ControlLawKind, Gates};
use crate::costs::{AllocationProblem, LocalCost};
use crate::error::{Error, Result};
use crate::generator::{
    generator_rhs, kkt_check, solve_allocation_oracle, Allocation, GeneratorState, LocalGenerator, NeighborMessage,
};
use crate::graph::SharingGraph;
use crate::plant::{AgentPlant, DisturbanceModel};
use crate::synthesis::{synthesize, AgentSynthesis, SynthesisOptions, DEFAULT_EPS};

/// Largest `dt / ε` accepted for the high-gain law.
pub const HIGH_GAIN_STEP_RATIO: f64 = 1.0 / 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventAction {
    EnableDisturbance,
    EnableRejection,
}

/// Switches `action` on at the first grid point at or after `time`, for
/// one agent or (with `agent = None`) for all of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub action: EventAction,
    pub agent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub plant: AgentPlant,
    pub disturbance: DisturbanceModel,
    pub cost: LocalCost,
    pub x0: Vec<f64>,
    /// Generator start overriding the scenario-wide rule.
    pub z0: Option<f64>,
    pub lam0: Option<f64>,
    pub options: SynthesisOptions,
}

/// How the generator states are initialised when an agent does not give
/// them explicitly. Both rules use local data only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorStart {
    /// `z = y(0)`, `λ = 0`, `v = 0`.
    #[default]
    AtOutput,
    /// `z = y(0)`, `λ = ∇f(y(0))`, `v = 0`, so that `ż(0) = 0`.
    AtRest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: SharingGraph,
    pub agents: Vec<AgentSpec>,
    pub law: ControlLawKind,
    pub t_end: f64,
    pub dt: f64,
    /// Record every `decimate`-th step.
    pub decimate: usize,
    pub events: Vec<Event>,
    pub generator_start: GeneratorStart,
}

impl Scenario {
    /// Shape and assumption checks that do not need synthesis.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "need dt > 0 and t_end >= dt, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.decimate == 0 {
            return Err(Error::InvalidInput("decimate must be at least 1".into()));
        }
        if self.agents.len() != self.graph.n() || self.agents.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} agents on a graph with {} nodes",
                self.agents.len(),
                self.graph.n()
            )));
        }
        if !self.graph.is_connected() {
            return Err(Error::Disconnected);
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.x0.len() != a.plant.n() || a.disturbance.q() != a.plant.q() {
                return Err(Error::DimensionMismatch(format!(
                    "agent {}: initial state or exosystem does not fit the plant",
                    i + 1
                )));
            }
            if self.law == ControlLawKind::RealtimeGradient {
                let limit = a.options.eps.unwrap_or(DEFAULT_EPS) * HIGH_GAIN_STEP_RATIO;
                if self.dt > limit * (1.0 + 1e-12) {
                    return Err(Error::StepTooLarge { dt: self.dt, limit });
                }
            }
        }
        for e in &self.events {
            if e.agent.is_some_and(|i| i >= self.agents.len()) || !e.time.is_finite() {
                return Err(Error::InvalidInput(format!("event {e:?} is out of range")));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<AllocationProblem> {
        AllocationProblem::new(self.agents.iter().map(|a| a.cost).collect())
    }

    pub fn steps(&self) -> usize {
        libm::floor(self.t_end / self.dt + 1e-9) as usize
    }

    pub fn synthesize(&self) -> Result<Vec<AgentSynthesis>> {
        self.agents
            .iter()
            .map(|a| synthesize(&a.plant, &a.disturbance.s, self.law, &a.options))
            .collect()
    }

    /// Gates in force before any event fires: an action is initially on
    /// unless some event switches it on later.
    fn initial_gates(&self) -> Vec<Gates> {
        (0..self.agents.len())
            .map(|i| {
                let pending = |act| {
                    self.events
                        .iter()
                        .any(|e| e.action == act && e.agent.is_none_or(|j| j == i))
                };
                Gates {
                    disturbance: !pending(EventAction::EnableDisturbance),
                    rejection: !pending(EventAction::EnableRejection),
                }
            })
            .collect()
    }
}

/// All agents assembled into one autonomous system on a flat state vector.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    loops: Vec<AgentLoop>,
    offsets: Vec<usize>,
    neighbors: Vec<Vec<(usize, f64)>>,
    len: usize,
}

impl ClosedLoop {
    pub fn new(scenario: &Scenario, syntheses: &[AgentSynthesis]) -> Result<Self> {
        if syntheses.len() != scenario.agents.len() {
            return Err(Error::DimensionMismatch("one synthesis record per agent".into()));
        }
        let mut loops = Vec::with_capacity(syntheses.len());
        let mut offsets = Vec::with_capacity(syntheses.len());
        let mut len = 0;
        for (a, syn) in scenario.agents.iter().zip(syntheses) {
            let l = AgentLoop::new(a.plant.clone(), a.disturbance.s.clone(), a.cost, scenario.law, syn)?;
            offsets.push(len);
            len += l.layout().len();
            loops.push(l);
        }
        let neighbors = (0..scenario.graph.n())
            .map(|i| scenario.graph.neighbors(i).collect())
            .collect();
        Ok(ClosedLoop {
            loops,
            offsets,
            neighbors,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn agents(&self) -> &[AgentLoop] {
        &self.loops
    }

    pub fn slice<'a>(&self, state: &'a [f64], i: usize) -> &'a [f64] {
        &state[self.offsets[i]..self.offsets[i] + self.loops[i].layout().len()]
    }

    pub fn initial_state(&self, scenario: &Scenario) -> Result<Vec<f64>> {
        let mut st = Vec::with_capacity(self.len);
        for (l, a) in self.loops.iter().zip(&scenario.agents) {
            let z = a.z0.unwrap_or_else(|| a.plant.output(&a.x0));
            let lam = a.lam0.unwrap_or(match scenario.generator_start {
                GeneratorStart::AtOutput => 0.0,
                GeneratorStart::AtRest => a.cost.grad(z),
            });
            let gen = LocalGenerator { z, lam, v: 0.0 };
            st.extend(l.initial_state(&a.x0, &a.disturbance.w0, gen)?);
        }
        Ok(st)
    }

    /// What agent `j` publishes to its neighbors.
    fn published(&self, state: &[f64], j: usize) -> (f64, f64) {
        let g = self.offsets[j] + self.loops[j].layout().generator();
        (state[g + 1], state[g + 2])
    }

    pub fn derivative(&self, state: &[f64], gates: &[Gates], out: &mut [f64]) {
        let mut messages = Vec::new();
        for (i, l) in self.loops.iter().enumerate() {
            messages.clear();
            messages.extend(self.neighbors[i].iter().map(|&(j, weight)| {
                let (lam, v) = self.published(state, j);
                NeighborMessage { weight, lam, v }
            }));
            let range = self.offsets[i]..self.offsets[i] + l.layout().len();
            l.rhs(&state[range.clone()], &messages, gates[i], &mut out[range]);
        }
    }

    pub fn samples(&self, state: &[f64], gates: &[Gates]) -> Vec<AgentSample> {
        self.loops
            .iter()
            .enumerate()
            .map(|(i, l)| l.sample(self.slice(state, i), gates[i]))
            .collect()
    }

    pub fn mean_v(&self, state: &[f64]) -> f64 {
        let n = self.loops.len();
        (0..n).map(|j| self.published(state, j).1).sum::<f64>() / n as f64
    }
}

/// Classical fourth-order Runge–Kutta with preallocated stages.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Rk4 {
            k: [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            tmp: vec![0.0; len],
        }
    }

    pub fn step<F: FnMut(&[f64], &mut [f64])>(&mut self, mut f: F, x: &mut [f64], dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        f(x, k1);
        for ((t, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(k1.iter()) {
            *t = x + 0.5 * dt * k;
        }
        f(&self.tmp, k2);
        for ((t, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(k2.iter()) {
            *t = x + 0.5 * dt * k;
        }
        f(&self.tmp, k3);
        for ((t, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(k3.iter()) {
            *t = x + dt * k;
        }
        f(&self.tmp, k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Decimated samples of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `rows[k][i]` is agent `i` at `times[k]`.
    pub rows: Vec<Vec<AgentSample>>,
    pub mean_v: Vec<f64>,
    /// Largest `|mean(v(t)) − mean(v(0))|` over every step, recorded or not.
    pub max_mean_v_drift: f64,
    pub final_state: Vec<f64>,
    /// Resources `dᵢ`, kept for evaluation.
    pub resources: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn agents(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn final_outputs(&self) -> Vec<f64> {
        self.rows
            .last()
            .map(|r| r.iter().map(|s| s.y).collect())
            .unwrap_or_default()
    }

    /// Output of agent `i` over the recorded times.
    pub fn output_series(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i].y).collect()
    }
}

/// Synthesizes, assembles and integrates a scenario.
pub fn simulate(scenario: &Scenario) -> Result<(Vec<AgentSynthesis>, TrajectoryRecord)> {
    scenario.validate()?;
    let syn = scenario.synthesize()?;
    let rec = integrate(scenario, &syn)?;
    Ok((syn, rec))
}

/// Fixed-step RK4 on the assembled closed loop. Events switch gates at the
/// first grid point at or after their time; the exosystem states evolve
/// from `t = 0` regardless of whether the plant sees them.
pub fn integrate(scenario: &Scenario, syntheses: &[AgentSynthesis]) -> Result<TrajectoryRecord> {
    scenario.validate()?;
    let cl = ClosedLoop::new(scenario, syntheses)?;
    let mut state = cl.initial_state(scenario)?;
    let mut gates = scenario.initial_gates();
    let steps = scenario.steps();
    let dt = scenario.dt;
    let mut rk = Rk4::new(cl.len());
    let mean_v0 = cl.mean_v(&state);
    let rows_hint = steps / scenario.decimate + 1;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(rows_hint),
        rows: Vec::with_capacity(rows_hint),
        mean_v: Vec::with_capacity(rows_hint),
        max_mean_v_drift: 0.0,
        final_state: Vec::new(),
        resources: scenario.agents.iter().map(|a| a.cost.d).collect(),
    };
    let mut fired = vec![false; scenario.events.len()];
    for k in 0..=steps {
        let t = k as f64 * dt;
        for (e, done) in scenario.events.iter().zip(fired.iter_mut()) {
            if !*done && t >= e.time - 1e-9 * dt {
                *done = true;
                for (i, g) in gates.iter_mut().enumerate() {
                    if e.agent.is_none_or(|j| j == i) {
                        match e.action {
                            EventAction::EnableDisturbance => g.disturbance = true,
                            EventAction::EnableRejection => g.rejection = true,
                        }
                    }
                }
            }
        }
        let mv = cl.mean_v(&state);
        rec.max_mean_v_drift = rec.max_mean_v_drift.max((mv - mean_v0).abs());
        if k % scenario.decimate == 0 || k == steps {
            rec.times.push(t);
            rec.rows.push(cl.samples(&state, &gates));
            rec.mean_v.push(mv);
        }
        if k == steps {
            break;
        }
        rk.step(|x, dx| cl.derivative(x, &gates, dx), &mut state, dt);
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { t: t + dt });
        }
    }
    rec.final_state = state;
    Ok(rec)
}

/// Final-window metrics. All entries are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    /// `maxᵢ |yᵢ − zᵢ|`
    pub tracking_error: f64,
    /// `‖y − y*‖₂`
    pub optimality_gap: f64,
    /// `|Σyᵢ − Σdᵢ|`
    pub constraint_residual: f64,
    /// `maxᵢ |∇fᵢ(yᵢ) − mean ∇f|`
    pub grad_spread: f64,
}

/// Least-squares fit of `ln e(t) ≈ intercept + slope·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub oracle: Allocation,
    /// Fit of `maxᵢ |yᵢ − yᵢ*|` over the default window, when it is crossed.
    pub rate: Option<RateFit>,
}

/// Error band used for rate fits: from `1e-2` down to `1e-6`.
pub const RATE_WINDOW: (f64, f64) = (1e-6, 1e-2);

/// Fraction of recorded rows averaged into the final metrics.
pub const FINAL_WINDOW: f64 = 0.05;

pub fn evaluate(rec: &TrajectoryRecord, problem: &AllocationProblem) -> Result<Evaluation> {
    if rec.rows.is_empty() || rec.agents() != problem.n() {
        return Err(Error::InvalidInput(
            "record is empty or has the wrong agent count".into(),
        ));
    }
    let oracle = solve_allocation_oracle(problem)?;
    let metrics = final_window_metrics(rec, problem, &oracle.y);
    let errors: Vec<f64> = rec
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&oracle.y)
                .fold(0.0, |m, (s, y)| f64::max(m, (s.y - y).abs()))
        })
        .collect();
    let rate = fit_exponential_rate(&rec.times, &errors, RATE_WINDOW);
    Ok(Evaluation { metrics, oracle, rate })
}

pub fn final_window_metrics(rec: &TrajectoryRecord, problem: &AllocationProblem, ystar: &[f64]) -> Metrics {
    let count = ((rec.rows.len() as f64 * FINAL_WINDOW).ceil() as usize).clamp(1, rec.rows.len());
    let mut acc = Metrics::default();
    for row in &rec.rows[rec.rows.len() - count..] {
        let y: Vec<f64> = row.iter().map(|s| s.y).collect();
        let kkt = kkt_check(&y, problem);
        acc.tracking_error += row.iter().fold(0.0, |m, s| f64::max(m, (s.y - s.z).abs()));
        acc.optimality_gap += libm::sqrt(y.iter().zip(ystar).map(|(a, b)| (a - b) * (a - b)).sum());
        acc.constraint_residual += kkt.constraint_residual;
        acc.grad_spread += kkt.grad_spread;
    }
    let c = count as f64;
    Metrics {
        tracking_error: acc.tracking_error / c,
        optimality_gap: acc.optimality_gap / c,
        constraint_residual: acc.constraint_residual / c,
        grad_spread: acc.grad_spread / c,
    }
}

/// Fits the contiguous stretch that starts at the first sample with
/// `e ≤ hi` and ends just before the first later sample with `e ≤ lo`.
/// `None` when fewer than three usable samples exist.
pub fn fit_exponential_rate(times: &[f64], errors: &[f64], (lo, hi): (f64, f64)) -> Option<RateFit> {
    let start = errors.iter().position(|e| *e <= hi)?;
    let end = errors[start..]
        .iter()
        .position(|e| *e <= lo)
        .map_or(errors.len(), |k| start + k + 1);
    let pts: Vec<(f64, f64)> = times[start..end]
        .iter()
        .zip(&errors[start..end])
        .filter(|(_, e)| **e > 0.0)
        .map(|(t, e)| (*t, libm::log(*e)))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sll: f64 = pts.iter().map(|p| (p.1 - ml) * (p.1 - ml)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = stl / stt;
    let r_squared = if sll == 0.0 { 1.0 } else { stl * stl / (stt * sll) };
    Some(RateFit {
        slope,
        intercept: ml - slope * mt,
        r_squared,
        samples: pts.len(),
    })
}

/// Generator alone on the network, gradients taken at `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRun {
    pub times: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub mean_v: Vec<f64>,
    pub final_state: GeneratorState,
}

pub fn run_generator(
    problem: &AllocationProblem,
    graph: &SharingGraph,
    start: GeneratorState,
    t_end: f64,
    dt: f64,
    decimate: usize,
) -> Result<GeneratorRun> {
    let n = problem.n();
    if graph.n() != n || start.n() != n {
        return Err(Error::DimensionMismatch(
            "generator size does not match the graph".into(),
        ));
    }
    if !(dt > 0.0 && t_end >= dt) || decimate == 0 {
        return Err(Error::InvalidInput("need dt > 0, t_end >= dt, decimate >= 1".into()));
    }
    let bundle = graph.laplacian();
    let pack = |s: &GeneratorState, out: &mut [f64]| {
        out[..n].copy_from_slice(&s.z);
        out[n..2 * n].copy_from_slice(&s.lam);
        out[2 * n..].copy_from_slice(&s.v);
    };
    let unpack = |x: &[f64]| GeneratorState {
        z: x[..n].to_vec(),
        lam: x[n..2 * n].to_vec(),
        v: x[2 * n..].to_vec(),
    };
    let mut x = vec![0.0; 3 * n];
    pack(&start, &mut x);
    let mut rk = Rk4::new(3 * n);
    let steps = libm::floor(t_end / dt + 1e-9) as usize;
    let mut run = GeneratorRun {
        times: Vec::new(),
        z: Vec::new(),
        mean_v: Vec::new(),
        final_state: start,
    };
    for k in 0..=steps {
        if k % decimate == 0 || k == steps {
            run.times.push(k as f64 * dt);
            run.z.push(x[..n].to_vec());
            run.mean_v.push(x[2 * n..].iter().sum::<f64>() / n as f64);
        }
        if k == steps {
            break;
        }
        rk.step(
            |x, dx| {
                let d = generator_rhs(&unpack(x), problem, &bundle);
                pack(&d, dx);
            },
            &mut x,
            dt,
        );
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { t: (k + 1) as f64 * dt });
        }
    }
    run.final_state = unpack(&x);
    Ok(run)
}

/// Reproducible uniform draws in `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    rng: ChaCha8Rng,
    lo: f64,
    hi: f64,
}

impl InitialSampler {
    pub fn new(seed: u64, (lo, hi): (f64, f64)) -> Self {
        InitialSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lo,
            hi,
        }
    }

    pub fn draw(&mut self) -> f64 {
        let u = (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        self.lo + (self.hi - self.lo) * u
    }

    pub fn draw_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw()).collect()
    }
}
