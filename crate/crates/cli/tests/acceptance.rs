//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::cell::Cell;
use std::process::ExitCode;
use std::time::Instant;

use dosr_cli::scenario::{bundled, parse_scenario, prepare, Overrides, Prepared};
use dosr_core::costs::CostKind;
use dosr_core::generator::{solve_allocation_oracle, GeneratorState};
use dosr_core::numerics::{expm, norm2};
use dosr_core::sim::{
    evaluate, fit_exponential_rate, run_generator, simulate, InitialSampler, TrajectoryRecord, RATE_WINDOW,
};
use dosr_core::synthesis::AgentSynthesis;

const SCENARIOS: [&str; 3] = ["example1", "example2", "example3"];

fn load(name: &str, ov: &Overrides) -> Prepared {
    let file = parse_scenario(bundled(name).expect("bundled scenario")).expect("bundled scenario parses");
    prepare(&file, ov).expect("bundled scenario prepares")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Largest mean(v) drift seen over every bundled run made by this suite.
struct DriftLog(Cell<f64>);

impl DriftLog {
    fn note(&self, rec: &TrajectoryRecord) {
        self.0.set(self.0.get().max(rec.max_mean_v_drift));
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn inventory_reproduction(drift: &DriftLog) -> Verdict {
    let reported = [4.57, 2.41, 1.69, 1.33];
    let prep = load("example2", &Overrides::default());
    let sc = &prep.axes[0];
    let started = Instant::now();
    let (_, rec) = match simulate(sc) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("simulation failed: {e}")),
    };
    let runtime = started.elapsed().as_secs_f64();
    drift.note(&rec);
    let y = rec.final_outputs();
    let oracle = solve_allocation_oracle(&sc.problem().unwrap()).unwrap();
    // closed form: I_i = θ/(0.2 i) + 0.25 with Σ I_i = Σ i = 10
    let theta = 9.0 / (5.0 * (1.0 + 1.0 / 2.0 + 1.0 / 3.0 + 1.0 / 4.0));
    let dev_reported = max_abs_diff(&y, &reported);
    let dev_oracle = max_abs_diff(&oracle.y, &reported);
    let pass = dev_reported <= 0.01 && dev_oracle <= 0.01 && (oracle.theta - theta).abs() < 1e-6 && runtime < 10.0;
    verdict(
        pass,
        format!(
            "final I = {}, max deviation {dev_reported:.2e}; oracle theta {:.6} vs closed form {theta:.6}; {runtime:.2} s",
            fmt_vec(&y),
            oracle.theta
        ),
    )
}

fn rendezvous_reproduction(drift: &DriftLog) -> Verdict {
    let mut worst = (0.0f64, 0u64);
    let mut slowest = 0.0f64;
    let mut failures = 0;
    for seed in 1..=20u64 {
        let prep = load(
            "example1",
            &Overrides {
                seed: Some(seed),
                ..Overrides::default()
            },
        );
        let started = Instant::now();
        let mut dev = 0.0f64;
        for sc in &prep.axes {
            let start: Vec<f64> = sc.agents.iter().map(|a| a.plant.output(&a.x0)).collect();
            let target = start.iter().sum::<f64>() / start.len() as f64;
            match simulate(sc) {
                Ok((_, rec)) => {
                    drift.note(&rec);
                    dev = rec.final_outputs().iter().fold(dev, |m, y| m.max((y - target).abs()));
                }
                Err(_) => dev = f64::INFINITY,
            }
        }
        slowest = slowest.max(started.elapsed().as_secs_f64());
        if !(dev < 1e-3) {
            failures += 1;
        }
        if !(dev <= worst.0) {
            worst = (dev, seed);
        }
    }
    verdict(
        failures == 0 && slowest < 10.0,
        format!(
            "{failures}/20 seeds miss 1e-3 at t = 30; worst deviation {:.2e} (seed {}); slowest seed {slowest:.2} s",
            worst.0, worst.1
        ),
    )
}

fn coordination_reproduction(drift: &DriftLog) -> Verdict {
    let reported = [2.2, 0.7, 2.0, 5.1];
    let prep = load("example3", &Overrides::default());
    let sc = &prep.axes[0];
    let (_, rec) = match simulate(sc) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("simulation failed: {e}")),
    };
    drift.note(&rec);
    let ystar = solve_allocation_oracle(&sc.problem().unwrap()).unwrap().y;
    let before = rec.times.iter().rposition(|t| *t <= 40.0 + 1e-9).unwrap();
    let y40: Vec<f64> = rec.rows[before].iter().map(|s| s.y).collect();
    let vs_reported = max_abs_diff(&y40, &reported);
    let vs_oracle = max_abs_diff(&y40, &ystar);
    let err = |k: usize| {
        rec.rows[k]
            .iter()
            .zip(&ystar)
            .fold(0.0, |m, (s, y)| f64::max(m, (s.y - y).abs()))
    };
    let after: Vec<usize> = (0..rec.times.len()).filter(|&k| rec.times[k] >= 60.0 - 1e-9).collect();
    let peak = (0..rec.times.len())
        .filter(|&k| rec.times[k] > 40.0 && rec.times[k] < 60.0)
        .map(err)
        .fold(0.0, f64::max);
    // time after 60 s from which the error stays inside `band`
    let settle = |band: f64| match after.iter().rev().find(|&&k| !(err(k) < band)) {
        None => Some(0.0),
        Some(&k) if k + 1 < rec.times.len() => Some(rec.times[k + 1] - 60.0),
        Some(_) => None,
    };
    let recovery = settle(1e-2);
    let tight = settle(1e-6);
    let pass = vs_reported <= 0.1 && vs_oracle <= 1e-3 && recovery.is_some_and(|r| r <= 20.0);
    verdict(
        pass,
        format!(
            "y(40) = {}, off the reported optimum by {vs_reported:.3}, off oracle by {vs_oracle:.2e}; disturbed peak error {peak:.2e}; \
             within 1e-2 {} and within 1e-6 {} after rejection starts",
            fmt_vec(&y40),
            recovery.map_or("never".to_string(), |r| format!("{r:.2} s")),
            tight.map_or("never".to_string(), |r| format!("{r:.2} s"))
        ),
    )
}

fn generator_rate() -> Verdict {
    let prep = load("example2", &Overrides::default());
    let sc = &prep.axes[0];
    let problem = sc.problem().unwrap();
    let ystar = solve_allocation_oracle(&problem).unwrap().y;
    let mut start = GeneratorState::zeros(problem.n());
    start.z = sc.agents.iter().map(|a| a.plant.output(&a.x0)).collect();
    let run = run_generator(&problem, &sc.graph, start, 200.0, 1e-3, 10).unwrap();
    let errors: Vec<f64> = run
        .z
        .iter()
        .map(|z| norm2(&z.iter().zip(&ystar).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .collect();
    match fit_exponential_rate(&run.times, &errors, RATE_WINDOW) {
        Some(fit) => verdict(
            fit.slope < 0.0 && fit.r_squared >= 0.99,
            format!(
                "slope {:.4} /s, R^2 {:.6} over {} samples",
                fit.slope, fit.r_squared, fit.samples
            ),
        ),
        None => verdict(false, "error never crossed the fit window".into()),
    }
}

fn observer_decay(drift: &DriftLog) -> Verdict {
    let prep = load("example3", &Overrides::default());
    let mut sc = prep.axes[0].clone();
    // disturbance and rejection active from the start
    sc.events.clear();
    sc.t_end = 10.0;
    sc.dt = 1e-3;
    sc.decimate = 100;
    let (syns, rec) = match simulate(&sc) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("simulation failed: {e}")),
    };
    drift.note(&rec);
    let mut worst = 0.0f64;
    for (i, (agent, syn)) in sc.agents.iter().zip(&syns).enumerate() {
        let plant = &agent.plant;
        let error_matrix = &agent.disturbance.s - &(syn.gains.lbar() * &plant.e);
        // η(0) = 0, so the error starts at −ω(0)
        let e0: Vec<f64> = agent.disturbance.w0.iter().map(|w| -w).collect();
        for (t, row) in rec.times.iter().zip(&rec.rows) {
            let predicted = norm2(&expm(&error_matrix.scale(*t)).unwrap().mul_vec(&e0));
            worst = worst.max((row[i].eta_err - predicted).abs());
        }
    }
    verdict(
        worst <= 1e-6,
        format!("max |‖η−ω‖ − prediction| over 4 agents, t in [0, 10]: {worst:.2e}"),
    )
}

fn bundled_syntheses() -> Vec<(String, Result<Vec<AgentSynthesis>, String>)> {
    let mut out = Vec::new();
    for name in SCENARIOS {
        let prep = load(name, &Overrides::default());
        for (k, sc) in prep.axes.iter().enumerate() {
            out.push((
                format!("{name} axis {}", k + 1),
                sc.synthesize().map_err(|e| e.to_string()),
            ));
        }
    }
    out
}

fn regulator_residuals() -> Verdict {
    let mut worst = 0.0f64;
    for (label, syns) in bundled_syntheses() {
        match syns {
            Ok(s) => worst = s.iter().fold(worst, |m, a| m.max(a.residuals.max())),
            Err(e) => return verdict(false, format!("{label}: {e}")),
        }
    }
    verdict(worst <= 1e-10, format!("largest residual {worst:.2e}"))
}

fn gain_abscissas() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for (label, syns) in bundled_syntheses() {
        match syns {
            Ok(s) => {
                for a in &s {
                    worst = worst.max(a.abscissas.worst());
                    count += 1;
                }
            }
            Err(e) => return verdict(false, format!("{label}: {e}")),
        }
    }
    verdict(
        worst < -1e-6,
        format!("{count} agent syntheses, largest spectral abscissa {worst:.4}"),
    )
}

fn gradient_registry() -> Verdict {
    let kinds = [
        ("quadratic", CostKind::Quadratic { a: 0.5, b: 2.0, c: 2.0 }),
        ("quad_log", CostKind::QuadLog { delta: 1.0 }),
        ("log_sum_exp2", CostKind::LogSumExp2 { p: -0.1, q: 0.3 }),
        ("sqrt_frac", CostKind::SqrtFrac { s: 25.0, c: 3.0 }),
    ];
    let mut sampler = InitialSampler::new(2024, (-10.0, 10.0));
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, kind) in kinds {
        let mut worst = 0.0f64;
        for y in sampler.draw_vec(100) {
            let h = 1e-5 * y.abs().max(1.0);
            let fd = (kind.value(y + h) - kind.value(y - h)) / (2.0 * h);
            let g = kind.grad(y);
            worst = worst.max((fd - g).abs() / g.abs().max(1.0));
        }
        pass &= worst <= 1e-6;
        parts.push(format!("{name} {worst:.1e}"));
    }
    verdict(pass, format!("worst relative error per kind: {}", parts.join(", ")))
}

fn eps_threshold(drift: &DriftLog) -> Verdict {
    let mut parts = Vec::new();
    let mut smallest_ok = false;
    let values = [1.0, 0.5, 0.2, 0.1];
    for eps in values {
        let base = load("example3", &Overrides::default());
        let dt = base.axes[0].dt.min(eps / 50.0);
        let prep = load(
            "example3",
            &Overrides {
                eps: Some(eps),
                dt: Some(dt),
                ..Overrides::default()
            },
        );
        let sc = &prep.axes[0];
        let gap = match simulate(sc) {
            Ok((_, rec)) => {
                drift.note(&rec);
                evaluate(&rec, &sc.problem().unwrap()).map_or(f64::INFINITY, |ev| ev.metrics.optimality_gap)
            }
            Err(dosr_core::Error::NonFiniteState { t }) => {
                parts.push(format!("eps {eps}: diverged, state non-finite at t = {t:.2}"));
                continue;
            }
            Err(e) => {
                parts.push(format!("eps {eps}: {e}"));
                continue;
            }
        };
        let converged = gap < 1e-2;
        if eps == values[values.len() - 1] {
            smallest_ok = converged;
        }
        parts.push(format!(
            "eps {eps}: gap {gap:.2e} {}",
            if converged { "converged" } else { "not converged" }
        ));
    }
    verdict(smallest_ok, parts.join("; "))
}

fn main() -> ExitCode {
    let drift = DriftLog(Cell::new(0.0));
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut report = |n: usize, name: &'static str, v: Verdict| {
        println!(
            "criterion {n:>2} {name}: {} | {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((name, v));
    };
    report(1, "inventory example reproduction", inventory_reproduction(&drift));
    report(2, "rendezvous example reproduction", rendezvous_reproduction(&drift));
    report(
        3,
        "coordination example reproduction",
        coordination_reproduction(&drift),
    );
    report(4, "generator exponential convergence", generator_rate());
    report(5, "disturbance observer decay", observer_decay(&drift));
    report(6, "regulator equation residuals", regulator_residuals());
    report(7, "closed-loop gain verification", gain_abscissas());
    report(8, "gradient registry", gradient_registry());
    report(9, "high-gain eps threshold", eps_threshold(&drift));
    let worst = drift.0.get();
    report(
        10,
        "generator mean(v) invariant",
        verdict(
            worst <= 1e-8,
            format!("largest |mean v(t) - mean v(0)| over every run above: {worst:.2e}"),
        ),
    );
    let failed = results.iter().filter(|(_, v)| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
