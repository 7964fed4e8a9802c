//! The four subcommands, written against [`Prepared`] scenarios so that
//! tests can drive them without spawning a process.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dosr_core::generator::{kkt_check, solve_allocation_oracle};
use dosr_core::plant::check_observable;
use dosr_core::sim::{evaluate, simulate, Scenario, HIGH_GAIN_STEP_RATIO};
use dosr_core::synthesis::{ControlLawKind, DEFAULT_EPS};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::output::{axis_metrics, synthesis_json, write_csv, write_json};
use crate::scenario::{law_name, load_scenario, prepare, Overrides, Prepared};

/// Samples used by the curvature check.
const CONVEXITY_SAMPLES: usize = 4001;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    /// `None` for network-wide items.
    pub agent: Option<usize>,
    pub name: &'static str,
    pub pass: bool,
    /// Failures of items the selected law does not rely on are reported
    /// but do not block a run.
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.pass || !i.required)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckItem> {
        self.items.iter().filter(|i| !i.pass && i.required)
    }

    fn push(&mut self, agent: Option<usize>, name: &'static str, pass: bool, required: bool, detail: String) {
        self.items.push(CheckItem {
            agent,
            name,
            pass,
            required,
            detail,
        });
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for it in &self.items {
            let verdict = match (it.pass, it.required) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "WARN",
            };
            let who = it
                .agent
                .map_or_else(|| "network".to_string(), |i| format!("agent {}", i + 1));
            writeln!(f, "{verdict}  {who:<8}  {:<24}  {}", it.name, it.detail)?;
        }
        Ok(())
    }
}

/// Structural predicates of one axis (all axes share plants and graph).
pub fn check(sc: &Scenario) -> CheckReport {
    let mut rep = CheckReport::default();
    let connected = sc.graph.is_connected();
    rep.push(
        None,
        "connectivity",
        connected,
        true,
        if connected {
            "sharing graph is connected".into()
        } else {
            "sharing graph is not connected".into()
        },
    );
    let rtg = sc.law == ControlLawKind::RealtimeGradient;
    for (i, a) in sc.agents.iter().enumerate() {
        let p = &a.plant;
        let s = &a.disturbance.s;
        let c = &a.cost;
        let interval = dosr_core::costs::DEFAULT_OPERATING_INTERVAL;
        let convex = c.validate_bounds(interval, CONVEXITY_SAMPLES);
        rep.push(
            Some(i),
            "convexity bounds",
            convex.is_ok(),
            true,
            match convex {
                Ok(()) => format!(
                    "curvature in [{:.4}, {:.4}] on [{}, {}]",
                    c.h_lo, c.h_hi, interval.0, interval.1
                ),
                Err(e) => e.to_string(),
            },
        );
        if a.disturbance.q() == 0 {
            rep.push(Some(i), "regulator rank", true, true, "no exosystem".into());
        } else {
            let rank = p.regulator_rank_check(s);
            rep.push(
                Some(i),
                "regulator rank",
                matches!(rank, Ok(true)),
                true,
                match rank {
                    Ok(true) => "full row rank at every exosystem eigenvalue".into(),
                    Ok(false) => "rank drops at an exosystem eigenvalue".into(),
                    Err(e) => e.to_string(),
                },
            );
        }
        let minimal = p.is_minimal();
        rep.push(
            Some(i),
            "minimality",
            minimal,
            true,
            format!(
                "controllable: {}, observable: {}",
                p.is_controllable(),
                p.is_observable()
            ),
        );
        let observable = a.disturbance.q() == 0 || check_observable(&p.e, s);
        rep.push(
            Some(i),
            "(E, S) observability",
            observable,
            true,
            if a.disturbance.q() == 0 {
                "no exosystem".into()
            } else {
                format!("q = {}", a.disturbance.q())
            },
        );
        let rel = p.relative_degree();
        rep.push(
            Some(i),
            "relative degree",
            rel.is_ok(),
            true,
            match &rel {
                Ok(r) => format!("r = {r}"),
                Err(e) => e.to_string(),
            },
        );
        let phase = p
            .normal_form()
            .and_then(|nf| Ok((nf.is_minimum_phase()?, nf.zero_abscissa()?)));
        rep.push(
            Some(i),
            "minimum phase",
            matches!(phase, Ok((true, _))),
            rtg,
            match phase {
                Ok((_, ab)) if ab == f64::NEG_INFINITY => "no zero dynamics".into(),
                Ok((_, ab)) => format!("zero-dynamics abscissa {ab:.4}"),
                Err(e) => e.to_string(),
            },
        );
    }
    rep
}

pub fn check_path(path: &Path) -> CliResult<CheckReport> {
    let prep = prepare(&load_scenario(path)?, &Overrides::default())?;
    Ok(check(&prep.axes[0]))
}

/// Outcome of simulating every axis of one scenario.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv: Vec<PathBuf>,
    pub metrics_path: PathBuf,
    pub metrics: Value,
    /// Largest final optimality gap across axes.
    pub worst_gap: f64,
}

/// Synthesis, integration and evaluation of every axis, writing
/// `<stem>.csv` (or `<stem>_axis<k>.csv`) and `<stem>.metrics.json`.
pub fn run(prep: &Prepared, out_dir: &Path, stem: &str, force: bool) -> CliResult<RunOutcome> {
    let report = check(&prep.axes[0]);
    if !report.passed() && !force {
        let list: Vec<String> = report
            .failures()
            .map(|f| match f.agent {
                Some(i) => format!("agent {}: {} ({})", i + 1, f.name, f.detail),
                None => format!("{} ({})", f.name, f.detail),
            })
            .collect();
        return Err(CliError::Assumption(format!(
            "assumption check failed: {}; pass --force to run anyway",
            list.join("; ")
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(format!("creating {}", out_dir.display()), e))?;
    let mut csv = Vec::new();
    let mut axes = Vec::new();
    let mut worst_gap = 0.0f64;
    for (k, sc) in prep.axes.iter().enumerate() {
        let started = Instant::now();
        let (_, rec) = simulate(sc)?;
        let ev = evaluate(&rec, &sc.problem()?)?;
        let runtime = started.elapsed().as_secs_f64();
        let path = if prep.axes.len() == 1 {
            out_dir.join(format!("{stem}.csv"))
        } else {
            out_dir.join(format!("{stem}_axis{}.csv", k + 1))
        };
        write_csv(&path, &rec)?;
        worst_gap = worst_gap.max(if ev.metrics.optimality_gap.is_nan() {
            f64::INFINITY
        } else {
            ev.metrics.optimality_gap
        });
        let mut m = axis_metrics(&rec, &ev, runtime);
        m["axis"] = json!(k + 1);
        m["csv"] = json!(path.file_name().map(|n| n.to_string_lossy().into_owned()));
        axes.push(m);
        csv.push(path);
    }
    let sc = &prep.axes[0];
    let metrics = json!({
        "scenario": prep.name,
        "law": law_name(prep.law),
        "seed": prep.seed,
        "dt": sc.dt,
        "t_end": sc.t_end,
        "axes": axes,
    });
    let metrics_path = out_dir.join(format!("{stem}.metrics.json"));
    write_json(&metrics_path, &metrics)?;
    Ok(RunOutcome {
        csv,
        metrics_path,
        metrics,
        worst_gap,
    })
}

/// One entry of an ε sweep.
#[derive(Debug)]
pub struct SweepEntry {
    pub eps: f64,
    pub dt: f64,
    pub outcome: CliResult<RunOutcome>,
}

impl SweepEntry {
    pub fn converged(&self, tol: f64) -> bool {
        self.outcome.as_ref().is_ok_and(|o| o.worst_gap < tol)
    }
}

/// Gap below which a sweep run counts as converged.
pub const SWEEP_TOLERANCE: f64 = 1e-2;

/// Runs one simulation per ε concurrently. For the high-gain law the step
/// is shrunk to `ε/50` when the scenario's step is larger.
pub fn sweep_eps(
    path: &Path,
    base: &Overrides,
    eps_values: &[f64],
    out_dir: &Path,
    force: bool,
) -> CliResult<Vec<SweepEntry>> {
    let file = load_scenario(path)?;
    let base_prep = prepare(&file, base)?;
    let base_dt = base_prep.axes[0].dt;
    let stem = base_prep.name.clone();
    let jobs: Vec<(f64, f64, CliResult<Prepared>)> = eps_values
        .iter()
        .map(|&eps| {
            let dt = if base_prep.law == ControlLawKind::RealtimeGradient {
                base_dt.min(eps * HIGH_GAIN_STEP_RATIO)
            } else {
                base_dt
            };
            let ov = Overrides {
                eps: Some(eps),
                dt: Some(dt),
                ..base.clone()
            };
            (eps, dt, prepare(&file, &ov))
        })
        .collect();
    let entries = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(eps, dt, prep)| {
                let stem = format!("{stem}_eps{eps}");
                scope.spawn(move || SweepEntry {
                    eps,
                    dt,
                    outcome: prep.and_then(|p| run(&p, out_dir, &stem, force)),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect::<Vec<_>>()
    });
    let summary: Vec<Value> = entries
        .iter()
        .map(|e| {
            json!({
                "eps": e.eps,
                "dt": e.dt,
                "status": match &e.outcome {
                    Ok(_) if e.converged(SWEEP_TOLERANCE) => "converged".to_string(),
                    Ok(_) => "not converged".to_string(),
                    Err(err) => format!("failed: {err}"),
                },
                "worst_optimality_gap": e.outcome.as_ref().ok().and_then(|o| o.worst_gap.is_finite().then_some(o.worst_gap)),
            })
        })
        .collect();
    write_json(
        &out_dir.join(format!("{stem}.sweep.json")),
        &json!({ "scenario": stem, "runs": summary }),
    )?;
    Ok(entries)
}

/// Gains report for the first axis (gains do not depend on the costs).
pub fn synthesize_report(prep: &Prepared) -> CliResult<Value> {
    let sc = &prep.axes[0];
    let syns = sc.synthesize()?;
    let agents: Vec<Value> = syns.iter().enumerate().map(|(i, s)| synthesis_json(i, s)).collect();
    Ok(json!({
        "scenario": prep.name,
        "law": law_name(prep.law),
        "eps": (prep.law == ControlLawKind::RealtimeGradient)
            .then(|| sc.agents[0].options.eps.unwrap_or(DEFAULT_EPS)),
        "agents": agents,
    }))
}

/// Optimiser, multiplier and KKT residuals per axis.
pub fn oracle_report(prep: &Prepared) -> CliResult<Value> {
    let mut axes = Vec::new();
    for (k, sc) in prep.axes.iter().enumerate() {
        let problem = sc.problem()?;
        let alloc = solve_allocation_oracle(&problem)?;
        let kkt = kkt_check(&alloc.y, &problem);
        axes.push(json!({
            "axis": k + 1,
            "y": alloc.y,
            "theta": alloc.theta,
            "resources": problem.resources(),
            "grad_spread": kkt.grad_spread,
            "constraint_residual": kkt.constraint_residual,
            "objective": problem.objective(&alloc.y),
        }));
    }
    Ok(json!({ "scenario": prep.name, "axes": axes }))
}
