//! Turns a parsed scenario file plus command-line overrides into the
//! simulator's [`Scenario`] values, one per output axis.

use std::path::Path;

use dosr_core::costs::{CostKind, LocalCost, DEFAULT_OPERATING_INTERVAL};
use dosr_core::graph::SharingGraph;
use dosr_core::numerics::Complex64;
use dosr_core::plant::{AgentPlant, DisturbanceModel};
use dosr_core::sim::{AgentSpec, Event, EventAction, GeneratorStart, InitialSampler, Scenario};
use dosr_core::synthesis::{ControlLawKind, SynthesisOptions};
use dosr_core::Mat;

use crate::error::{CliError, CliResult};
use crate::schema::*;

pub const BUNDLED: [(&str, &str); 3] = [
    ("example1", include_str!("../scenarios/example1.json")),
    ("example2", include_str!("../scenarios/example2.json")),
    ("example3", include_str!("../scenarios/example3.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, s)| *s)
}

pub fn parse_scenario(text: &str) -> CliResult<ScenarioFile> {
    Ok(serde_json::from_str(text)?)
}

/// Reads a scenario from disk, falling back to the bundled files by name
/// (`example2` or `example2.json`) when no such path exists.
pub fn load_scenario(path: &Path) -> CliResult<ScenarioFile> {
    if !path.exists() {
        if let Some(text) = path.to_str().and_then(bundled) {
            return parse_scenario(text);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_scenario(&text)
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub decimate: Option<usize>,
    pub poles_k1: Option<Vec<Complex64>>,
    pub poles_lbar: Option<Vec<Complex64>>,
    pub poles_lhat: Option<Vec<Complex64>>,
}

/// A scenario ready to run: one simulator scenario per axis.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub seed: u64,
    pub law: ControlLawKind,
    pub axes: Vec<Scenario>,
}

pub fn law_kind(spec: LawKindSpec) -> ControlLawKind {
    match spec {
        LawKindSpec::StateFeedback => ControlLawKind::StateFeedback,
        LawKindSpec::OutputFeedback => ControlLawKind::OutputFeedback,
        LawKindSpec::RealtimeGradient => ControlLawKind::RealtimeGradient,
    }
}

pub fn law_name(law: ControlLawKind) -> &'static str {
    match law {
        ControlLawKind::StateFeedback => "state_feedback",
        ControlLawKind::OutputFeedback => "output_feedback",
        ControlLawKind::RealtimeGradient => "realtime_gradient",
    }
}

/// Parses `-1,-2.5` or `-1+2i,-1-2i`.
pub fn parse_poles(text: &str) -> Result<Vec<Complex64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_complex)
        .collect()
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let bad = || format!("cannot read pole '{s}'");
    let Some(body) = s.strip_suffix('i').or_else(|| s.strip_suffix('j')) else {
        return s.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not part of an exponent or the leading sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    Ok(Complex64::new(
        re.parse().map_err(|_| bad())?,
        im.trim_start_matches('+').parse().map_err(|_| bad())?,
    ))
}

fn poles(list: &[PoleSpec]) -> Vec<Complex64> {
    list.iter()
        .map(|p| match *p {
            PoleSpec::Real(re) => Complex64::new(re, 0.0),
            PoleSpec::Complex([re, im]) => Complex64::new(re, im),
        })
        .collect()
}

fn matrix(rows: &[Vec<f64>], cols_if_empty: usize, what: &str) -> CliResult<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("{what}: rows have different lengths")));
    }
    Ok(Mat::from_rows(rows))
}

fn graph(spec: &GraphSpec) -> CliResult<SharingGraph> {
    let mut edges = Vec::with_capacity(spec.edges.len());
    for e in &spec.edges {
        let (i, j, w) = match e.as_slice() {
            [i, j] => (*i, *j, 1.0),
            [i, j, w] => (*i, *j, *w),
            _ => {
                return Err(CliError::Config(format!(
                    "graph edge {e:?} must be [i, j] or [i, j, weight]"
                )))
            }
        };
        let node = |v: f64| {
            if v.fract() == 0.0 && v >= 1.0 && v <= spec.nodes as f64 {
                Ok(v as usize - 1)
            } else {
                Err(CliError::Config(format!(
                    "graph edge {e:?} names a node outside 1..={}",
                    spec.nodes
                )))
            }
        };
        edges.push((node(i)?, node(j)?, w));
    }
    Ok(SharingGraph::from_edges(spec.nodes, &edges)?)
}

fn plant(i: usize, agent: &AgentFile) -> CliResult<(AgentPlant, DisturbanceModel)> {
    let ctx = |m: &str| format!("agent {}: {m}", i + 1);
    let n = agent.plant.a.len();
    let a = matrix(&agent.plant.a, 0, &ctx("A"))?;
    let b = matrix(&agent.plant.b, 1, &ctx("B"))?;
    let c = matrix(&agent.plant.c, n, &ctx("C"))?;
    let disturbance = match &agent.disturbance {
        Some(d) => DisturbanceModel::new(matrix(&d.s, 0, &ctx("S"))?, d.w0.clone())
            .map_err(|e| CliError::Config(ctx(&e.to_string())))?,
        None => DisturbanceModel::none(),
    };
    let e = match &agent.plant.e {
        Some(rows) if !rows.is_empty() && rows.iter().any(|r| !r.is_empty()) => matrix(rows, 0, &ctx("E"))?,
        _ if disturbance.q() > 0 => return Err(CliError::Config(ctx("a disturbance needs the plant's E matrix"))),
        _ => Mat::zeros(n, 0),
    };
    let p = AgentPlant::new(a, b, c, e).map_err(|e| CliError::Config(ctx(&e.to_string())))?;
    Ok((p, disturbance))
}

fn cost(i: usize, spec: &CostSpec, y0: f64) -> CliResult<LocalCost> {
    let d = match &spec.d {
        ResourceSpec::Value(v) => *v,
        ResourceSpec::Keyword(k) if k == "y0" => y0,
        ResourceSpec::Keyword(k) => {
            return Err(CliError::Config(format!(
                "agent {}: resource '{k}' is neither a number nor \"y0\"",
                i + 1
            )))
        }
    };
    let interval = spec.interval.map_or(DEFAULT_OPERATING_INTERVAL, |[lo, hi]| (lo, hi));
    let kind = match spec.kind {
        CostKindSpec::Quadratic { a, b, c } => CostKind::Quadratic { a, b, c },
        CostKindSpec::QuadLog { delta } => CostKind::QuadLog { delta },
        CostKindSpec::LogSumExp2 { p, q } => CostKind::LogSumExp2 { p, q },
        CostKindSpec::SqrtFrac { s, c } => CostKind::SqrtFrac { s, c },
    };
    let h_lo = match kind {
        CostKind::Quadratic { a, .. } => 2.0 * a,
        other => other.sampled_curvature(interval, 2001).0,
    };
    // a cost that is not strongly convex violates a standing assumption;
    // anything else wrong with it is a configuration error
    if !(h_lo > 0.0) {
        return Err(CliError::Assumption(format!(
            "agent {}: cost is not strongly convex on [{}, {}] (smallest curvature {h_lo:.3e})",
            i + 1,
            interval.0,
            interval.1
        )));
    }
    LocalCost::with_sampled_bounds(kind, d, interval).map_err(|e| CliError::Config(format!("agent {}: {e}", i + 1)))
}

/// Plant state with output `y0` and zero elsewhere along `C`'s kernel.
fn state_for_output(c: &Mat, y0: f64) -> Vec<f64> {
    let row = c.row(0);
    let norm2: f64 = row.iter().map(|v| v * v).sum();
    row.iter().map(|v| v * y0 / norm2).collect()
}

fn events(file: &ScenarioFile) -> CliResult<Vec<Event>> {
    let mut out = Vec::new();
    for (i, a) in file.agents.iter().enumerate() {
        if let Some(t) = a.disturbance.as_ref().and_then(|d| d.enabled_from) {
            out.push(Event {
                time: t,
                action: EventAction::EnableDisturbance,
                agent: Some(i),
            });
        }
    }
    if let Some(t) = file.law.rejection_enabled_from {
        out.push(Event {
            time: t,
            action: EventAction::EnableRejection,
            agent: None,
        });
    }
    for e in &file.events {
        let agent = match e.agent {
            None => None,
            Some(k) if k >= 1 && k <= file.agents.len() => Some(k - 1),
            Some(k) => {
                return Err(CliError::Config(format!(
                    "event names agent {k}, outside 1..={}",
                    file.agents.len()
                )))
            }
        };
        let action = match e.action {
            EventActionSpec::EnableDisturbance => EventAction::EnableDisturbance,
            EventActionSpec::EnableRejection => EventAction::EnableRejection,
        };
        out.push(Event {
            time: e.time,
            action,
            agent,
        });
    }
    Ok(out)
}

pub fn prepare(file: &ScenarioFile, ov: &Overrides) -> CliResult<Prepared> {
    if file.axes == 0 {
        return Err(CliError::Config("axes must be at least 1".into()));
    }
    let graph = graph(&file.graph)?;
    if file.agents.len() != graph.n() {
        return Err(CliError::Config(format!(
            "{} agents for a graph with {} nodes",
            file.agents.len(),
            graph.n()
        )));
    }
    let law = law_kind(file.law.kind);
    let seed = ov.seed.unwrap_or(file.initial.seed);
    let [lo, hi] = file.initial.range;
    if !(lo <= hi) {
        return Err(CliError::Config("initial.range must be [lo, hi] with lo <= hi".into()));
    }
    let mut sampler = InitialSampler::new(seed, (lo, hi));
    let events = events(file)?;

    let plants = file
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| plant(i, a))
        .collect::<CliResult<Vec<_>>>()?;

    let mut axes = Vec::with_capacity(file.axes);
    for _ in 0..file.axes {
        let mut agents = Vec::with_capacity(file.agents.len());
        for (i, (a, (p, dist))) in file.agents.iter().zip(&plants).enumerate() {
            let x0 = match &a.x0 {
                Some(x) if x.len() == p.n() => x.clone(),
                Some(x) => {
                    return Err(CliError::Config(format!(
                        "agent {}: x0 has {} entries, plant has {} states",
                        i + 1,
                        x.len(),
                        p.n()
                    )))
                }
                None => state_for_output(&p.c, sampler.draw()),
            };
            let cost = cost(i, &a.cost, p.output(&x0))?;
            let pick = |cli: &Option<Vec<Complex64>>, sel: fn(&PoleOverrides) -> &Option<Vec<PoleSpec>>| {
                cli.clone()
                    .or_else(|| a.poles.as_ref().and_then(|o| sel(o).as_deref()).map(poles))
                    .or_else(|| file.law.poles.as_ref().and_then(|o| sel(o).as_deref()).map(poles))
            };
            let options = SynthesisOptions {
                k1_poles: pick(&ov.poles_k1, |o| &o.k1),
                lbar_poles: pick(&ov.poles_lbar, |o| &o.lbar),
                lhat_poles: pick(&ov.poles_lhat, |o| &o.lhat),
                eps: ov.eps.or(file.law.eps),
                coeffs: file.law.c.clone(),
                seed: file.law.observer_seed,
            };
            agents.push(AgentSpec {
                plant: p.clone(),
                disturbance: dist.clone(),
                cost,
                x0,
                z0: a.z0,
                lam0: a.lambda0,
                options,
            });
        }
        axes.push(Scenario {
            graph: graph.clone(),
            agents,
            law,
            t_end: ov.t_end.unwrap_or(file.integration.t_end),
            dt: ov.dt.unwrap_or(file.integration.dt),
            decimate: ov.decimate.unwrap_or(file.integration.decimate),
            events: events.clone(),
            generator_start: match file.generator_start {
                GeneratorStartSpec::AtOutput => GeneratorStart::AtOutput,
                GeneratorStartSpec::AtRest => GeneratorStart::AtRest,
            },
        });
    }
    Ok(Prepared {
        name: file.name.clone().unwrap_or_else(|| "scenario".into()),
        seed,
        law,
        axes,
    })
}
