//! CSV trajectories and JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dosr_core::sim::{Evaluation, TrajectoryRecord};
use dosr_core::synthesis::{AgentGains, AgentSynthesis};
use dosr_core::Mat;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const CSV_HEADER: &str = "t,agent,y,z,lambda,u,eta_err";

/// `printf("%.10e")`: ten fraction digits, signed exponent of at least two
/// digits.
pub fn sci(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.10e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent in LowerExp output");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn write_csv(path: &Path, rec: &TrajectoryRecord) -> CliResult<()> {
    let io = |e| CliError::io(format!("writing {}", path.display()), e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{CSV_HEADER}").map_err(io)?;
    for (t, row) in rec.times.iter().zip(&rec.rows) {
        let t = sci(*t);
        for (i, s) in row.iter().enumerate() {
            writeln!(
                w,
                "{t},{},{},{},{},{},{}",
                i + 1,
                sci(s.y),
                sci(s.z),
                sci(s.lam),
                sci(s.u),
                sci(s.eta_err)
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report values serialise");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Non-finite numbers become `null`, which JSON can carry.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn matrix_json(m: &Mat) -> Value {
    json!((0..m.rows())
        .map(|i| m.row(i).iter().map(|v| num(*v)).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

/// Metrics of one axis of one run.
pub fn axis_metrics(rec: &TrajectoryRecord, ev: &Evaluation, runtime_s: f64) -> Value {
    let y = rec.final_outputs();
    json!({
        "t_end": rec.times.last().copied().unwrap_or(0.0),
        "final_y": y.iter().map(|v| num(*v)).collect::<Vec<_>>(),
        "oracle_y": ev.oracle.y,
        "oracle_theta": ev.oracle.theta,
        "resources": rec.resources,
        "tracking_error": num(ev.metrics.tracking_error),
        "optimality_gap": num(ev.metrics.optimality_gap),
        "constraint_residual": num(ev.metrics.constraint_residual),
        "grad_spread": num(ev.metrics.grad_spread),
        "convergence_rate": ev.rate.map(|r| json!({
            "slope": r.slope,
            "intercept": r.intercept,
            "r_squared": r.r_squared,
            "samples": r.samples,
        })),
        "max_mean_v_drift": num(rec.max_mean_v_drift),
        "runtime_s": runtime_s,
    })
}

/// Gains, regulator solution, residuals and loop abscissas of one agent.
pub fn synthesis_json(agent: usize, syn: &AgentSynthesis) -> Value {
    let reg = &syn.regulator;
    let gains = match &syn.gains {
        AgentGains::Feedback(g) => json!({
            "K1": matrix_json(&g.k1),
            "K2": matrix_json(&g.k2),
            "K3": g.k3,
            "Lbar": matrix_json(&g.lbar),
            "Lhat": matrix_json(&g.lhat),
        }),
        AgentGains::HighGain(h) => json!({
            "relative_degree": h.relative_degree,
            "eps": h.eps,
            "c": h.coeffs,
            "high_frequency_gain": h.hf_gain,
            "Xbar1": matrix_json(&h.xbar1),
            "Ubar1": matrix_json(&h.ubar1),
            "Xbar2": matrix_json(&h.xbar2),
            "Ubar2": h.ubar2,
            "Kbar1": matrix_json(&h.kbar1),
            "Kbar2": matrix_json(&h.kbar2),
            "Kbar3": h.kbar3,
            "Xhat": matrix_json(&h.xhat),
            "Lbar": matrix_json(&h.lbar),
            "disturbance_estimate": "compensation uses eta = eta_bar + Lbar x, the full exosystem estimate",
        }),
    };
    json!({
        "agent": agent + 1,
        "regulator": {
            "X1": matrix_json(&reg.x1),
            "U1": matrix_json(&reg.u1),
            "X2": matrix_json(&reg.x2),
            "U2": reg.u2,
        },
        "residuals": {
            "disturbance_block": syn.residuals.disturbance_block,
            "output_block": syn.residuals.output_block,
        },
        "gains": gains,
        "abscissas": {
            "state_feedback": num(syn.abscissas.state_feedback),
            "disturbance_observer": num(syn.abscissas.disturbance_observer),
            "output_observer": num(syn.abscissas.output_observer),
            "high_gain_polynomial": num(syn.abscissas.high_gain_poly),
            "worst": num(syn.abscissas.worst()),
        },
    })
}
