//! Local convex costs with analytic gradients, and the resource-allocation
//! problem they define.
//!
//! Convexity bounds `h_lo ≤ f'' ≤ h_hi` are declared per cost and checked by
//! sampling on a compact operating interval: two of the registered kinds
//! have Hessians that are unbounded on the whole line.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default operating interval on which convexity bounds are validated.
pub const DEFAULT_OPERATING_INTERVAL: (f64, f64) = (-20.0, 20.0);

/// Step for central differences of the gradient.
const HESSIAN_STEP: f64 = 1e-5;

/// Relative slack allowed when sampled curvature is compared to the bounds.
const BOUND_SLACK: f64 = 1e-3;

/// Closed registry of scalar cost shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    /// `a·y² + b·y + c`
    Quadratic { a: f64, b: f64, c: f64 },
    /// `y²·ln(1 + y²) + (y + δ)²`
    QuadLog { delta: f64 },
    /// `ln(e^{p·y} + e^{q·y}) + y²`
    LogSumExp2 { p: f64, q: f64 },
    /// `y² / (s·√(y² + 1)) + (y − c)²`
    SqrtFrac { s: f64, c: f64 },
}

impl CostKind {
    pub fn value(&self, y: f64) -> f64 {
        match *self {
            CostKind::Quadratic { a, b, c } => a * y * y + b * y + c,
            CostKind::QuadLog { delta } => y * y * libm::log1p(y * y) + (y + delta) * (y + delta),
            CostKind::LogSumExp2 { p, q } => {
                let (u, v) = (p * y, q * y);
                let m = u.max(v);
                m + libm::log(libm::exp(u - m) + libm::exp(v - m)) + y * y
            }
            CostKind::SqrtFrac { s, c } => y * y / (s * libm::sqrt(y * y + 1.0)) + (y - c) * (y - c),
        }
    }

    pub fn grad(&self, y: f64) -> f64 {
        match *self {
            CostKind::Quadratic { a, b, .. } => 2.0 * a * y + b,
            CostKind::QuadLog { delta } => {
                let y2 = y * y;
                2.0 * y * libm::log1p(y2) + 2.0 * y2 * y / (1.0 + y2) + 2.0 * (y + delta)
            }
            CostKind::LogSumExp2 { p, q } => {
                let (u, v) = (p * y, q * y);
                let m = u.max(v);
                let (eu, ev) = (libm::exp(u - m), libm::exp(v - m));
                (p * eu + q * ev) / (eu + ev) + 2.0 * y
            }
            CostKind::SqrtFrac { s, c } => {
                let w = y * y + 1.0;
                let root = libm::sqrt(w);
                (2.0 * y / root - y * y * y / (w * root)) / s + 2.0 * (y - c)
            }
        }
    }

    /// Second derivative by central differencing of [`CostKind::grad`].
    pub fn hessian_fd(&self, y: f64) -> f64 {
        let h = HESSIAN_STEP * y.abs().max(1.0);
        (self.grad(y + h) - self.grad(y - h)) / (2.0 * h)
    }

    /// Smallest and largest sampled curvature on `[lo, hi]`.
    pub fn sampled_curvature(&self, interval: (f64, f64), samples: usize) -> (f64, f64) {
        sample_points(interval, samples)
            .map(|y| self.hessian_fd(y))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| (lo.min(h), hi.max(h)))
    }
}

fn sample_points(interval: (f64, f64), samples: usize) -> impl Iterator<Item = f64> {
    let (lo, hi) = interval;
    let step = (hi - lo) / (samples.max(2) - 1) as f64;
    (0..samples.max(2)).map(move |k| lo + step * k as f64)
}

/// A registered cost together with its declared curvature bounds and the
/// agent's private resource datum `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCost {
    pub kind: CostKind,
    pub h_lo: f64,
    pub h_hi: f64,
    pub d: f64,
}

impl LocalCost {
    pub fn new(kind: CostKind, h_lo: f64, h_hi: f64, d: f64) -> Result<Self> {
        if !(h_lo > 0.0) || !(h_hi >= h_lo) || !d.is_finite() || !h_hi.is_finite() {
            return Err(Error::InvalidInput(alloc::format!(
                "need 0 < h_lo <= h_hi and finite d, got h_lo={h_lo}, h_hi={h_hi}, d={d}"
            )));
        }
        if let CostKind::Quadratic { a, .. } = kind {
            if !(a > 0.0) || h_lo != 2.0 * a || h_hi != 2.0 * a {
                return Err(Error::InvalidInput(
                    "quadratic costs need a > 0 and h_lo = h_hi = 2a".into(),
                ));
            }
        }
        Ok(LocalCost { kind, h_lo, h_hi, d })
    }

    pub fn quadratic(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        LocalCost::new(CostKind::Quadratic { a, b, c }, 2.0 * a, 2.0 * a, d)
    }

    /// Bounds taken from the curvature sampled on `interval` (2001 points).
    /// Quadratics get their exact `2a`.
    pub fn with_sampled_bounds(kind: CostKind, d: f64, interval: (f64, f64)) -> Result<Self> {
        if let CostKind::Quadratic { a, b, c } = kind {
            return LocalCost::quadratic(a, b, c, d);
        }
        let (lo, hi) = kind.sampled_curvature(interval, 2001);
        LocalCost::new(kind, lo, hi, d)
    }

    pub fn value(&self, y: f64) -> f64 {
        self.kind.value(y)
    }

    pub fn grad(&self, y: f64) -> f64 {
        self.kind.grad(y)
    }

    /// Checks the declared bounds against central-difference curvature at
    /// `samples` evenly spaced points of `interval`, with 0.1% slack.
    pub fn validate_bounds(&self, interval: (f64, f64), samples: usize) -> Result<()> {
        let (lo, hi) = interval;
        if !(lo < hi) || samples < 2 {
            return Err(Error::InvalidInput(
                "validation needs lo < hi and at least two samples".into(),
            ));
        }
        let lo_ok = self.h_lo * (1.0 - BOUND_SLACK);
        let hi_ok = self.h_hi * (1.0 + BOUND_SLACK);
        for y in sample_points(interval, samples) {
            let h = self.kind.hessian_fd(y);
            if !(h >= lo_ok && h <= hi_ok) {
                return Err(Error::BoundViolation {
                    y,
                    hessian: h,
                    lo: self.h_lo,
                    hi: self.h_hi,
                });
            }
        }
        Ok(())
    }
}

/// `minimize Σ fᵢ(yᵢ) subject to Σ yᵢ = Σ dᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub costs: Vec<LocalCost>,
}

impl AllocationProblem {
    pub fn new(costs: Vec<LocalCost>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidInput(
                "allocation problem needs at least one agent".into(),
            ));
        }
        Ok(AllocationProblem { costs })
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn total_resource(&self) -> f64 {
        self.costs.iter().map(|c| c.d).sum()
    }

    pub fn resources(&self) -> Vec<f64> {
        self.costs.iter().map(|c| c.d).collect()
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        self.costs.iter().zip(y).map(|(c, y)| c.value(*y)).sum()
    }
}
