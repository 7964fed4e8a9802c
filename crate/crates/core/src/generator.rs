//! Optimal signal generator: primal-dual dynamics over the sharing graph
//!
//! ```text
//! żᵢ = −∇fᵢ(zᵢ) + λᵢ
//! λ̇ᵢ = −Σⱼ aᵢⱼ(λᵢ − λⱼ) − Σⱼ aᵢⱼ(vᵢ − vⱼ) + dᵢ − zᵢ
//! v̇ᵢ = Σⱼ aᵢⱼ(λᵢ − λⱼ)
//! ```
//!
//! whose equilibrium `z` is the minimizer of the allocation problem, plus an
//! independent multiplier-bisection oracle for that minimizer.

use alloc::vec;
use alloc::vec::Vec;

use crate::costs::{AllocationProblem, LocalCost};
use crate::error::{Error, Result};
use crate::graph::LaplacianBundle;
use crate::numerics::Mat;

/// Network-wide generator state (primal estimates, multipliers, integral
/// states), one entry per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub z: Vec<f64>,
    pub lam: Vec<f64>,
    pub v: Vec<f64>,
}

impl GeneratorState {
    pub fn zeros(n: usize) -> Self {
        GeneratorState {
            z: vec![0.0; n],
            lam: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// `z = d`, `λ = 0`, `v = 0`.
    pub fn feasible_start(problem: &AllocationProblem) -> Self {
        let mut s = GeneratorState::zeros(problem.n());
        s.z = problem.resources();
        s
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn mean_v(&self) -> f64 {
        self.v.iter().sum::<f64>() / self.v.len().max(1) as f64
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().chain(&self.lam).chain(&self.v).all(|x| x.is_finite())
    }

    pub fn local(&self, i: usize) -> LocalGenerator {
        LocalGenerator {
            z: self.z[i],
            lam: self.lam[i],
            v: self.v[i],
        }
    }
}

/// Right-hand side with `λ⁰ = L·λ` and `v⁰ = L·v`, gradients taken at `z`.
pub fn generator_rhs(s: &GeneratorState, problem: &AllocationProblem, bundle: &LaplacianBundle) -> GeneratorState {
    let grads: Vec<f64> = problem.costs.iter().zip(&s.z).map(|(c, z)| c.grad(*z)).collect();
    generator_rhs_with_grads(s, &grads, &problem.resources(), &bundle.l)
}

/// Same dynamics with caller-supplied gradient values; the real-time
/// gradient law evaluates them at the measured outputs instead of at `z`.
pub fn generator_rhs_with_grads(s: &GeneratorState, grads: &[f64], d: &[f64], laplacian: &Mat) -> GeneratorState {
    let n = s.n();
    assert!(grads.len() == n && d.len() == n && laplacian.rows() == n);
    let lam0 = laplacian.mul_vec(&s.lam);
    let v0 = laplacian.mul_vec(&s.v);
    GeneratorState {
        z: (0..n).map(|i| -grads[i] + s.lam[i]).collect(),
        lam: (0..n).map(|i| -lam0[i] - v0[i] + d[i] - s.z[i]).collect(),
        v: lam0,
    }
}

/// One agent's generator coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalGenerator {
    pub z: f64,
    pub lam: f64,
    pub v: f64,
}

/// What a neighbor publishes: its `(λⱼ, vⱼ)` and the edge weight `aᵢⱼ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborMessage {
    pub weight: f64,
    pub lam: f64,
    pub v: f64,
}

/// Per-agent generator derivative computed from local data and neighbor
/// messages only.
pub fn local_generator_rhs(own: LocalGenerator, grad: f64, d: f64, messages: &[NeighborMessage]) -> LocalGenerator {
    let (lam0, v0) = messages.iter().fold((0.0, 0.0), |(l, v), m| {
        (l + m.weight * (own.lam - m.lam), v + m.weight * (own.v - m.v))
    });
    LocalGenerator {
        z: -grad + own.lam,
        lam: -lam0 - v0 + d - own.z,
        v: lam0,
    }
}

/// Minimizer of the allocation problem with its common multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub y: Vec<f64>,
    pub theta: f64,
}

/// Multiplier range searched by the oracle.
pub const THETA_RANGE: (f64, f64) = (-1e6, 1e6);

/// Solves the allocation problem through its optimality conditions
/// `∇fᵢ(yᵢ) = θ`, `Σyᵢ = Σdᵢ`: each `yᵢ(θ)` by safeguarded Newton, then
/// bisection on the monotone balance `g(θ) = Σyᵢ(θ) − Σdᵢ`.
pub fn solve_allocation_oracle(problem: &AllocationProblem) -> Result<Allocation> {
    let total = problem.total_resource();
    let balance = |theta: f64| -> Result<(f64, Vec<f64>)> {
        let y = problem
            .costs
            .iter()
            .map(|c| inverse_gradient(c, theta))
            .collect::<Result<Vec<f64>>>()?;
        Ok((y.iter().sum::<f64>() - total, y))
    };
    let (mut lo, mut hi) = THETA_RANGE;
    let fail = Error::BracketFailure { lo, hi };
    let (g_lo, _) = balance(lo).map_err(|_| fail.clone())?;
    let (g_hi, _) = balance(hi).map_err(|_| fail.clone())?;
    if !(g_lo <= 0.0 && g_hi >= 0.0) {
        return Err(fail);
    }
    let mut best = (f64::INFINITY, 0.0, Vec::new());
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let (g, y) = balance(mid)?;
        if g.abs() < best.0 {
            best = (g.abs(), mid, y);
        }
        if g.abs() <= 1e-10 || mid == lo || mid == hi {
            break;
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Allocation {
        y: best.2,
        theta: best.1,
    })
}

/// Unique root of `∇f(y) = θ` for a strongly convex cost: bracket by
/// doubling, then Newton steps with a bisection fallback whenever the step
/// leaves the bracket.
pub fn inverse_gradient(cost: &LocalCost, theta: f64) -> Result<f64> {
    let g = |y: f64| cost.grad(y) - theta;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while g(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e300 {
            return Err(Error::BracketFailure { lo, hi });
        }
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::BracketFailure { lo, hi });
        }
    }
    let mut y = 0.5 * (lo + hi);
    let tol = 1e-14 * theta.abs().max(1.0);
    for _ in 0..500 {
        let gy = g(y);
        if gy.abs() <= tol {
            break;
        }
        if gy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let curv = cost.kind.hessian_fd(y);
        let newton = y - gy / curv;
        let next = if curv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == y || hi - lo <= f64::EPSILON * y.abs().max(1.0) {
            break;
        }
        y = next;
    }
    Ok(y)
}

/// Optimality certificate for a candidate allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktCertificate {
    /// Mean of the local gradients.
    pub theta: f64,
    /// `maxᵢ |∇fᵢ(zᵢ) − θ|`
    pub grad_spread: f64,
    /// `|Σzᵢ − Σdᵢ|`
    pub constraint_residual: f64,
}

impl KktCertificate {
    pub fn within(&self, tol: f64) -> bool {
        self.grad_spread <= tol && self.constraint_residual <= tol
    }
}

pub fn kkt_check(z: &[f64], problem: &AllocationProblem) -> KktCertificate {
    assert_eq!(z.len(), problem.n());
    let grads: Vec<f64> = problem.costs.iter().zip(z).map(|(c, z)| c.grad(*z)).collect();
    let theta = grads.iter().sum::<f64>() / grads.len() as f64;
    KktCertificate {
        theta,
        grad_spread: grads.iter().fold(0.0, |m, g| m.max((g - theta).abs())),
        constraint_residual: (z.iter().sum::<f64>() - problem.total_resource()).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostKind;
    use crate::graph::SharingGraph;

    fn example2() -> AllocationProblem {
        AllocationProblem::new(
            (1..=4)
                .map(|i| {
                    let i = i as f64;
                    LocalCost::quadratic(0.1 * i, -0.05 * i, i, i).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn fig1() -> LaplacianBundle {
        SharingGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)])
            .unwrap()
            .laplacian()
    }

    /// Closed form for the quadratic example: `yᵢ = θ/(0.2 i) + 0.25`.
    fn example2_closed_form() -> (f64, Vec<f64>) {
        let harmonic: f64 = (1..=4).map(|i| 1.0 / (0.2 * i as f64)).sum();
        let theta = (10.0 - 1.0) / harmonic;
        let y = (1..=4).map(|i| theta / (0.2 * i as f64) + 0.25).collect();
        (theta, y)
    }

    #[test]
    fn single_agent_equilibrium() {
        let p = AllocationProblem::new(vec![LocalCost::quadratic(0.5, 0.0, 0.0, 1.0).unwrap()]).unwrap();
        let b = SharingGraph::from_edges(1, &[]).unwrap().laplacian();
        let s = GeneratorState {
            z: vec![1.0],
            lam: vec![1.0],
            v: vec![0.0],
        };
        assert_eq!(generator_rhs(&s, &p, &b), GeneratorState::zeros(1));
    }

    #[test]
    fn oracle_reproduces_example2() {
        let p = example2();
        let a = solve_allocation_oracle(&p).unwrap();
        let (theta, y) = example2_closed_form();
        assert!((a.theta - theta).abs() < 1e-9);
        assert!((a.theta - 0.864).abs() < 5e-4);
        for (got, want) in a.y.iter().zip(&y) {
            assert!((got - want).abs() < 1e-9);
        }
        for (got, reported) in a.y.iter().zip([4.57, 2.41, 1.69, 1.33]) {
            assert!((got - reported).abs() < 5e-3);
        }
        let cert = kkt_check(&a.y, &p);
        assert!(cert.grad_spread < 1e-8 && cert.constraint_residual < 1e-8);
    }

    #[test]
    fn oracle_equal_split() {
        let p = AllocationProblem::new(
            [3.0, -1.0, 7.0, 0.5, 2.5]
                .iter()
                .map(|d| LocalCost::quadratic(0.5, 0.0, 0.0, *d).unwrap())
                .collect(),
        )
        .unwrap();
        let a = solve_allocation_oracle(&p).unwrap();
        for y in &a.y {
            assert!((y - 12.0 / 5.0).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_example3_near_reported_values() {
        let kinds = [
            CostKind::Quadratic { a: 0.5, b: 2.0, c: 2.0 },
            CostKind::QuadLog { delta: 1.0 },
            CostKind::LogSumExp2 { p: -0.1, q: 0.3 },
            CostKind::SqrtFrac { s: 25.0, c: 3.0 },
        ];
        let costs = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| LocalCost::with_sampled_bounds(*k, (i + 1) as f64, (-20.0, 20.0)).unwrap())
            .collect();
        let p = AllocationProblem::new(costs).unwrap();
        let a = solve_allocation_oracle(&p).unwrap();
        for (got, reported) in a.y.iter().zip([2.2, 0.7, 2.0, 5.1]) {
            assert!((got - reported).abs() < 0.1, "{:?}", a.y);
        }
        assert!(kkt_check(&a.y, &p).within(1e-8));
    }

    #[test]
    fn kkt_feasible_but_unoptimized() {
        let p = example2();
        let d = p.resources();
        let cert = kkt_check(&d, &p);
        assert!(cert.constraint_residual < 1e-14);
        assert!(cert.grad_spread > 0.1);
        let cert = kkt_check(&[0.0; 4], &p);
        assert!((cert.constraint_residual - 10.0).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_derivative_vanishes() {
        // at (y*, θ*·1, v) with L v = d − y* the derivative is zero; the
        // integral state is found by solving in the complement of 1
        let p = example2();
        let b = fig1();
        let a = solve_allocation_oracle(&p).unwrap();
        let rhs: Vec<f64> = p.resources().iter().zip(&a.y).map(|(d, y)| d - y).collect();
        // L restricted to the complement basis is invertible for connected graphs
        let lr = &b.l * &b.basis;
        let rtlr = &b.basis.transpose() * &lr;
        let coeff = crate::numerics::solve_linear(&rtlr, &Mat::col_vector(&b.basis.transpose().mul_vec(&rhs))).unwrap();
        let v = b.basis.mul_vec(coeff.as_slice());
        let s = GeneratorState {
            z: a.y.clone(),
            lam: vec![a.theta; 4],
            v,
        };
        let ds = generator_rhs(&s, &p, &b);
        for x in ds.z.iter().chain(&ds.lam).chain(&ds.v) {
            assert!(x.abs() < 1e-9, "{ds:?}");
        }
    }

    #[test]
    fn local_and_network_forms_agree() {
        let p = example2();
        let b = fig1();
        let g = SharingGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]).unwrap();
        let s = GeneratorState {
            z: vec![0.3, -1.0, 2.0, 4.0],
            lam: vec![1.0, 0.5, -0.2, 0.0],
            v: vec![0.1, 0.2, -0.3, 0.4],
        };
        let net = generator_rhs(&s, &p, &b);
        for i in 0..4 {
            let msgs: Vec<NeighborMessage> = g
                .neighbors(i)
                .map(|(j, w)| NeighborMessage {
                    weight: w,
                    lam: s.lam[j],
                    v: s.v[j],
                })
                .collect();
            let loc = local_generator_rhs(s.local(i), p.costs[i].grad(s.z[i]), p.costs[i].d, &msgs);
            assert!((loc.z - net.z[i]).abs() < 1e-14);
            assert!((loc.lam - net.lam[i]).abs() < 1e-14);
            assert!((loc.v - net.v[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn remark_average_consensus() {
        // fᵢ = ½y², dᵢ = yᵢ(0): optimum is the mean of the initial outputs
        let y0 = [3.0, -2.0, 7.5, 1.5];
        let p = AllocationProblem::new(
            y0.iter()
                .map(|d| LocalCost::quadratic(0.5, 0.0, 0.0, *d).unwrap())
                .collect(),
        )
        .unwrap();
        let a = solve_allocation_oracle(&p).unwrap();
        let mean = y0.iter().sum::<f64>() / 4.0;
        assert!(a.y.iter().all(|y| (y - mean).abs() < 1e-10));
    }
}
