//! Local geometry optimization driven by derivative estimates.
//!
//! Every round fetches all derivatives the method needs from the configured
//! source, so the query ledger is a fixed charge per round: 3 for a quantum
//! Newton round, `2^(l+1) - 1` for a quantum Householder round of order `l`.
//! A round stops the run either because the estimated gradient is below
//! tolerance, or because the local Taylor model certifies that the step just
//! taken lands on a stationary point. The certificate costs no queries: it
//! combines the model residual with the declared bound on the next
//! derivative order.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::derivatives::{estimate_derivative, BoxMode, DerivativePlan};
use crate::error::{Error, Result};
use crate::gradient::{energy_bits_for, estimate_gradient, PrecisionPlan};
use crate::oracles::{EnergyOracle, PerturbationDomain};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Newton,
    /// Root finding on `E'` in one dimension with convergence order `order + 1`.
    Householder { order: u32 },
    /// Fixed-rate steepest descent, kept as a cost baseline.
    GradientDescent { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Quantum,
    ClassicalFd,
    Analytic,
}

/// Geometric level-shift schedule: `lambda` runs through `0` and then
/// `first * factor^j` for `j < steps`, all times the largest `|H|` entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelShift {
    pub first: f64,
    pub factor: f64,
    pub steps: u32,
}

impl Default for LevelShift {
    fn default() -> Self {
        Self {
            first: 1e-4,
            factor: 10.0,
            steps: 7,
        }
    }
}

impl LevelShift {
    pub fn schedule(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain((0..self.steps).map(|j| self.first * self.factor.powi(j as i32)))
            .collect()
    }
}

/// Precision knobs for quantum-sourced derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumSettings {
    /// Output bits per register.
    pub n: u32,
    pub theta: f64,
    /// `m_r = 2 * headroom * bound_r`. A headroom above one keeps values
    /// equal to the declared bound away from the aliasing edge.
    pub headroom: f64,
    pub gradient_width: Option<f64>,
    /// Sampling width of the outermost run for orders of two and above.
    pub derivative_width: Option<f64>,
    /// Upper limit on automatically chosen widths.
    pub max_width: f64,
    pub mode: BoxMode,
}

impl Default for QuantumSettings {
    fn default() -> Self {
        Self {
            n: 8,
            theta: PI / 8.0,
            headroom: 2.0,
            gradient_width: None,
            derivative_width: None,
            max_width: 0.25,
            mode: BoxMode::Idealized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub source: DerivativeSource,
    pub max_iters: usize,
    /// Tolerance on the gradient norm.
    pub tolerance: f64,
    pub trust_radius: f64,
    /// When set, a step that raises the energy is retried with half the
    /// radius. Each trial energy costs one query.
    pub adaptive_trust: bool,
    pub level_shift: LevelShift,
    pub fd_step: f64,
    pub quantum: QuantumSettings,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            source: DerivativeSource::Analytic,
            max_iters: 50,
            tolerance: 1e-10,
            trust_radius: 0.25,
            adaptive_trust: false,
            level_shift: LevelShift::default(),
            fd_step: 1e-5,
            quantum: QuantumSettings::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        if !(self.trust_radius > 0.0) {
            return Err(Error::config("trust radius must be positive"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::config("finite-difference step must be positive"));
        }
        match self.method {
            Method::Householder { order } if !(1..=3).contains(&order) => {
                return Err(Error::config(format!("Householder order {order} not in 1..=3")))
            }
            Method::GradientDescent { rate } if !(rate > 0.0) => {
                return Err(Error::config("descent rate must be positive"))
            }
            _ => {}
        }
        let ls = &self.level_shift;
        if !(ls.first > 0.0 && ls.factor > 1.0) {
            return Err(Error::config("level shift needs first > 0 and factor > 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub method: Method,
    pub source: DerivativeSource,
    /// `R_0, R_1, ...`; one longer than the other per-round vectors when the
    /// last round moved.
    pub iterates: Vec<Vec<f64>>,
    /// Energy at each iterate, read as an uncharged diagnostic.
    pub energies: Vec<f64>,
    /// Estimated gradient norm at the start of each round.
    pub gradient_norms: Vec<f64>,
    pub queries: Vec<u64>,
    /// Level shift applied in each round that stepped.
    pub shifts: Vec<f64>,
    pub total_queries: u64,
    pub converged: bool,
}

impl OptimizationTrace {
    fn new(config: &OptimizerConfig) -> Self {
        Self {
            method: config.method,
            source: config.source,
            iterates: Vec::new(),
            energies: Vec::new(),
            gradient_norms: Vec::new(),
            queries: Vec::new(),
            shifts: Vec::new(),
            total_queries: 0,
            converged: false,
        }
    }

    /// Number of derivative rounds.
    pub fn iterations(&self) -> usize {
        self.queries.len()
    }

    pub fn final_point(&self) -> &[f64] {
        self.iterates.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_energy(&self) -> f64 {
        self.energies.last().copied().unwrap_or(f64::NAN)
    }

    /// Rows `iter, r_0.., energy, grad_norm, queries`; the gradient norm
    /// and query cells are blank for an iterate no round started from.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.iterates.first().map_or(0, Vec::len);
        let mut header = vec!["iter".to_string()];
        header.extend((0..d).map(|i| format!("r{i}")));
        header.extend(["energy", "grad_norm", "queries"].map(String::from));
        w.write_record(&header)?;
        for (i, r) in self.iterates.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(r.iter().map(|x| x.to_string()));
            row.push(self.energies[i].to_string());
            row.push(self.gradient_norms.get(i).map_or(String::new(), |g| g.to_string()));
            row.push(self.queries.get(i).map_or(String::new(), |q| q.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Regularized Newton step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    pub step: Vec<f64>,
    /// Absolute level shift added to the diagonal.
    pub shift: f64,
    pub clipped: bool,
}

/// Solves `(H + lambda I) s = -g` with the smallest scheduled `lambda` that
/// makes the shifted matrix positive definite, then clips `|s|` to the trust
/// radius. `H` is symmetrized first.
pub fn newton_step(g: &[f64], hessian: &Tensor, config: &OptimizerConfig) -> Result<NewtonStep> {
    let d = g.len();
    if hessian.order != 2 || hessian.dim != d {
        return Err(Error::config("Hessian shape does not match the gradient"));
    }
    if g.iter().chain(&hessian.data).any(|x| !x.is_finite()) {
        return Err(Error::Optimizer("non-finite derivatives".into()));
    }
    let h = DMatrix::from_fn(d, d, |i, j| 0.5 * (hessian.get(&[i, j]) + hessian.get(&[j, i])));
    let scale = if hessian.max_abs() > 0.0 { hessian.max_abs() } else { 1.0 };
    let rhs = -DVector::from_column_slice(g);
    for factor in config.level_shift.schedule() {
        let shift = factor * scale;
        let shifted = &h + DMatrix::identity(d, d) * shift;
        let Some(chol) = shifted.cholesky() else { continue };
        let mut step = chol.solve(&rhs);
        let norm = step.norm();
        let clipped = norm > config.trust_radius;
        if clipped {
            step *= config.trust_radius / norm;
        }
        return Ok(NewtonStep {
            step: step.iter().copied().collect(),
            shift,
            clipped,
        });
    }
    Err(Error::Optimizer(
        "no level shift in the schedule makes the Hessian positive definite".into(),
    ))
}

/// One Householder step of order `order` on `f = E'`, given
/// `derivs = [E', E'', ..., E^(order+1)]`.
pub fn householder_step_1d(derivs: &[f64], order: u32) -> Result<f64> {
    if !(1..=3).contains(&order) {
        return Err(Error::config(format!("Householder order {order} not in 1..=3")));
    }
    if derivs.len() < order as usize + 1 {
        return Err(Error::config("too few derivatives for this Householder order"));
    }
    let f = derivs[0];
    let f1 = derivs[1];
    if f1 == 0.0 {
        return Err(Error::Optimizer("vanishing second derivative at the iterate".into()));
    }
    let step = match order {
        1 => -f / f1,
        2 => {
            let f2 = derivs[2];
            -2.0 * f * f1 / (2.0 * f1 * f1 - f * f2)
        }
        _ => {
            let (f2, f3) = (derivs[2], derivs[3]);
            -(6.0 * f * f1 * f1 - 3.0 * f * f * f2)
                / (6.0 * f1.powi(3) - 6.0 * f * f1 * f2 + f * f * f3)
        }
    };
    if !step.is_finite() {
        return Err(Error::Optimizer("Householder denominator vanished".into()));
    }
    Ok(step)
}

/// Finite-difference estimate with its query count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifference {
    pub tensor: Tensor,
    pub queries: u64,
}

/// Forward differences through the counted oracle. Order 1 uses `d + 1`
/// energies, order 2 uses `1 + d + d(d+1)/2`. Axes whose forward point
/// leaves the region step backwards instead.
pub fn finite_difference(oracle: &EnergyOracle, at: &[f64], order: usize, h_fd: f64) -> Result<FiniteDifference> {
    if !(h_fd > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let before = oracle.calls();
    let tensor = match order {
        1 => forward_gradient(oracle, at, h_fd)?,
        2 => forward_stencil(oracle, at, h_fd)?.1,
        _ => return Err(Error::config("finite differences are implemented for orders 1 and 2")),
    };
    Ok(FiniteDifference {
        tensor,
        queries: oracle.calls() - before,
    })
}

fn steps(oracle: &EnergyOracle, at: &[f64], h: f64, reach: f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut probe = at.to_vec();
            probe[i] += reach * h;
            if oracle.contains(&probe) {
                h
            } else {
                -h
            }
        })
        .collect()
}

fn forward_gradient(oracle: &EnergyOracle, at: &[f64], h: f64) -> Result<Tensor> {
    let e0 = oracle.eval(at)?;
    let hs = steps(oracle, at, h, 1.0);
    let mut g = Tensor::zeros(at.len(), 1);
    for (i, &hi) in hs.iter().enumerate() {
        let mut x = at.to_vec();
        x[i] += hi;
        g.data[i] = (oracle.eval(&x)? - e0) / hi;
    }
    Ok(g)
}

/// Forward gradient and Hessian from one shared stencil.
fn forward_stencil(oracle: &EnergyOracle, at: &[f64], h: f64) -> Result<(Tensor, Tensor)> {
    let d = at.len();
    let hs = steps(oracle, at, h, 2.0);
    let e0 = oracle.eval(at)?;
    let single = (0..d)
        .map(|i| {
            let mut x = at.to_vec();
            x[i] += hs[i];
            oracle.eval(&x)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hess = Tensor::zeros(d, 2);
    for i in 0..d {
        for j in i..d {
            let mut x = at.to_vec();
            x[i] += hs[i];
            x[j] += hs[j];
            let v = (oracle.eval(&x)? - single[i] - single[j] + e0) / (hs[i] * hs[j]);
            hess.set(&[i, j], v);
            hess.set(&[j, i], v);
        }
    }
    let grad = Tensor::from_vec(d, 1, (0..d).map(|i| (single[i] - e0) / hs[i]).collect());
    Ok((grad, hess))
}

/// Precision plan for a quantum derivative of `order` at the given point.
fn level_plan(oracle: &EnergyOracle, order: usize, n: u32, h: f64, q: &QuantumSettings) -> Result<PrecisionPlan> {
    let bound = oracle.derivative_bound(order)?;
    let m = if bound > 0.0 { 2.0 * q.headroom * bound } else { 1.0 };
    PrecisionPlan::new(n, m, h, q.theta, energy_bits_for(n, q.theta))
}

/// Sampling width keeping the next-order phase error near 1/16 turn.
fn auto_width(oracle: &EnergyOracle, order: usize, q: &QuantumSettings, fixed: Option<f64>) -> Result<f64> {
    if let Some(h) = fixed {
        return Ok(h);
    }
    let bound = oracle.derivative_bound(order)?;
    let m = if bound > 0.0 { 2.0 * q.headroom * bound } else { 1.0 };
    let curvature = oracle.derivative_bound(order + 1).unwrap_or(0.0);
    let n_points = (1u64 << q.n) as f64;
    let h = if curvature > 0.0 {
        m / (8.0 * curvature * n_points)
    } else {
        q.max_width
    };
    Ok(h.min(q.max_width))
}

/// Plans the levels of an order-`order` quantum estimate. In idealized mode
/// the inner level only rounds analytic values, so it gets enough bits to
/// keep its rounding error at 1/16 turn of the outer phase.
pub fn quantum_derivative_plan(oracle: &EnergyOracle, order: usize, q: &QuantumSettings) -> Result<DerivativePlan> {
    let fixed = if order == 1 { q.gradient_width } else { q.derivative_width };
    let h_outer = auto_width(oracle, order, q, fixed)?;
    let outer = level_plan(oracle, order, q.n, h_outer, q)?;
    let mut levels = Vec::with_capacity(order);
    for r in 1..order {
        let h = auto_width(oracle, r, q, None)?;
        let mut n = q.n;
        if q.mode == BoxMode::Idealized && r + 1 == order {
            let inner_m = level_plan(oracle, r, q.n, h, q)?.m;
            let need = 16.0 * outer.points() as f64 * inner_m / (2.0 * outer.h * outer.m);
            n = n.max(need.log2().ceil() as u32).min(30);
        }
        levels.push(level_plan(oracle, r, n, h, q)?);
    }
    levels.push(outer);
    Ok(DerivativePlan::new(levels, q.mode))
}

/// Derivatives of orders `1..=top` at `at`, charging the oracle.
fn derivatives(oracle: &EnergyOracle, at: &[f64], top: usize, config: &OptimizerConfig) -> Result<Vec<Tensor>> {
    match config.source {
        DerivativeSource::Analytic => (1..=top).map(|r| oracle.analytic_derivative(r, at)).collect(),
        DerivativeSource::ClassicalFd => match top {
            1 => Ok(vec![forward_gradient(oracle, at, config.fd_step)?]),
            2 => {
                let (g, h) = forward_stencil(oracle, at, config.fd_step)?;
                Ok(vec![g, h])
            }
            _ => Err(Error::config("finite-difference source supports up to second derivatives")),
        },
        DerivativeSource::Quantum => (1..=top)
            .map(|r| {
                let plan = quantum_derivative_plan(oracle, r, &config.quantum)?;
                let h = plan.levels[r - 1].h;
                let domain = PerturbationDomain::new(at.to_vec(), h)?;
                if r == 1 {
                    let run = estimate_gradient(oracle, &domain, &plan.levels[0])?;
                    Ok(Tensor::from_vec(at.len(), 1, run.estimate.decoded))
                } else {
                    Ok(estimate_derivative(oracle, &domain, r, &plan)?.tensor())
                }
            })
            .collect(),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diverged(message: String, trace: OptimizationTrace) -> Error {
    Error::Diverged {
        message,
        trace: Box::new(trace),
    }
}

/// Runs the configured method from `start`.
pub fn minimize(oracle: &EnergyOracle, start: &[f64], config: &OptimizerConfig) -> Result<OptimizationTrace> {
    config.validate()?;
    if start.len() != oracle.dim() {
        return Err(Error::config("start point has the wrong dimension"));
    }
    if let Method::Householder { .. } = config.method {
        if oracle.dim() != 1 {
            return Err(Error::config("Householder steps are implemented in one dimension"));
        }
    }
    let mut trace = OptimizationTrace::new(config);
    let mut x = start.to_vec();
    let mut energy = oracle.peek(&x)?;
    trace.iterates.push(x.clone());
    trace.energies.push(energy);

    let top = match config.method {
        Method::Newton => 2,
        Method::Householder { order } => order as usize + 1,
        Method::GradientDescent { .. } => 1,
    };
    // Bound on the first derivative order the step's local model ignores.
    let remainder = oracle.derivative_bound(top + 1).ok();

    for _ in 0..config.max_iters {
        let before = oracle.calls();
        let derivs = match derivatives(oracle, &x, top, config) {
            Ok(d) => d,
            Err(e @ Error::Domain(_)) => return Err(diverged(e.to_string(), trace)),
            Err(e) => return Err(e),
        };
        let g = &derivs[0].data;
        let gnorm = norm(g);
        trace.gradient_norms.push(gnorm);
        if gnorm < config.tolerance {
            trace.queries.push(oracle.calls() - before);
            trace.converged = true;
            break;
        }

        let (mut step, shift, residual) = match config.method {
            Method::Newton => {
                let s = newton_step(g, &derivs[1], config)?;
                let predicted = predicted_gradient(g, &derivs[1], &s.step);
                let l1: f64 = s.step.iter().map(|v| v.abs()).sum();
                let tail = remainder.map(|m| (g.len() as f64).sqrt() * m * l1 * l1 / 2.0);
                let residual = if s.clipped || s.shift > 0.0 { None } else { tail.map(|t| predicted + t) };
                (s.step, s.shift, residual)
            }
            Method::Householder { order } => {
                let series: Vec<f64> = derivs.iter().map(|t| t.data[0]).collect();
                let mut s = householder_step_1d(&series, order)?;
                let clipped = s.abs() > config.trust_radius;
                if clipped {
                    s = s.signum() * config.trust_radius;
                }
                let residual = if clipped {
                    None
                } else {
                    remainder.map(|m| taylor_residual(&series, s) + m * s.abs().powi(order as i32 + 1) / factorial(order + 1))
                };
                (vec![s], 0.0, residual)
            }
            Method::GradientDescent { rate } => {
                let mut s: Vec<f64> = g.iter().map(|v| -rate * v).collect();
                let n = norm(&s);
                if n > config.trust_radius {
                    s.iter_mut().for_each(|v| *v *= config.trust_radius / n);
                }
                (s, 0.0, None)
            }
        };

        let mut candidate: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        if config.adaptive_trust {
            let mut accepted = false;
            for _ in 0..40 {
                if oracle.contains(&candidate) && oracle.eval(&candidate)? <= energy {
                    accepted = true;
                    break;
                }
                step.iter_mut().for_each(|v| *v *= 0.5);
                candidate = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            }
            if !accepted {
                trace.queries.push(oracle.calls() - before);
                trace.total_queries = trace.queries.iter().sum();
                return Err(diverged("no trust radius gave descent".into(), trace));
            }
        }
        trace.queries.push(oracle.calls() - before);
        trace.total_queries = trace.queries.iter().sum();
        if !oracle.contains(&candidate) {
            return Err(diverged(format!("iterate {candidate:?} left the validity region"), trace));
        }
        x = candidate;
        energy = oracle.peek(&x)?;
        trace.iterates.push(x.clone());
        trace.energies.push(energy);
        trace.shifts.push(shift);
        if residual.is_some_and(|r| r < config.tolerance) {
            trace.converged = true;
            break;
        }
    }
    trace.total_queries = trace.queries.iter().sum();
    Ok(trace)
}

/// `|g + H s|`.
fn predicted_gradient(g: &[f64], h: &Tensor, s: &[f64]) -> f64 {
    let d = g.len();
    let r: Vec<f64> = (0..d)
        .map(|i| g[i] + (0..d).map(|j| 0.5 * (h.get(&[i, j]) + h.get(&[j, i])) * s[j]).sum::<f64>())
        .collect();
    norm(&r)
}

/// `|sum_j f^(j) s^j / j!|` with `series = [f, f', ...]`.
fn taylor_residual(series: &[f64], s: f64) -> f64 {
    series
        .iter()
        .enumerate()
        .map(|(j, c)| c * s.powi(j as i32) / factorial(j as u32))
        .sum::<f64>()
        .abs()
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}
