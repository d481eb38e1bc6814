//! Higher derivatives by recursing gradient estimation.
//!
//! A gradient run `V(nu)` maps `|0>` to `e^{i Phi(nu)} |N/m dE/dmu at nu>`
//! for one energy query. To use it as the function inside another gradient
//! run, its output must become a phase on the outer grid point and nothing
//! else: the run is applied, its output register picks up the outer phase,
//! and the run is undone. Undoing costs a second query and returns the inner
//! registers to `|0>`, which removes both the global phase and the inner
//! output. The Hessian therefore costs two queries, and each further order
//! doubles the price, so order `r` costs `2^(r-1)`.
//!
//! Cancelling only the global phase, with one energy call at `nu` and a
//! phase of `pi y` on the output, gives a phase-clean value box but leaves
//! the inner output entangled with the outer grid, which spoils the outer
//! interference. That variant is kept for the ablation study.
//!
//! Two simulation modes are provided:
//!
//! * [`BoxMode::Idealized`] treats the inner box as exact: its output is the
//!   analytic derivative rounded to the inner decoding grid. Works for any
//!   dimension. The order-`r` run is vectorized over the `d^(r-1)` output
//!   components of the inner box, which share the same coherent query.
//! * [`BoxMode::Nested`] simulates every inner run coherently for every outer
//!   basis state. Only one-dimensional oracles are supported; the order-`r`
//!   state has `N_1 ... N_r` amplitudes.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{
    estimate_gradient_with, plan_for_order, sampling_bounds, wrap_phase, PrecisionPlan,
    RunOptions,
};
use crate::oracles::{EnergyOracle, EnergyQuantizer, PerturbationDomain};
use crate::qstate::{transform_strided, turn_phasor, RegisterArray, RegisterLayout, DEFAULT_DIMENSION_CAP};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxMode {
    Idealized,
    Nested,
}

/// How an inner run is cleaned up after handing its value to the outer run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncomputation {
    /// Undo the inner run. Two queries per use.
    Reverse,
    /// Cancel the global phase only, with an energy call at the inner
    /// center. Two queries per use; the inner output stays behind. Nested
    /// Hessians only.
    GlobalPhase,
    /// Leave the inner run as is. One query per use.
    Disabled,
}

impl Uncomputation {
    fn factor(self) -> u64 {
        match self {
            Uncomputation::Disabled => 1,
            _ => 2,
        }
    }
}

/// Per-level plans for an order-`r` estimate: `levels[j]` encodes and decodes
/// the order-`j + 1` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativePlan {
    pub levels: Vec<PrecisionPlan>,
    pub mode: BoxMode,
    #[serde(default = "reverse")]
    pub uncomputation: Uncomputation,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

fn reverse() -> Uncomputation {
    Uncomputation::Reverse
}

fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl DerivativePlan {
    pub fn new(levels: Vec<PrecisionPlan>, mode: BoxMode) -> Self {
        Self {
            levels,
            mode,
            uncomputation: Uncomputation::Reverse,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    /// Plans levels `1..=order` from the oracle's declared bounds, all with
    /// `n` output bits; `widths[j]` is the sampling width of level `j + 1`.
    pub fn from_bounds(
        oracle: &EnergyOracle,
        order: usize,
        n: u32,
        theta: f64,
        widths: &[f64],
        mode: BoxMode,
    ) -> Result<Self> {
        if widths.len() < order {
            return Err(Error::config(format!(
                "{} sampling widths given for {order} levels",
                widths.len()
            )));
        }
        let levels = (1..=order)
            .map(|r| plan_for_order(r, n, theta, oracle, widths[r - 1]))
            .collect::<Result<_>>()?;
        Ok(Self::new(levels, mode))
    }

    pub fn with_uncomputation(mut self, uncomputation: Uncomputation) -> Self {
        self.uncomputation = uncomputation;
        self
    }

    fn level(&self, order: usize) -> Result<&PrecisionPlan> {
        order
            .checked_sub(1)
            .and_then(|i| self.levels.get(i))
            .ok_or_else(|| Error::config(format!("no plan for derivative level {order}")))
    }

    /// Queries charged by an order-`order` estimate under this plan.
    pub fn query_cost(&self, order: usize) -> u64 {
        let factor = match self.mode {
            BoxMode::Idealized => 2,
            BoxMode::Nested => self.uncomputation.factor(),
        };
        factor.pow(order.saturating_sub(1) as u32)
    }
}

/// Queries charged by an order-`order` estimate.
pub fn derivative_query_cost(order: usize) -> u64 {
    1u64 << order.saturating_sub(1)
}

/// Decoded order-`r` tensor with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTensor {
    pub order: usize,
    pub dim: usize,
    /// Row-major `d^r` entries.
    pub entries: Vec<f64>,
    /// `m_r` used to decode.
    pub scale: f64,
    pub queries: u64,
    /// Register outcome behind every entry.
    pub raw: Vec<usize>,
    /// Joint probability that every register read its correct value.
    pub success_probability: f64,
    /// Probability of the correct outcome in each independent outer run.
    pub component_success: Vec<f64>,
    /// Global phase of each outer run at its most likely outcome.
    pub global_phases: Vec<f64>,
    pub mode: BoxMode,
}

impl DerivativeTensor {
    pub fn tensor(&self) -> Tensor {
        Tensor::from_vec(self.dim, self.order, self.entries.clone())
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.tensor().get(index)
    }
}

/// The gradient run packaged as a phase-clean value box.
#[derive(Debug, Clone)]
pub struct GradientBlackBox {
    oracle: EnergyOracle,
    plan: PrecisionPlan,
    mode: BoxMode,
    dimension_cap: usize,
}

/// Output of one box call.
#[derive(Debug, Clone)]
pub struct BoxEvaluation {
    /// Most likely decoded gradient.
    pub decoded: Vec<f64>,
    pub raw: Vec<usize>,
    /// Probability of the most likely output.
    pub probability: f64,
    /// Phase carried by the most likely output; zero when phase-clean.
    pub phase: f64,
    pub queries: u64,
    /// Output register state (nested mode only).
    pub state: Option<Vec<Complex64>>,
}

/// Wraps the gradient run as a reusable black box. Each call costs one
/// query for the run and one energy query at the center to cancel the
/// global phase.
pub fn gradient_blackbox(
    oracle: &EnergyOracle,
    plan: &PrecisionPlan,
    mode: BoxMode,
) -> Result<GradientBlackBox> {
    if mode == BoxMode::Nested && oracle.dim() != 1 {
        return Err(Error::config("nested simulation supports one-dimensional oracles only"));
    }
    Ok(GradientBlackBox {
        oracle: oracle.clone(),
        plan: plan.clone(),
        mode,
        dimension_cap: DEFAULT_DIMENSION_CAP,
    })
}

impl GradientBlackBox {
    pub fn queries_per_call(&self) -> u64 {
        2
    }

    pub fn evaluate(&self, nu: &[f64]) -> Result<BoxEvaluation> {
        match self.mode {
            BoxMode::Idealized => {
                let g = self.oracle.analytic_derivative(1, nu)?;
                let raw: Vec<usize> = g.data.iter().map(|&v| self.plan.encode(v)).collect();
                self.oracle.charge(self.queries_per_call());
                Ok(BoxEvaluation {
                    decoded: raw.iter().map(|&y| self.plan.decode(y)).collect(),
                    raw,
                    probability: 1.0,
                    phase: 0.0,
                    queries: self.queries_per_call(),
                    state: None,
                })
            }
            BoxMode::Nested => {
                let levels = [self.plan.clone()];
                let sim = NestedSim {
                    oracle: &self.oracle,
                    plans: &levels,
                    uncomputation: Uncomputation::GlobalPhase,
                    cap: self.dimension_cap,
                };
                let mut amps = sim.ground(1)?;
                sim.apply_v(1, nu[0], &mut amps, false)?;
                sim.cancel_global_phase(nu[0], &mut amps)?;
                self.oracle.charge(self.queries_per_call());
                let (best, probability) = amps
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (i, a.norm_sqr()))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                Ok(BoxEvaluation {
                    decoded: vec![self.plan.decode(best)],
                    raw: vec![best],
                    probability,
                    phase: wrap_phase(amps[best].arg()),
                    queries: self.queries_per_call(),
                    state: Some(amps),
                })
            }
        }
    }
}

/// Hessian from two energy queries.
pub fn estimate_hessian(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    plan: &DerivativePlan,
) -> Result<DerivativeTensor> {
    estimate_derivative(oracle, domain, 2, plan)
}

/// Order-`order` derivative tensor from `2^(order - 1)` energy queries.
pub fn estimate_derivative(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    order: usize,
    plan: &DerivativePlan,
) -> Result<DerivativeTensor> {
    if order == 0 {
        return Err(Error::config("derivative order must be at least 1"));
    }
    if domain.dim() != oracle.dim() {
        return Err(Error::config("domain and oracle dimensions differ"));
    }
    let outer = plan.level(order)?;
    if (outer.h - domain.h).abs() > 1e-12 * outer.h {
        return Err(Error::config(format!(
            "domain width {} differs from level-{order} width {}",
            domain.h, outer.h
        )));
    }
    for r in 1..order {
        plan.level(r)?;
    }
    if order == 1 {
        let options = RunOptions {
            dimension_cap: plan.dimension_cap,
            ..RunOptions::default()
        };
        let run = estimate_gradient_with(oracle, domain, outer, options)?;
        let phase = crate::gradient::phase_of(&run)?;
        let est = run.estimate;
        return Ok(DerivativeTensor {
            order: 1,
            dim: domain.dim(),
            entries: est.decoded,
            scale: outer.m,
            queries: est.queries_used,
            raw: est.raw,
            success_probability: est.success_probability,
            component_success: vec![est.success_probability],
            global_phases: vec![phase],
            mode: plan.mode,
        });
    }
    match plan.mode {
        BoxMode::Idealized => idealized(oracle, domain, order, plan),
        BoxMode::Nested => nested(oracle, domain, order, plan),
    }
}

fn idealized(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    order: usize,
    plan: &DerivativePlan,
) -> Result<DerivativeTensor> {
    let d = domain.dim();
    let inner = plan.level(order - 1)?;
    let outer = plan.level(order)?;
    let layout = RegisterLayout::with_cap(d, outer.n, plan.dimension_cap)?;
    layout.check_capacity()?;
    let truth = oracle.analytic_derivative(order, &domain.center)?;
    let components = d.pow((order - 1) as u32);
    let scale = outer.phase_scale();
    let points = outer.points();

    let runs: Vec<(Vec<usize>, f64, f64)> = (0..components)
        .into_par_iter()
        .map(|component| {
            let mut state = RegisterArray::uniform_superposition(layout)?;
            state.try_apply_diagonal_phase(|k| {
                let mu = domain.point(k, points);
                let value = oracle.analytic_derivative(order - 1, &mu)?.data[component];
                Ok(scale * inner.round_to_grid(value))
            })?;
            state.inverse_qft_all();
            let dist = state.outcome_distribution();
            let raw = dist.argmax();
            let correct: Vec<usize> = (0..d)
                .map(|i| outer.encode(truth.data[component * d + i]))
                .collect();
            let phase = wrap_phase(state.amplitude(&raw).arg());
            Ok((raw, dist.probability(&correct), phase))
        })
        .collect::<Result<_>>()?;

    let queries = plan.query_cost(order);
    oracle.charge(queries);
    let raw: Vec<usize> = runs.iter().flat_map(|r| r.0.iter().copied()).collect();
    let component_success: Vec<f64> = runs.iter().map(|r| r.1).collect();
    Ok(DerivativeTensor {
        order,
        dim: d,
        entries: raw.iter().map(|&y| outer.decode(y)).collect(),
        scale: outer.m,
        queries,
        raw,
        success_probability: component_success.iter().product(),
        component_success,
        global_phases: runs.iter().map(|r| r.2).collect(),
        mode: BoxMode::Idealized,
    })
}

fn nested(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    order: usize,
    plan: &DerivativePlan,
) -> Result<DerivativeTensor> {
    if oracle.dim() != 1 {
        return Err(Error::config("nested simulation supports one-dimensional oracles only"));
    }
    if plan.uncomputation == Uncomputation::GlobalPhase && order != 2 {
        return Err(Error::config("global-phase-only uncomputation is simulated for Hessians only"));
    }
    let sim = NestedSim {
        oracle,
        plans: &plan.levels,
        uncomputation: plan.uncomputation,
        cap: plan.dimension_cap,
    };
    let outer = plan.level(order)?;
    let mut amps = sim.ground(order)?;
    sim.apply_v(order, domain.center[0], &mut amps, false)?;
    let n = outer.points();
    let rest = amps.len() / n;
    let mut marginal = vec![0.0; n];
    for (i, a) in amps.iter().enumerate() {
        marginal[i / rest] += a.norm_sqr();
    }
    let best = (0..n)
        .max_by(|&a, &b| marginal[a].total_cmp(&marginal[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let truth = oracle.analytic_derivative(order, &domain.center)?.data[0];
    let success = marginal[outer.encode(truth)];
    // Phase of the dominant amplitude within the winning outer outcome.
    let lead = (0..rest)
        .map(|s| amps[best * rest + s])
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .unwrap_or_default();
    let queries = plan.query_cost(order);
    oracle.charge(queries);
    Ok(DerivativeTensor {
        order,
        dim: 1,
        entries: vec![outer.decode(best)],
        scale: outer.m,
        queries,
        raw: vec![best],
        success_probability: success,
        component_success: vec![success],
        global_phases: vec![wrap_phase(lead.arg())],
        mode: BoxMode::Nested,
    })
}

/// Coherent simulation of nested gradient runs for a one-dimensional
/// oracle. The order-`j` run `V_j` acts on registers `[y_j][y_(j-1)]..[y_1]`;
/// energy evaluations here are uncharged and callers charge the total.
struct NestedSim<'a> {
    oracle: &'a EnergyOracle,
    plans: &'a [PrecisionPlan],
    uncomputation: Uncomputation,
    cap: usize,
}

impl NestedSim<'_> {
    fn plan(&self, level: usize) -> Result<&PrecisionPlan> {
        self.plans
            .get(level - 1)
            .ok_or_else(|| Error::config(format!("no plan for derivative level {level}")))
    }

    /// Amplitude count of the registers `V_level` acts on.
    fn size(&self, level: usize) -> Result<usize> {
        let mut size: u128 = 1;
        for j in 1..=level {
            size *= self.plan(j)?.points() as u128;
        }
        if size > self.cap as u128 {
            return Err(Error::Capacity {
                requested: size,
                cap: self.cap,
            });
        }
        Ok(size as usize)
    }

    /// `|0...0>` over the registers of `V_level`.
    fn ground(&self, level: usize) -> Result<Vec<Complex64>> {
        let mut amps = vec![Complex64::new(0.0, 0.0); self.size(level)?];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(amps)
    }

    fn level_one_quantizer(&self, nu: f64) -> Result<EnergyQuantizer> {
        let plan = self.plan(1)?;
        let domain = PerturbationDomain::new(vec![nu], plan.h)?;
        let layout = RegisterLayout::with_cap(1, plan.n, self.cap)?;
        EnergyQuantizer::new(sampling_bounds(self.oracle, &domain, layout)?, plan.energy_bits)
    }

    /// Applies `V_level(nu)`, or its inverse when `adjoint` is set: uniform
    /// superposition on the top register, the controlled inner phase
    /// oracle, inverse transform.
    fn apply_v(&self, level: usize, nu: f64, amps: &mut [Complex64], adjoint: bool) -> Result<()> {
        let plan = self.plan(level)?;
        let n = plan.points();
        let scale = plan.phase_scale();
        let rest = amps.len() / n;
        // Both transforms are their own direction's adjoint partner, so the
        // inverse keeps their order and only conjugates the phase.
        let sign = if adjoint { -1.0 } else { 1.0 };
        transform_strided(amps, n, rest, FftDirection::Inverse);
        let domain = PerturbationDomain::new(vec![nu], plan.h)?;
        if level == 1 {
            let quantizer = self.level_one_quantizer(nu)?;
            for (k, a) in amps.iter_mut().enumerate() {
                let mu = domain.point(&[k], n);
                let e = quantizer.quantize(self.oracle.peek(&mu)?)?;
                *a *= turn_phasor(sign * scale * e);
            }
        } else {
            for (k, block) in amps.chunks_mut(rest).enumerate() {
                let mu = domain.point(&[k], n)[0];
                self.phase_oracle(level - 1, mu, sign * scale, block)?;
            }
        }
        transform_strided(amps, n, rest, FftDirection::Forward);
        Ok(())
    }

    /// Writes `e^{2 pi i scale f(mu)}` for the order-`level` value `f`
    /// using `V_level(mu)` and the configured cleanup. A negative `scale`
    /// gives the adjoint, which only the reversible cleanup needs.
    fn phase_oracle(&self, level: usize, mu: f64, scale: f64, block: &mut [Complex64]) -> Result<()> {
        let plan = self.plan(level)?;
        let rest = block.len() / plan.points();
        self.apply_v(level, mu, block, false)?;
        for (i, a) in block.iter_mut().enumerate() {
            *a *= turn_phasor(scale * plan.decode(i / rest));
        }
        match self.uncomputation {
            Uncomputation::Reverse => self.apply_v(level, mu, block, true),
            Uncomputation::GlobalPhase => self.cancel_global_phase(mu, block),
            Uncomputation::Disabled => Ok(()),
        }
    }

    /// Removes `Phi(nu)` from a level-1 output: the energy part with one
    /// energy value at `nu`, the gradient part with `pi y`.
    fn cancel_global_phase(&self, nu: f64, amps: &mut [Complex64]) -> Result<()> {
        let plan = self.plan(1)?;
        if amps.len() != plan.points() {
            return Err(Error::config("global-phase cancellation acts on a level-1 register"));
        }
        let e = self.level_one_quantizer(nu)?.quantize(self.oracle.peek(&[nu])?)?;
        let energy = turn_phasor(-plan.phase_scale() * e);
        for (y, a) in amps.iter_mut().enumerate() {
            *a *= energy * turn_phasor(0.5 * y as f64);
        }
        Ok(())
    }
}

/// Nested Hessian under each cleanup of the inner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub reverse: DerivativeTensor,
    pub global_phase_only: DerivativeTensor,
    pub disabled: DerivativeTensor,
}

impl AblationReport {
    pub fn success_with(&self) -> f64 {
        self.reverse.success_probability
    }

    pub fn success_without(&self) -> f64 {
        self.disabled.success_probability
    }
}

/// Runs the nested one-dimensional Hessian with the inner run undone, with
/// only its global phase cancelled, and with no cleanup.
pub fn uncomputation_ablation(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    plan: &DerivativePlan,
) -> Result<AblationReport> {
    if oracle.dim() != 1 {
        return Err(Error::config("the ablation runs in nested mode on one-dimensional oracles"));
    }
    let mut base = plan.clone();
    base.mode = BoxMode::Nested;
    let run = |u| estimate_hessian(oracle, domain, &base.clone().with_uncomputation(u));
    Ok(AblationReport {
        reverse: run(Uncomputation::Reverse)?,
        global_phase_only: run(Uncomputation::GlobalPhase)?,
        disabled: run(Uncomputation::Disabled)?,
    })
}

/// Outcome shift predicted for a linear oracle when the inner run is left
/// in place: its global phase grows by `N_1 g / (h_1 m_1)` turns per unit of
/// `nu`, which moves the outer reading by `N_2 g h_2 / (h_1 m_1)` modulo
/// `N_2`.
pub fn predicted_ablation_shift(gradient: f64, levels: &[PrecisionPlan]) -> f64 {
    let (inner, outer) = (&levels[0], &levels[1]);
    let turns_per_unit = inner.points() as f64 * gradient / (inner.h * inner.m);
    let n = outer.points() as f64;
    (turns_per_unit * outer.h).rem_euclid(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::f64::consts::PI;

    fn quad(a: f64) -> EnergyOracle {
        EnergyOracle::from_model("quadratic_form", &json!({"matrix": [[a]]})).unwrap()
    }

    fn level(n: u32, m: f64, h: f64) -> PrecisionPlan {
        PrecisionPlan::new(n, m, h, PI / 8.0, n + 4).unwrap()
    }

    #[test]
    fn cost_law() {
        assert_eq!(
            (1..=5).map(derivative_query_cost).collect::<Vec<_>>(),
            vec![1, 2, 4, 8, 16]
        );
    }

    #[test]
    fn idealized_box_quantizes_and_charges_two() {
        let o = quad(0.5);
        let b = gradient_blackbox(&o, &level(4, 1.0, 1.0 / 16.0), BoxMode::Idealized).unwrap();
        let out = b.evaluate(&[0.25]).unwrap();
        assert_eq!(out.decoded, vec![0.125]);
        assert_eq!(out.queries, 2);
        assert_eq!(o.calls(), 2);
    }

    #[test]
    fn constant_box_is_phase_clean() {
        let o = EnergyOracle::from_model("constant", &json!({"value": 0.37})).unwrap();
        let b = gradient_blackbox(&o, &level(4, 1.0, 1.0 / 16.0), BoxMode::Nested).unwrap();
        for nu in [-0.5, 0.0, 0.3] {
            let out = b.evaluate(&[nu]).unwrap();
            assert_eq!(out.decoded, vec![0.0]);
            assert!(out.phase.min(2.0 * PI - out.phase) < 1e-9, "{}", out.phase);
        }
    }

    #[test]
    fn nested_box_matches_idealized_box() {
        let o = quad(0.5);
        let p = level(4, 1.0, 1.0 / 16.0);
        let ideal = gradient_blackbox(&o, &p, BoxMode::Idealized).unwrap();
        let nested = gradient_blackbox(&o, &p, BoxMode::Nested).unwrap();
        for nu in [-0.6, -0.1, 0.0, 0.25, 0.7] {
            let a = ideal.evaluate(&[nu]).unwrap().decoded[0];
            let b = nested.evaluate(&[nu]).unwrap().decoded[0];
            assert!((a - b).abs() <= p.resolution() + 1e-12, "{nu}: {a} vs {b}");
        }
    }

    #[test]
    fn nested_rejects_multidimensional() {
        let o = EnergyOracle::from_model("linear", &json!({"gradient": [0.1, 0.2]})).unwrap();
        assert!(gradient_blackbox(&o, &level(3, 1.0, 0.1), BoxMode::Nested).is_err());
    }

    #[test]
    fn linear_oracle_has_zero_hessian() {
        let o = EnergyOracle::from_model("linear", &json!({"gradient": [0.25, -0.25]})).unwrap();
        let plan = DerivativePlan::new(vec![level(4, 1.0, 0.25), level(4, 1.0, 1.0)], BoxMode::Idealized);
        let t = estimate_hessian(&o, &PerturbationDomain::origin(2, 1.0).unwrap(), &plan).unwrap();
        assert!(t.entries.iter().all(|&v| v == 0.0));
        assert_eq!(t.queries, 2);
    }

    fn nested_quad_plan() -> (EnergyOracle, DerivativePlan, PerturbationDomain) {
        let o = quad(0.5).with_region(vec![(-3.0, 3.0)]).unwrap();
        let plan = DerivativePlan::new(
            vec![
                PrecisionPlan::new(4, 1.0, 1.0 / 16.0, PI / 8.0, 8).unwrap(),
                PrecisionPlan::new(4, 2.0, 2.0, PI / 8.0, 8).unwrap(),
            ],
            BoxMode::Nested,
        );
        (o, plan, PerturbationDomain::new(vec![0.0], 2.0).unwrap())
    }

    #[test]
    fn nested_hessian_with_reverse_cleanup() {
        let (o, plan, dom) = nested_quad_plan();
        let t = estimate_hessian(&o, &dom, &plan).unwrap();
        assert_eq!(t.entries, vec![0.5]);
        assert!(t.success_probability > 0.99, "{}", t.success_probability);
        assert_eq!((t.queries, o.calls()), (2, 2));
    }

    #[test]
    fn ablation_arms_and_costs() {
        let (o, plan, dom) = nested_quad_plan();
        let rep = uncomputation_ablation(&o, &dom, &plan).unwrap();
        assert!(rep.success_with() - rep.success_without() > 0.5);
        assert!(rep.global_phase_only.success_probability < 0.2);
        assert_eq!(
            (rep.reverse.queries, rep.global_phase_only.queries, rep.disabled.queries),
            (2, 2, 1)
        );
    }

    #[test]
    fn disabled_cleanup_shifts_linear_reading() {
        let o = EnergyOracle::from_model("linear", &json!({"gradient": [0.3125]}))
            .unwrap()
            .with_region(vec![(-20.0, 20.0)])
            .unwrap();
        let levels = vec![
            PrecisionPlan::new(4, 1.0, 1.0, PI / 8.0, 10).unwrap(),
            PrecisionPlan::new(4, 2.0, 8.0, PI / 8.0, 10).unwrap(),
        ];
        let dom = PerturbationDomain::new(vec![0.0], 8.0).unwrap();
        let rep = uncomputation_ablation(&o, &dom, &DerivativePlan::new(levels.clone(), BoxMode::Nested)).unwrap();
        assert_eq!(rep.reverse.raw, vec![0]);
        assert_eq!(predicted_ablation_shift(0.3125, &levels), 8.0);
        assert_eq!(rep.disabled.raw, vec![8]);
        assert!(rep.disabled.component_success[0] < 1e-9);
    }

    #[test]
    fn nested_third_derivative_of_cubic() {
        let o = EnergyOracle::from_model(
            "polynomial_1d",
            &json!({"coefficients": [0.0, 0.0, 0.0, 1.0 / 6.0]}),
        )
        .unwrap()
        .with_region(vec![(-8.0, 8.0)])
        .unwrap();
        let plan = DerivativePlan::new(
            vec![
                PrecisionPlan::new(8, 8.0, 1.0 / 32.0, PI / 8.0, 14).unwrap(),
                PrecisionPlan::new(4, 4.0, 0.5, PI / 8.0, 14).unwrap(),
                PrecisionPlan::new(3, 4.0, 2.0, PI / 8.0, 14).unwrap(),
            ],
            BoxMode::Nested,
        );
        let t = estimate_derivative(&o, &PerturbationDomain::new(vec![0.0], 2.0).unwrap(), 3, &plan).unwrap();
        assert_eq!(t.entries, vec![1.0]);
        assert!(t.success_probability > 0.99, "{}", t.success_probability);
        assert_eq!(t.queries, 4);
    }

    #[test]
    fn global_phase_cleanup_is_hessian_only() {
        let o = quad(0.5);
        let plan = DerivativePlan::new(vec![level(3, 1.0, 0.1); 3], BoxMode::Nested)
            .with_uncomputation(Uncomputation::GlobalPhase);
        let dom = PerturbationDomain::new(vec![0.0], 0.1).unwrap();
        assert!(estimate_derivative(&o, &dom, 3, &plan).is_err());
    }
}
