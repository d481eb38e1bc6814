//! Single-query gradient estimation.
//!
//! The registers start in equal superposition, one coherent oracle
//! application writes the phase `(N / (h m)) E_q(mu(k))` turns onto every grid
//! point, and an inverse Fourier transform on each register leaves
//! `N dE/dmu_i / m` in register `i` (modulo `N`). Outcomes are decoded two's
//! complement style: `y >= N/2` stands for `y - N`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{EnergyBounds, EnergyOracle, EnergyQuantizer, PerturbationDomain};
use crate::qstate::{increment_digits, RegisterArray, RegisterLayout, DEFAULT_DIMENSION_CAP};

/// Encoding and decoding parameters for one level of estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPlan {
    /// Output bits per register.
    pub n: u32,
    /// Decoding scale; decoded values lie in `[-m/2, m/2)`.
    pub m: f64,
    /// Sampling width.
    pub h: f64,
    /// Failure angle; `cos^2(theta)` is the target success probability.
    pub theta: f64,
    /// Bits of energy precision, `n_E`.
    pub energy_bits: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `ceil(n + log2(2 pi / theta))`.
pub fn energy_bits_for(n: u32, theta: f64) -> u32 {
    let exact = n as f64 + (2.0 * PI / theta).log2();
    // log2(16) comes out a hair above 4 in floating point.
    (exact - 1e-9).ceil() as u32
}

fn validate_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < PI / 2.0) {
        return Err(Error::config(format!(
            "failure angle must lie in (0, pi/2), got {theta}"
        )));
    }
    Ok(())
}

impl PrecisionPlan {
    pub fn new(n: u32, m: f64, h: f64, theta: f64, energy_bits: u32) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(Error::config(format!("output bits must be in 1..=30, got {n}")));
        }
        validate_theta(theta)?;
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::config(format!("scale m must be positive, got {m}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("sampling width must be positive, got {h}")));
        }
        if energy_bits < n {
            return Err(Error::config(format!(
                "energy bits ({energy_bits}) must be at least the output bits ({n})"
            )));
        }
        Ok(Self {
            n,
            m,
            h,
            theta,
            energy_bits,
            warnings: Vec::new(),
        })
    }

    pub fn points(&self) -> usize {
        1usize << self.n
    }

    /// Spacing of decoded values, `m / N`.
    pub fn resolution(&self) -> f64 {
        self.m / self.points() as f64
    }

    /// Phase turns per unit of encoded value, `N / (h m)`.
    pub fn phase_scale(&self) -> f64 {
        self.points() as f64 / (self.h * self.m)
    }

    pub fn with_energy_bits(mut self, bits: u32) -> Self {
        self.energy_bits = bits;
        self
    }

    pub fn with_width(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    /// Signed value represented by register outcome `y`.
    pub fn decode(&self, y: usize) -> f64 {
        let n = self.points() as i64;
        let y = y as i64;
        let signed = if y >= n / 2 { y - n } else { y };
        self.m * signed as f64 / n as f64
    }

    /// Register outcome nearest to `value`, wrapped modulo `N`.
    pub fn encode(&self, value: f64) -> usize {
        let n = self.points() as i64;
        let k = (value * n as f64 / self.m).round() as i64;
        k.rem_euclid(n) as usize
    }

    /// `value` rounded to the decoding grid, with the same aliasing a register
    /// readout would show.
    pub fn round_to_grid(&self, value: f64) -> f64 {
        self.decode(self.encode(value))
    }

    /// Sampling domain of this plan around `center`.
    pub fn domain_at(&self, center: Vec<f64>) -> Result<PerturbationDomain> {
        PerturbationDomain::new(center, self.h)
    }
}

/// Plans a gradient run: `m` is twice the declared first-derivative bound and
/// `n_E = ceil(n + log2(2 pi / theta))`.
pub fn plan(n: u32, theta: f64, oracle: &EnergyOracle, h: f64) -> Result<PrecisionPlan> {
    plan_for_order(1, n, theta, oracle, h)
}

/// Plan for estimating order-`order` derivatives by one level of gradient
/// estimation over the order-`order - 1` values.
pub fn plan_for_order(
    order: usize,
    n: u32,
    theta: f64,
    oracle: &EnergyOracle,
    h: f64,
) -> Result<PrecisionPlan> {
    validate_theta(theta)?;
    let bound = oracle.derivative_bound(order)?;
    // An identically vanishing derivative still needs a positive scale.
    let m = if bound > 0.0 { 2.0 * bound } else { 1.0 };
    let mut plan = PrecisionPlan::new(n, m, h, theta, energy_bits_for(n, theta))?;
    if let Ok(curvature) = oracle.derivative_bound(order + 1) {
        if curvature * h > m / 2.0 {
            plan.warnings.push(format!(
                "curvature bound {curvature} times h = {h} exceeds m/2 = {}",
                m / 2.0
            ));
        }
        let quadratic_turns = h * h * curvature * plan.points() as f64 / (2.0 * h * m);
        if quadratic_turns > 0.25 {
            plan.warnings.push(format!(
                "second-order phase error reaches {quadratic_turns:.3} turns; reduce h"
            ));
        }
    }
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    Ok(plan)
}

/// How the output registers are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Report the most likely outcome from the exact distribution.
    Argmax,
    /// Report one outcome drawn with a seeded generator.
    Sample { seed: u64 },
}

/// Per-run knobs that are not part of the precision plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub readout: Readout,
    pub dimension_cap: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            readout: Readout::Argmax,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }
}

/// Serializable result of a gradient run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub raw: Vec<usize>,
    pub decoded: Vec<f64>,
    /// Probability of the outcome vector nearest the true gradient.
    pub success_probability: f64,
    /// Per-register probability of the correct value.
    pub register_success: Vec<f64>,
    #[serde(rename = "queries")]
    pub queries_used: u64,
    pub plan: PrecisionPlan,
}

/// A finished run with its final state.
#[derive(Debug, Clone)]
pub struct GradientRun {
    pub estimate: GradientEstimate,
    pub readout: Readout,
    state: RegisterArray,
}

impl GradientRun {
    /// Post-transform amplitudes.
    pub fn state(&self) -> &RegisterArray {
        &self.state
    }
}

/// Energy range used for fixed-point encoding over one sampling box:
/// declared bounds if present, else the model's exact range, else the
/// extremes over the grid points.
pub fn sampling_bounds(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    layout: RegisterLayout,
) -> Result<EnergyBounds> {
    if let Some(b) = oracle.bounds() {
        return Ok(b);
    }
    let (lo, hi) = domain.corners();
    if let Some((min, max)) = oracle.exact_range(&lo, &hi) {
        return EnergyBounds::new(min, max);
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut k = vec![0; layout.registers()];
    for _ in 0..layout.dimension() {
        let e = oracle.peek(&domain.point(&k, layout.points()))?;
        min = min.min(e);
        max = max.max(e);
        increment_digits(&mut k, layout.points());
    }
    EnergyBounds::new(min, max)
}

fn check_run(oracle: &EnergyOracle, domain: &PerturbationDomain, plan: &PrecisionPlan) -> Result<()> {
    if domain.dim() != oracle.dim() {
        return Err(Error::config(format!(
            "domain has dimension {}, oracle has {}",
            domain.dim(),
            oracle.dim()
        )));
    }
    if (domain.h - plan.h).abs() > 1e-12 * plan.h {
        return Err(Error::config(format!(
            "domain width {} differs from planned width {}",
            domain.h, plan.h
        )));
    }
    Ok(())
}

/// State after the single oracle application and before any Fourier
/// transform. Charges one query.
pub fn prepare_phased_state(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    plan: &PrecisionPlan,
    dimension_cap: usize,
) -> Result<(RegisterArray, EnergyQuantizer)> {
    check_run(oracle, domain, plan)?;
    let layout = RegisterLayout::with_cap(domain.dim(), plan.n, dimension_cap)?;
    layout.check_capacity()?;
    let quantizer = EnergyQuantizer::new(sampling_bounds(oracle, domain, layout)?, plan.energy_bits)?;
    let mut state = RegisterArray::uniform_superposition(layout)?;
    let scale = plan.phase_scale();
    let points = plan.points();
    let query = oracle.coherent_query();
    state.try_apply_diagonal_phase(|k| {
        let e = quantizer.quantize(query.eval(&domain.point(k, points))?)?;
        Ok(scale * e)
    })?;
    Ok((state, quantizer))
}

/// Register outcome nearest the analytic gradient at the domain center.
pub fn correct_outcome(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    plan: &PrecisionPlan,
) -> Result<Vec<usize>> {
    let g = oracle.analytic_derivative(1, &domain.center)?;
    Ok(g.data.iter().map(|&gi| plan.encode(gi)).collect())
}

/// One-query gradient estimate with argmax readout.
pub fn estimate_gradient(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    plan: &PrecisionPlan,
) -> Result<GradientRun> {
    estimate_gradient_with(oracle, domain, plan, RunOptions::default())
}

pub fn estimate_gradient_with(
    oracle: &EnergyOracle,
    domain: &PerturbationDomain,
    plan: &PrecisionPlan,
    options: RunOptions,
) -> Result<GradientRun> {
    let (mut state, _) = prepare_phased_state(oracle, domain, plan, options.dimension_cap)?;
    state.inverse_qft_all();
    let dist = state.outcome_distribution();
    let raw = match options.readout {
        Readout::Argmax => dist.argmax(),
        Readout::Sample { seed } => dist.sample(&mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let correct = correct_outcome(oracle, domain, plan)?;
    let register_success = correct
        .iter()
        .enumerate()
        .map(|(i, &c)| dist.marginal(i)[c])
        .collect();
    let estimate = GradientEstimate {
        decoded: raw.iter().map(|&y| plan.decode(y)).collect(),
        success_probability: dist.probability(&correct),
        register_success,
        raw,
        queries_used: 1,
        plan: plan.clone(),
    };
    Ok(GradientRun {
        estimate,
        readout: options.readout,
        state,
    })
}

/// Global phase in `[0, 2 pi)` carried by the most likely outcome.
pub fn phase_of(run: &GradientRun) -> Result<f64> {
    if run.readout != Readout::Argmax {
        return Err(Error::config("the global phase is only defined in statevector mode"));
    }
    let y = run.state.outcome_distribution().argmax();
    Ok(wrap_phase(run.state.amplitude(&y).arg()))
}

/// Maps an angle into `[0, 2 pi)`.
pub fn wrap_phase(angle: f64) -> f64 {
    let w = angle.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}
