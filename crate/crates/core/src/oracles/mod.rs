//! Energy black boxes: model surfaces wrapped with a validity region,
//! declared bounds, a query counter, domain shifting and fixed-point output.
//!
//! The query unit is one coherent application of the oracle. A classical
//! call to [`EnergyOracle::eval`] costs one unit; so does a whole
//! superposed application through [`EnergyOracle::coherent_query`], no
//! matter how many basis points the simulator evaluates behind it.

pub mod models;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use models::{make_surface, EnergySurface, MAX_DERIVATIVE_ORDER};

/// Monotone, thread-safe count of oracle queries.
#[derive(Debug, Default)]
pub struct QueryCounter(AtomicU64);

impl QueryCounter {
    pub fn charge(&self, queries: u64) {
        self.0.fetch_add(queries, Ordering::SeqCst);
    }

    pub fn read(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub fn reset_and_read(&self) -> u64 {
        self.0.swap(0, Ordering::SeqCst)
    }
}

/// Declared energy range `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBounds {
    pub min: f64,
    pub max: f64,
}

impl EnergyBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(Error::config(format!("invalid energy bounds [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Sampling box around a center: grid point `k` sits at
/// `center + h (k - N/2) / N` on every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDomain {
    pub center: Vec<f64>,
    pub h: f64,
}

impl PerturbationDomain {
    pub fn new(center: Vec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config(format!("sampling width must be positive, got {h}")));
        }
        if center.is_empty() {
            return Err(Error::config("domain dimension must be at least 1"));
        }
        Ok(Self { center, h })
    }

    pub fn origin(dim: usize, h: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], h)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn point(&self, k: &[usize], points: usize) -> Vec<f64> {
        let n = points as f64;
        k.iter()
            .zip(&self.center)
            .map(|(&ki, c)| c + self.h * (ki as f64 - n / 2.0) / n)
            .collect()
    }

    /// Corners of the half-open sampling box `[center - h/2, center + h/2)`.
    pub fn corners(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.h / 2.0).collect(),
            self.center.iter().map(|c| c + self.h / 2.0).collect(),
        )
    }
}

/// A model surface behind a counted black-box interface.
///
/// Clones share the query counter.
#[derive(Debug, Clone)]
pub struct EnergyOracle {
    surface: Arc<dyn EnergySurface>,
    shift: Vec<f64>,
    region: Vec<(f64, f64)>,
    bounds: Option<EnergyBounds>,
    derivative_bounds: Vec<f64>,
    counter: Arc<QueryCounter>,
}

impl EnergyOracle {
    /// Wraps a surface with its default region and analytic derivative bounds.
    pub fn new(surface: Box<dyn EnergySurface>) -> Self {
        let region = surface.default_region();
        let derivative_bounds = (1..=MAX_DERIVATIVE_ORDER)
            .map(|r| surface.derivative_bound(r, &region))
            .collect();
        Self {
            shift: vec![0.0; surface.dim()],
            surface: Arc::from(surface),
            region,
            bounds: None,
            derivative_bounds,
            counter: Arc::new(QueryCounter::default()),
        }
    }

    /// `make_model(name, params)`.
    pub fn from_model(name: &str, params: &Value) -> Result<Self> {
        Ok(Self::new(make_surface(name, params)?))
    }

    /// Replaces the validity region and recomputes default derivative bounds.
    pub fn with_region(mut self, region: Vec<(f64, f64)>) -> Result<Self> {
        if region.len() != self.dim() || region.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::config("region must give lo < hi for every axis"));
        }
        self.derivative_bounds = (1..=MAX_DERIVATIVE_ORDER)
            .map(|r| self.surface.derivative_bound(r, &region))
            .collect();
        self.region = region;
        Ok(self)
    }

    pub fn with_bounds(mut self, bounds: EnergyBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Declared magnitude bounds for derivative orders `1..=bounds.len()`.
    pub fn with_derivative_bounds(mut self, bounds: Vec<f64>) -> Result<Self> {
        if bounds.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::config("derivative bounds must be finite and non-negative"));
        }
        self.derivative_bounds = bounds;
        Ok(self)
    }

    pub fn surface(&self) -> &dyn EnergySurface {
        self.surface.as_ref()
    }

    pub fn name(&self) -> &'static str {
        self.surface.name()
    }

    pub fn dim(&self) -> usize {
        self.surface.dim()
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// Validity region in this oracle's own (shifted) coordinates.
    pub fn region(&self) -> Vec<(f64, f64)> {
        self.region
            .iter()
            .zip(&self.shift)
            .map(|(&(lo, hi), s)| (lo - s, hi - s))
            .collect()
    }

    pub fn bounds(&self) -> Option<EnergyBounds> {
        self.bounds
    }

    pub fn derivative_bounds(&self) -> &[f64] {
        &self.derivative_bounds
    }

    pub fn derivative_bound(&self, order: usize) -> Result<f64> {
        order
            .checked_sub(1)
            .and_then(|i| self.derivative_bounds.get(i))
            .copied()
            .ok_or_else(|| Error::config(format!("no derivative bound declared for order {order}")))
    }

    fn to_surface(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.dim() {
            return Err(Error::config(format!(
                "point has dimension {}, oracle has {}",
                mu.len(),
                self.dim()
            )));
        }
        let x: Vec<f64> = mu.iter().zip(&self.shift).map(|(m, s)| m + s).collect();
        for (xi, &(lo, hi)) in x.iter().zip(&self.region) {
            if !(xi.is_finite() && *xi >= lo && *xi <= hi) {
                return Err(Error::domain(format!(
                    "{} evaluated at {x:?}, outside its validity region {:?}",
                    self.name(),
                    self.region
                )));
            }
        }
        Ok(x)
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        self.to_surface(mu).is_ok()
    }

    /// One classical query.
    pub fn eval(&self, mu: &[f64]) -> Result<f64> {
        let e = self.peek(mu)?;
        self.counter.charge(1);
        Ok(e)
    }

    /// Energy without charging a query. Used for diagnostics that do not
    /// feed any algorithmic decision, and inside coherent applications.
    pub fn peek(&self, mu: &[f64]) -> Result<f64> {
        let x = self.to_surface(mu)?;
        let e = self.surface.energy(&x);
        if let Some(b) = self.bounds {
            let slack = 1e-12 * (1.0 + b.min.abs().max(b.max.abs()));
            if e < b.min - slack || e > b.max + slack {
                return Err(Error::domain(format!(
                    "energy {e} at {mu:?} outside declared bounds [{}, {}]",
                    b.min, b.max
                )));
            }
        }
        Ok(e)
    }

    /// Charges one query and returns a handle evaluating the whole
    /// superposition without further charges.
    pub fn coherent_query(&self) -> CoherentQuery<'_> {
        self.counter.charge(1);
        CoherentQuery { oracle: self }
    }

    /// Exact derivative tensor (ground truth, never charged).
    pub fn analytic_derivative(&self, order: usize, mu: &[f64]) -> Result<Tensor> {
        let x = self.to_surface(mu)?;
        Ok(self.surface.derivative(order, &x))
    }

    /// Exact range over a box when the model states one.
    pub fn exact_range(&self, lo: &[f64], hi: &[f64]) -> Option<(f64, f64)> {
        let lo: Vec<f64> = lo.iter().zip(&self.shift).map(|(a, s)| a + s).collect();
        let hi: Vec<f64> = hi.iter().zip(&self.shift).map(|(a, s)| a + s).collect();
        self.surface.exact_range(&lo, &hi)
    }

    /// Oracle whose point `mu` probes this one at `mu + nu`, so that a grid
    /// centered on zero samples around `nu`. Shares the counter.
    pub fn shifted(&self, nu: &[f64]) -> Result<Self> {
        if nu.len() != self.dim() {
            return Err(Error::config("shift has the wrong dimension"));
        }
        self.to_surface(nu)?;
        let mut out = self.clone();
        for (s, n) in out.shift.iter_mut().zip(nu) {
            *s += n;
        }
        Ok(out)
    }

    /// Same oracle with its own counter starting at zero.
    pub fn with_fresh_counter(&self) -> Self {
        let mut out = self.clone();
        out.counter = Arc::new(QueryCounter::default());
        out
    }

    pub fn counter(&self) -> &Arc<QueryCounter> {
        &self.counter
    }

    pub fn calls(&self) -> u64 {
        self.counter.read()
    }

    pub fn reset_and_read_counter(&self) -> u64 {
        self.counter.reset_and_read()
    }

    pub(crate) fn charge(&self, queries: u64) {
        self.counter.charge(queries);
    }
}

/// One paid-for coherent application of an oracle.
pub struct CoherentQuery<'a> {
    oracle: &'a EnergyOracle,
}

impl CoherentQuery<'_> {
    pub fn eval(&self, mu: &[f64]) -> Result<f64> {
        self.oracle.peek(mu)
    }
}

/// Rounds energies to `2^n_E` levels over a bounded range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyQuantizer {
    bounds: EnergyBounds,
    bits: u32,
    step: f64,
}

impl EnergyQuantizer {
    pub fn new(bounds: EnergyBounds, bits: u32) -> Result<Self> {
        if bits == 0 {
            return Err(Error::config("energy bits must be at least 1"));
        }
        let width = bounds.width();
        let step = if width == 0.0 {
            0.0
        } else {
            let step = width * 2f64.powi(-(bits.min(i32::MAX as u32) as i32));
            let resolution = bounds.min.abs().max(bounds.max.abs()) * f64::EPSILON;
            if step == 0.0 || !step.is_normal() || step <= resolution {
                return Err(Error::numeric(format!(
                    "{bits} energy bits over a width of {width} underflow the float grid"
                )));
            }
            step
        };
        Ok(Self { bounds, bits, step })
    }

    pub fn bounds(&self) -> EnergyBounds {
        self.bounds
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Level spacing `(E_max - E_min) / 2^n_E`; zero for a degenerate range.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn quantize(&self, e: f64) -> Result<f64> {
        let b = self.bounds;
        let slack = 1e-12 * (1.0 + b.min.abs().max(b.max.abs()));
        if !e.is_finite() || e < b.min - slack || e > b.max + slack {
            return Err(Error::domain(format!(
                "energy {e} outside quantizer range [{}, {}]",
                b.min, b.max
            )));
        }
        if self.step == 0.0 {
            return Ok(e);
        }
        Ok(b.min + ((e - b.min) / self.step).round() * self.step)
    }
}

/// Oracle that reports energies on an `n_E`-bit grid.
#[derive(Debug, Clone)]
pub struct QuantizedOracle {
    inner: EnergyOracle,
    quantizer: EnergyQuantizer,
}

impl QuantizedOracle {
    /// Uses the inner oracle's declared bounds.
    pub fn new(inner: EnergyOracle, energy_bits: u32) -> Result<Self> {
        let bounds = inner
            .bounds()
            .ok_or_else(|| Error::config("quantization needs declared energy bounds"))?;
        Self::with_bounds(inner, energy_bits, bounds)
    }

    pub fn with_bounds(inner: EnergyOracle, energy_bits: u32, bounds: EnergyBounds) -> Result<Self> {
        Ok(Self {
            inner,
            quantizer: EnergyQuantizer::new(bounds, energy_bits)?,
        })
    }

    pub fn inner(&self) -> &EnergyOracle {
        &self.inner
    }

    pub fn quantizer(&self) -> &EnergyQuantizer {
        &self.quantizer
    }

    pub fn eval(&self, mu: &[f64]) -> Result<f64> {
        self.quantizer.quantize(self.inner.eval(mu)?)
    }
}

/// JSON description of an oracle: `{name, params, bounds, derivative_bounds, region}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub name: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    #[serde(default)]
    pub derivative_bounds: Option<Vec<f64>>,
    #[serde(default)]
    pub region: Option<Vec<[f64; 2]>>,
}

impl OracleSpec {
    pub fn build(&self) -> Result<EnergyOracle> {
        let mut oracle = EnergyOracle::from_model(&self.name, &self.params)?;
        if let Some(region) = &self.region {
            oracle = oracle.with_region(region.iter().map(|r| (r[0], r[1])).collect())?;
        }
        if let Some([lo, hi]) = self.bounds {
            oracle = oracle.with_bounds(EnergyBounds::new(lo, hi)?);
        }
        if let Some(db) = &self.derivative_bounds {
            oracle = oracle.with_derivative_bounds(db.clone())?;
        }
        Ok(oracle)
    }
}
