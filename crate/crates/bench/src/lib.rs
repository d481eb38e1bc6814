//! Fixtures shared by the simulator benchmarks.

use qprop::{EnergyOracle, PerturbationDomain, PrecisionPlan, Result};
use serde_json::json;

/// Isotropic quadratic bowl in `d` dimensions with a small declared bound.
pub fn bowl(d: usize) -> Result<EnergyOracle> {
    let matrix: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 0.5 } else { 0.0 }).collect())
        .collect();
    EnergyOracle::from_model("quadratic_form", &json!({ "matrix": matrix }))
}

pub fn morse() -> Result<EnergyOracle> {
    EnergyOracle::from_model("morse_1d", &json!({}))
}

/// Plan and origin-centered domain for a gradient run with `n` bits.
pub fn gradient_setup(oracle: &EnergyOracle, n: u32) -> Result<(PrecisionPlan, PerturbationDomain)> {
    let h = 1.0 / (1u64 << n) as f64;
    let plan = qprop::plan(n, std::f64::consts::PI / 8.0, oracle, h)?;
    let domain = PerturbationDomain::new(vec![0.0; oracle.dim()], h)?;
    Ok((plan, domain))
}
