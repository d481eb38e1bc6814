//! Measured query counts per derivative order next to the classical
//! reference scalings.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::derivatives::estimate_derivative;
use crate::error::{Error, Result};
use crate::optimize::{finite_difference, quantum_derivative_plan, QuantumSettings};
use crate::oracles::{EnergyOracle, PerturbationDomain};

pub const MAX_TABLE_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub order: usize,
    pub quantum_measured: u64,
    /// Forward-difference stencil count; only orders 1 and 2 are implemented.
    pub classical_measured: Option<u64>,
    /// `d^n + 1`.
    pub classical_numerical_formula: u64,
    /// `d^floor(n/2)`.
    pub classical_analytical_scaling: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub d: usize,
    pub oracle: String,
    pub rows: Vec<Table1Row>,
}

impl Table1 {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "order",
            "quantum_measured",
            "classical_measured",
            "classical_numerical_formula",
            "classical_analytical_scaling",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.order.to_string(),
                r.quantum_measured.to_string(),
                r.classical_measured.map_or("formula_only".into(), |q| q.to_string()),
                r.classical_numerical_formula.to_string(),
                r.classical_analytical_scaling.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Identity quadratic bowl in `d` dimensions, the default table oracle.
pub fn default_table_oracle(d: usize) -> Result<EnergyOracle> {
    let matrix: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    EnergyOracle::from_model("quadratic_form", &json!({ "matrix": matrix }))
}

/// Runs every requested order at the origin and reads the oracle counter.
/// Quantum runs use idealized boxes with `n` output bits.
pub fn table1_report(oracle: &EnergyOracle, orders: &[usize], n: u32) -> Result<Table1> {
    let d = oracle.dim();
    if let Some(bad) = orders.iter().find(|&&r| r == 0 || r > MAX_TABLE_ORDER) {
        return Err(Error::config(format!("order {bad} outside 1..={MAX_TABLE_ORDER}")));
    }
    let settings = QuantumSettings { n, ..QuantumSettings::default() };
    let origin = vec![0.0; d];
    let mut rows = Vec::with_capacity(orders.len());
    for &order in orders {
        let plan = quantum_derivative_plan(oracle, order, &settings)?;
        let domain = PerturbationDomain::new(origin.clone(), plan.levels[order - 1].h)?;
        let before = oracle.calls();
        estimate_derivative(oracle, &domain, order, &plan)?;
        let quantum_measured = oracle.calls() - before;
        let classical_measured = if order <= 2 {
            let step = 1e-4;
            Some(finite_difference(oracle, &origin, order, step)?.queries)
        } else {
            None
        };
        rows.push(Table1Row {
            order,
            quantum_measured,
            classical_measured,
            classical_numerical_formula: (d as u64).pow(order as u32) + 1,
            classical_analytical_scaling: (d as u64).pow((order / 2) as u32),
        });
    }
    Ok(Table1 {
        d,
        oracle: oracle.name().to_string(),
        rows,
    })
}
