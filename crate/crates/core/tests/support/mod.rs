#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use qprop::optimize::{quantum_derivative_plan, QuantumSettings};
use qprop::{estimate_hessian, EnergyOracle, PerturbationDomain, RegisterArray, RegisterLayout};
use serde_json::{json, Value};

pub const TOL: f64 = 1e-10;

/// Every model with parameters that exercise all of its terms.
pub fn model_zoo() -> Vec<(&'static str, Value)> {
    vec![
        ("constant", json!({"dim": 2, "value": 0.3})),
        ("linear", json!({"gradient": [0.1, -0.4, 0.25], "offset": 1.0})),
        (
            "quadratic_form",
            json!({"matrix": [[2.0, 0.5, 0.0], [0.5, 1.0, -0.25], [0.0, -0.25, 1.5]], "minimum": [0.1, -0.2, 0.3]}),
        ),
        (
            "dipole_field",
            json!({"dipole": [0.3, -0.1], "polarizability": [[1.2, 0.2], [0.2, 0.8]]}),
        ),
        ("morse_1d", json!({"depth": 1.5, "a": 1.2, "r_e": 1.1})),
        ("lennard_jones_pair", json!({})),
        ("mueller_brown_2d", json!({})),
        ("polynomial_1d", json!({"coefficients": [0.5, -1.0, 0.25, 1.0 / 6.0, -0.05]})),
    ]
}

pub fn oracle(name: &str, params: &Value) -> EnergyOracle {
    EnergyOracle::from_model(name, params).expect("model builds")
}

/// Random normalized state on `registers` registers of `qubits` qubits.
pub fn random_state(registers: usize, qubits: u32) -> impl Strategy<Value = RegisterArray> {
    let len = 1usize << (qubits as usize * registers);
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_filter("non-zero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(move |v| {
            let norm = v.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
            let amps = v.into_iter().map(|(a, b)| Complex64::new(a / norm, b / norm)).collect();
            let layout = RegisterLayout::new(registers, qubits).unwrap();
            RegisterArray::from_amplitudes(layout, amps).unwrap()
        })
}

pub fn small_state() -> impl Strategy<Value = RegisterArray> {
    (1usize..=3, 1u32..=3).prop_flat_map(|(r, q)| random_state(r, q))
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn check_qft_roundtrip(state: &RegisterArray) -> Result<(), TestCaseError> {
    let mut s = state.clone();
    s.qft_all();
    s.inverse_qft_all();
    let err = max_diff(s.amplitudes(), state.amplitudes());
    prop_assert!(err < TOL, "inverse after forward off by {err}");
    let mut s = state.clone();
    s.inverse_qft_all();
    s.qft_all();
    let err = max_diff(s.amplitudes(), state.amplitudes());
    prop_assert!(err < TOL, "forward after inverse off by {err}");
    Ok(())
}

pub fn check_norm(state: &RegisterArray, turns: f64) -> Result<(), TestCaseError> {
    let before = state.norm_sqr();
    let mut s = state.clone();
    s.apply_diagonal_phase(|k| turns * k.iter().sum::<usize>() as f64 * (k.len() as f64 + 0.5))
        .unwrap();
    prop_assert!((s.norm_sqr() - before).abs() < TOL);
    s.inverse_qft_all();
    prop_assert!((s.norm_sqr() - before).abs() < TOL);
    s.qft_all();
    prop_assert!((s.norm_sqr() - before).abs() < TOL);
    prop_assert!((s.outcome_distribution().total() - before).abs() < TOL);
    Ok(())
}

/// Linear phase with integer coefficients reads out deterministically.
pub fn check_linear_phase(qubits: u32, coeffs: &[usize]) -> Result<(), TestCaseError> {
    let layout = RegisterLayout::new(coeffs.len(), qubits).unwrap();
    let n = layout.points() as f64;
    let mut s = RegisterArray::uniform_superposition(layout).unwrap();
    s.apply_diagonal_phase(|k| k.iter().zip(coeffs).map(|(&ki, &c)| (c * ki) as f64 / n).sum())
        .unwrap();
    s.inverse_qft_all();
    let p = s.outcome_distribution().probability(coeffs);
    prop_assert!((p - 1.0).abs() < TOL, "p = {p}");
    Ok(())
}

/// Models with `d >= 2` used for the Hessian symmetry check.
pub fn multi_dim_models() -> Vec<(&'static str, Value)> {
    model_zoo()
        .into_iter()
        .filter(|(name, params)| oracle(name, params).dim() >= 2)
        .collect()
}

/// Point inside the oracle's region, `t` in the unit cube, kept `margin`
/// away from the edges.
pub fn point_in(oracle: &EnergyOracle, t: &[f64], margin: f64) -> Vec<f64> {
    oracle
        .region()
        .iter()
        .zip(t.iter().cycle())
        .map(|(&(lo, hi), &ti)| lo + margin + ti * (hi - lo - 2.0 * margin))
        .collect()
}

pub fn check_hessian_symmetry(model: usize, t: &[f64]) -> Result<(), TestCaseError> {
    let (name, params) = &multi_dim_models()[model];
    let o = oracle(name, params);
    let settings = QuantumSettings {
        n: 4,
        ..QuantumSettings::default()
    };
    let plan = quantum_derivative_plan(&o, 2, &settings).unwrap();
    let outer = &plan.levels[1];
    let margin = plan.levels.iter().map(|l| l.h).sum::<f64>();
    let at = point_in(&o, t, margin);
    let dom = PerturbationDomain::new(at, outer.h).unwrap();
    let h = estimate_hessian(&o, &dom, &plan).unwrap();
    let bound = 2.0 * outer.m / outer.points() as f64;
    let d = h.dim;
    for i in 0..d {
        for j in 0..i {
            let gap = (h.get(&[i, j]) - h.get(&[j, i])).abs();
            prop_assert!(gap <= bound, "{name}: H[{i}][{j}] asymmetric by {gap} > {bound}");
        }
    }
    Ok(())
}

/// Fourth-order central differences of the energy.
fn fd_gradient(o: &EnergyOracle, x: &[f64], h: f64) -> Vec<f64> {
    let e = |p: &[f64]| o.peek(p).unwrap();
    (0..x.len())
        .map(|i| {
            let at = |s: f64| {
                let mut p = x.to_vec();
                p[i] += s * h;
                e(&p)
            };
            (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
        })
        .collect()
}

/// Fourth-order central differences: the five-point rule on the diagonal and
/// the sixteen-point rule off it.
fn fd_hessian(o: &EnergyOracle, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let e = |p: &[f64]| o.peek(p).unwrap();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let at = |si: f64, sj: f64| {
                let mut p = x.to_vec();
                p[i] += si * h;
                p[j] += sj * h;
                e(&p)
            };
            out[i * d + j] = if i == j {
                let f = |s: f64| at(s / 2.0, s / 2.0);
                (-f(2.0) + 16.0 * f(1.0) - 30.0 * f(0.0) + 16.0 * f(-1.0) - f(-2.0)) / (12.0 * h * h)
            } else {
                let mut acc = 0.0;
                for (a, b, w) in [
                    (1.0, 1.0, 64.0),
                    (2.0, 2.0, 1.0),
                    (1.0, 2.0, -8.0),
                    (2.0, 1.0, -8.0),
                ] {
                    acc += w * (at(a, b) + at(-a, -b) - at(a, -b) - at(-a, b));
                }
                acc / (144.0 * h * h)
            };
        }
    }
    out
}

/// Agreement relative to the largest entry of the tensor.
fn close(analytic: &[f64], numeric: &[f64], rel: f64) -> Option<(usize, f64, f64)> {
    let scale = analytic.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .enumerate()
        .find(|(_, (a, b))| (*a - *b).abs() > rel * scale)
        .map(|(i, (a, b))| (i, *a, *b))
}

pub fn check_analytic_vs_fd(model: usize, t: &[f64]) -> Result<(), TestCaseError> {
    let (name, params) = &model_zoo()[model];
    let o = oracle(name, params);
    let at = point_in(&o, t, 0.05);
    let g = o.analytic_derivative(1, &at).unwrap();
    if let Some((i, a, b)) = close(&g.data, &fd_gradient(&o, &at, 1e-3), 1e-6) {
        return Err(TestCaseError::fail(format!("{name} at {at:?}: dE/dmu_{i} {a} vs {b}")));
    }
    let h = o.analytic_derivative(2, &at).unwrap();
    if let Some((i, a, b)) = close(&h.data, &fd_hessian(&o, &at, 2e-3), 1e-6) {
        return Err(TestCaseError::fail(format!("{name} at {at:?}: H[{i}] {a} vs {b}")));
    }
    Ok(())
}

pub fn unit_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 3)
}

pub const THETA: f64 = PI / 8.0;
