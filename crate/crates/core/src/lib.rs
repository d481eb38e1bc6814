//! Exactly simulated quantum gradient estimation over model energy surfaces.
//!
//! A perturbation grid is held in `d` registers of `n` qubits each. One
//! coherent query writes the scaled, quantized energy into the phase of
//! every grid point, and an inverse Fourier transform per register reads the
//! gradient out. Nesting that procedure gives higher derivatives at
//! `2^(r-1)` queries for order `r`, which feed Newton and Householder
//! optimizers and a multistart basin hopper whose final pick uses simulated
//! Dürr–Høyer minimum finding.

pub mod basinhopper;
pub mod derivatives;
pub mod error;
pub mod gradient;
pub mod optimize;
pub mod oracles;
pub mod qstate;
pub mod report;
pub mod tensor;

pub use basinhopper::{
    basin_hop, classical_min_scan, durr_hoyer_min, multistart, scaling_trials, BasinDatabase,
    BasinHopReport, DurrHoyerParams, ScalingReport, SearchStats,
};
pub use derivatives::{
    derivative_query_cost, estimate_derivative, estimate_hessian, gradient_blackbox,
    uncomputation_ablation, BoxMode, DerivativePlan, DerivativeTensor, Uncomputation,
};
pub use error::{Error, Result};
pub use gradient::{estimate_gradient, estimate_gradient_with, plan, GradientEstimate, PrecisionPlan};
pub use optimize::{
    finite_difference, householder_step_1d, minimize, newton_step, DerivativeSource, Method,
    OptimizationTrace, OptimizerConfig,
};
pub use oracles::{EnergyBounds, EnergyOracle, OracleSpec, PerturbationDomain};
pub use qstate::{OutcomeDistribution, RegisterArray, RegisterLayout};
pub use report::{table1_report, Table1};
pub use tensor::Tensor;
