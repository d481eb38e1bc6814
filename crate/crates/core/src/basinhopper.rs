//! Global optimization by multistart local searches, with the lowest local
//! minimum picked out by simulated Dürr–Høyer minimum finding.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{minimize, OptimizerConfig};
use crate::oracles::EnergyOracle;

/// Serializes non-finite energies as `null`.
mod energy_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinEntry {
    pub start: Vec<f64>,
    pub minimum: Vec<f64>,
    /// `+inf` when the local search failed.
    #[serde(with = "energy_or_null")]
    pub energy: f64,
    pub converged: bool,
    pub queries: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinDatabase {
    pub entries: Vec<BasinEntry>,
}

impl BasinDatabase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.energy).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.entries.first().map_or(0, |e| e.start.len());
        let mut header = vec!["index".to_string()];
        header.extend((0..d).map(|i| format!("start{i}")));
        header.extend((0..d).map(|i| format!("min{i}")));
        header.extend(["energy", "converged", "queries"].map(String::from));
        w.write_record(&header)?;
        for (i, e) in self.entries.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(e.start.iter().chain(&e.minimum).map(|x| x.to_string()));
            row.push(e.energy.to_string());
            row.push(e.converged.to_string());
            row.push(e.queries.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` uniform starts over the oracle's region, each minimized locally.
pub fn multistart(oracle: &EnergyOracle, count: usize, seed: u64, config: &OptimizerConfig) -> Result<BasinDatabase> {
    if count == 0 {
        return Err(Error::config("need at least one start"));
    }
    config.validate()?;
    let region = oracle.region();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..count)
        .map(|_| region.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
        .collect();
    let entries = starts
        .into_par_iter()
        .map(|start| {
            // Separate counters keep per-entry costs exact under parallelism.
            let local = oracle.with_fresh_counter();
            let entry = match minimize(&local, &start, config) {
                Ok(trace) => BasinEntry {
                    minimum: trace.final_point().to_vec(),
                    energy: if trace.converged { trace.final_energy() } else { f64::INFINITY },
                    converged: trace.converged,
                    queries: trace.total_queries,
                    failure: (!trace.converged).then(|| "iteration limit reached".to_string()),
                    start,
                },
                Err(e) => BasinEntry {
                    minimum: start.clone(),
                    energy: f64::INFINITY,
                    converged: false,
                    queries: local.calls(),
                    failure: Some(e.to_string()),
                    start,
                },
            };
            oracle.counter().charge(entry.queries);
            Ok(entry)
        })
        .collect::<Result<_>>()?;
    Ok(BasinDatabase { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DurrHoyerParams {
    /// Budget `c1 sqrt(K) + c2 log2(K)^2`.
    pub c1: f64,
    pub c2: f64,
    /// A threshold search that spends `cutoff sqrt(K)` Grover iterations
    /// without a hit ends the descent.
    pub cutoff: f64,
    /// Growth factor of the random iteration range.
    pub lambda: f64,
}

impl Default for DurrHoyerParams {
    fn default() -> Self {
        Self {
            c1: 22.5,
            c2: 1.4,
            cutoff: 9.0,
            lambda: 6.0 / 5.0,
        }
    }
}

impl DurrHoyerParams {
    pub fn budget(&self, k: usize) -> f64 {
        let l = (k as f64).log2();
        self.c1 * (k as f64).sqrt() + self.c2 * l * l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub database_queries: u64,
    pub found_index: usize,
    #[serde(with = "energy_or_null")]
    pub found_value: f64,
    pub success: bool,
    pub grover_iterations: u64,
    pub measurements: u64,
}

/// Real amplitudes over `M = next_power_of_two(K)` slots, uniform over the
/// first `K`.
struct GroverState {
    k: usize,
    amps: Vec<f64>,
}

impl GroverState {
    fn new(k: usize) -> Self {
        let m = k.next_power_of_two();
        let a = 1.0 / (k as f64).sqrt();
        let mut amps = vec![0.0; m];
        amps[..k].fill(a);
        Self { k, amps }
    }

    /// Oracle sign flip on marked entries, then reflection about the
    /// uniform state over valid entries.
    fn iterate(&mut self, marked: &[bool]) {
        for (a, &m) in self.amps.iter_mut().zip(marked) {
            if m {
                *a = -*a;
            }
        }
        let s = 1.0 / (self.k as f64).sqrt();
        let overlap: f64 = self.amps[..self.k].iter().sum::<f64>() * s;
        for a in &mut self.amps[..self.k] {
            *a = 2.0 * overlap * s - *a;
        }
        for a in &mut self.amps[self.k..] {
            *a = -*a;
        }
    }

    fn measure<R: Rng>(&self, rng: &mut R) -> usize {
        let total: f64 = self.amps.iter().map(|a| a * a).sum();
        let mut u = rng.random::<f64>() * total;
        for (i, a) in self.amps.iter().enumerate() {
            u -= a * a;
            if u < 0.0 {
                return i;
            }
        }
        self.k - 1
    }
}

/// Dürr–Høyer threshold descent. Each Grover iteration is one database
/// query, and so is each lookup of a measured index.
pub fn durr_hoyer_min(values: &[f64], seed: u64, params: &DurrHoyerParams) -> Result<SearchStats> {
    let k = values.len();
    if k == 0 {
        return Err(Error::config("empty database"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = params.budget(k);
    let sqrt_k = (k as f64).sqrt();
    let mut best = rng.random_range(0..k);
    let mut threshold = values[best];
    let mut measurements = 1u64;
    let mut grover = 0u64;
    let spent = |g: u64, m: u64| (g + m) as f64;

    'descent: while spent(grover, measurements) < budget {
        let marked: Vec<bool> = (0..k.next_power_of_two())
            .map(|i| i < k && values[i] < threshold)
            .collect();
        let mut m = 1.0f64;
        let mut in_search = 0u64;
        loop {
            let j = rng.random_range(0..m.ceil() as u64);
            if spent(grover + j + 1, measurements) > budget {
                break 'descent;
            }
            let mut state = GroverState::new(k);
            for _ in 0..j {
                state.iterate(&marked);
            }
            grover += j;
            in_search += j;
            let i = state.measure(&mut rng);
            measurements += 1;
            if values[i] < threshold {
                best = i;
                threshold = values[i];
                continue 'descent;
            }
            if in_search as f64 >= params.cutoff * sqrt_k {
                break 'descent;
            }
            m = (params.lambda * m).min(sqrt_k);
        }
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SearchStats {
        database_queries: grover + measurements,
        found_index: best,
        found_value: threshold,
        success: threshold == min,
        grover_iterations: grover,
        measurements,
    })
}

/// Linear scan: exactly `K` queries, lowest index on ties.
pub fn classical_min_scan(values: &[f64]) -> Result<SearchStats> {
    if values.is_empty() {
        return Err(Error::config("empty database"));
    }
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    Ok(SearchStats {
        database_queries: values.len() as u64,
        found_index: best,
        found_value: values[best],
        success: true,
        grover_iterations: 0,
        measurements: values.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub k: usize,
    pub trial: usize,
    pub queries: u64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub k: usize,
    pub trials: usize,
    pub mean_queries: f64,
    pub success_fraction: f64,
    pub budget: f64,
    pub classical_scan_queries: u64,
    /// `K log2 K`, the sort-based classical figure.
    pub classical_k_log_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub summaries: Vec<SizeSummary>,
    /// Least-squares slope of `ln(mean queries)` against `ln K`.
    pub exponent: f64,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
}

impl ScalingReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dürr–Høyer on fresh uniform random databases, `trials` per size.
pub fn scaling_trials(sizes: &[usize], trials: usize, seed: u64, params: &DurrHoyerParams) -> Result<ScalingReport> {
    if trials == 0 || sizes.iter().any(|&k| k == 0) {
        return Err(Error::config("need positive sizes and trial counts"));
    }
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&k| (0..trials).map(move |t| (k, t)))
        .collect();
    let rows = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(k, trial))| {
            let mut rng = stream_rng(seed, job as u64);
            let values: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let stats = durr_hoyer_min(&values, rng.random(), params)?;
            Ok(TrialRow {
                k,
                trial,
                queries: stats.database_queries,
                success: stats.success,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<SizeSummary> = sizes
        .iter()
        .map(|&k| {
            let mine: Vec<&TrialRow> = rows.iter().filter(|r| r.k == k).collect();
            let n = mine.len() as f64;
            SizeSummary {
                k,
                trials: mine.len(),
                mean_queries: mine.iter().map(|r| r.queries as f64).sum::<f64>() / n,
                success_fraction: mine.iter().filter(|r| r.success).count() as f64 / n,
                budget: params.budget(k),
                classical_scan_queries: k as u64,
                classical_k_log_k: k as f64 * (k as f64).log2(),
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = summaries
        .iter()
        .map(|s| ((s.k as f64).ln(), s.mean_queries.ln()))
        .collect();
    Ok(ScalingReport {
        exponent: loglog_slope(&points),
        summaries,
        rows,
    })
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinHopReport {
    pub database: BasinDatabase,
    pub quantum: SearchStats,
    pub classical: SearchStats,
    pub global_minimum: Vec<f64>,
    #[serde(with = "energy_or_null")]
    pub global_energy: f64,
    /// Whether the quantum pick agrees with the scan up to `match_tolerance`.
    pub matches_scan: bool,
    pub local_queries: u64,
}

/// Multistart followed by quantum minimum selection over the local minima.
pub fn basin_hop(
    oracle: &EnergyOracle,
    count: usize,
    seed: u64,
    local: &OptimizerConfig,
    params: &DurrHoyerParams,
    match_tolerance: f64,
) -> Result<BasinHopReport> {
    let database = multistart(oracle, count, seed, local)?;
    let energies = database.energies();
    let quantum = durr_hoyer_min(&energies, seed.wrapping_add(1), params)?;
    let classical = classical_min_scan(&energies)?;
    let entry = &database.entries[quantum.found_index];
    Ok(BasinHopReport {
        global_minimum: entry.minimum.clone(),
        global_energy: entry.energy,
        matches_scan: (quantum.found_value - classical.found_value).abs() <= match_tolerance,
        local_queries: database.entries.iter().map(|e| e.queries).sum(),
        quantum,
        classical,
        database,
    })
}
