//! Dense statevector over `d` registers of `n` qubits each.
//!
//! A basis state is an integer vector `k = (k_1, ..., k_d)` with every
//! `k_i < N = 2^n`. The flat amplitude index is `sum_i k_i * N^(d-i)`, i.e.
//! `k_1` is the most significant block. Every routine in the crate that reads
//! or writes amplitudes relies on this ordering.
//!
//! Fourier convention: the inverse transform maps
//! `(1/sqrt N) sum_k exp(2 pi i k y / N) |k>` to `|y>`, and [`RegisterArray::qft_all`]
//! is its exact inverse.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default cap on the number of amplitudes held by one state.
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 26;

/// Shape of a register array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterLayout {
    registers: usize,
    qubits: u32,
    cap: usize,
}

impl RegisterLayout {
    /// `registers` registers of `qubits` qubits, with the default dimension cap.
    pub fn new(registers: usize, qubits: u32) -> Result<Self> {
        Self::with_cap(registers, qubits, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(registers: usize, qubits: u32, cap: usize) -> Result<Self> {
        if registers == 0 {
            return Err(Error::config("at least one register is required"));
        }
        if qubits == 0 || qubits > 62 {
            return Err(Error::config(format!(
                "qubits per register must be in 1..=62, got {qubits}"
            )));
        }
        Ok(Self {
            registers,
            qubits,
            cap,
        })
    }

    pub fn registers(&self) -> usize {
        self.registers
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    /// Points per axis, `2^n`.
    pub fn points(&self) -> usize {
        1usize << self.qubits
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// `N^d` computed without overflow.
    pub fn requested_dimension(&self) -> u128 {
        let mut dim: u128 = 1;
        for _ in 0..self.registers {
            dim = dim.saturating_mul(1u128 << self.qubits);
        }
        dim
    }

    pub fn check_capacity(&self) -> Result<usize> {
        let requested = self.requested_dimension();
        if requested > self.cap as u128 {
            return Err(Error::Capacity {
                requested,
                cap: self.cap,
            });
        }
        Ok(requested as usize)
    }

    /// Total number of amplitudes. Only meaningful once capacity is checked.
    pub fn dimension(&self) -> usize {
        self.points().pow(self.registers as u32)
    }

    pub fn flat_index(&self, k: &[usize]) -> usize {
        debug_assert_eq!(k.len(), self.registers);
        let n = self.points();
        k.iter().fold(0, |acc, &ki| acc * n + ki)
    }

    pub fn digits(&self, mut flat: usize) -> Vec<usize> {
        let n = self.points();
        let mut k = vec![0; self.registers];
        for slot in k.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
        k
    }
}

/// Steps `k` to the next basis vector in flat-index order.
pub(crate) fn increment_digits(k: &mut [usize], base: usize) {
    for slot in k.iter_mut().rev() {
        *slot += 1;
        if *slot < base {
            return;
        }
        *slot = 0;
    }
}

/// Amplitudes of a register array.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterArray {
    layout: RegisterLayout,
    amplitudes: Vec<Complex64>,
}

impl RegisterArray {
    /// Equal superposition, every amplitude `N^(-d/2)`.
    pub fn uniform_superposition(layout: RegisterLayout) -> Result<Self> {
        let dim = layout.check_capacity()?;
        let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(Self {
            layout,
            amplitudes: vec![amp; dim],
        })
    }

    pub fn basis_state(layout: RegisterLayout, k: &[usize]) -> Result<Self> {
        let dim = layout.check_capacity()?;
        if k.len() != layout.registers() || k.iter().any(|&ki| ki >= layout.points()) {
            return Err(Error::config(format!("basis vector {k:?} outside layout")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[layout.flat_index(k)] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amplitudes })
    }

    pub fn from_amplitudes(layout: RegisterLayout, amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = layout.check_capacity()?;
        if amplitudes.len() != dim {
            return Err(Error::config(format!(
                "expected {dim} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, k: &[usize]) -> Complex64 {
        self.amplitudes[self.layout.flat_index(k)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Multiplies the amplitude at `k` by `exp(2 pi i phase(k))`; phases are in turns.
    pub fn apply_diagonal_phase<F>(&mut self, phase: F) -> Result<()>
    where
        F: Fn(&[usize]) -> f64,
    {
        self.try_apply_diagonal_phase(|k| Ok(phase(k)))
    }

    /// Like [`apply_diagonal_phase`](Self::apply_diagonal_phase) for phase
    /// functions that can fail; the first error aborts and is returned.
    pub fn try_apply_diagonal_phase<F>(&mut self, mut phase: F) -> Result<()>
    where
        F: FnMut(&[usize]) -> Result<f64>,
    {
        let base = self.layout.points();
        let mut k = vec![0; self.layout.registers()];
        for amp in self.amplitudes.iter_mut() {
            let turns = phase(&k)?;
            if !turns.is_finite() {
                return Err(Error::numeric(format!("non-finite phase at {k:?}")));
            }
            *amp *= turn_phasor(turns);
            increment_digits(&mut k, base);
        }
        Ok(())
    }

    /// Inverse quantum Fourier transform applied to every register.
    pub fn inverse_qft_all(&mut self) {
        self.transform_all(FftDirection::Forward);
    }

    /// Forward quantum Fourier transform applied to every register.
    pub fn qft_all(&mut self) {
        self.transform_all(FftDirection::Inverse);
    }

    fn transform_all(&mut self, direction: FftDirection) {
        for register in 0..self.layout.registers() {
            transform_axis(
                &mut self.amplitudes,
                self.layout.points(),
                self.layout.registers(),
                register,
                direction,
            );
        }
    }

    pub fn outcome_distribution(&self) -> OutcomeDistribution {
        OutcomeDistribution {
            layout: self.layout,
            probabilities: self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
        }
    }

    /// Writes `index,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,re,im")?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            writeln!(out, "{i},{:e},{:e}", a.re, a.im)?;
        }
        Ok(())
    }
}

pub(crate) fn turn_phasor(turns: f64) -> Complex64 {
    let frac = turns - turns.floor();
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * frac)
}

fn plan_fft(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft(len, direction)
}

/// Unitary DFT along one axis of a `registers`-axis array with `points` per
/// axis. Axis 0 is the most significant.
pub(crate) fn transform_axis(
    amplitudes: &mut [Complex64],
    points: usize,
    registers: usize,
    axis: usize,
    direction: FftDirection,
) {
    let inner = points.pow((registers - 1 - axis) as u32);
    transform_strided(amplitudes, points, inner, direction);
}

/// Unitary DFT over blocks laid out as `[outer][points][inner]`.
pub(crate) fn transform_strided(
    amplitudes: &mut [Complex64],
    points: usize,
    inner: usize,
    direction: FftDirection,
) {
    let fft = plan_fft(points, direction);
    let scale = 1.0 / (points as f64).sqrt();
    let block = points * inner;
    let mut line = vec![Complex64::new(0.0, 0.0); points];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for chunk in amplitudes.chunks_mut(block) {
        for offset in 0..inner {
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = chunk[j * inner + offset];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, value) in line.iter().enumerate() {
                chunk[j * inner + offset] = value * scale;
            }
        }
    }
}

/// Measurement statistics of a register array in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    layout: RegisterLayout,
    probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, y: &[usize]) -> f64 {
        self.probabilities[self.layout.flat_index(y)]
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Outcomes with their probabilities, in flat-index order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.layout.digits(i), p))
    }

    /// Most likely outcome; ties resolve to the lowest flat index.
    pub fn argmax(&self) -> Vec<usize> {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        self.layout.digits(best)
    }

    /// Marginal distribution of one register.
    pub fn marginal(&self, register: usize) -> Vec<f64> {
        let points = self.layout.points();
        let inner = points.pow((self.layout.registers() - 1 - register) as u32);
        let mut out = vec![0.0; points];
        for (i, &p) in self.probabilities.iter().enumerate() {
            out[(i / inner) % points] += p;
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let total = self.total();
        let mut target = rng.random::<f64>() * total;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if target < p {
                return self.layout.digits(i);
            }
            target -= p;
        }
        // Rounding left a sliver past the last bin.
        let last = self
            .probabilities
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probabilities.len() - 1);
        self.layout.digits(last)
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vec<usize>> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}
