//! Analytic model energy surfaces with derivatives of every order.

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Highest derivative order for which default bounds are tabulated.
pub const MAX_DERIVATIVE_ORDER: usize = 6;

/// A smooth scalar field with exact derivatives.
pub trait EnergySurface: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn energy(&self, x: &[f64]) -> f64;

    /// Order-`order` derivative tensor at `x`; order 0 is the energy itself.
    fn derivative(&self, order: usize, x: &[f64]) -> Tensor;

    fn default_region(&self) -> Vec<(f64, f64)>;

    /// Bound on the largest magnitude of any order-`order` partial over `region`.
    fn derivative_bound(&self, order: usize, region: &[(f64, f64)]) -> f64;

    /// Exact energy range over a closed box, where cheap to state.
    fn exact_range(&self, _lo: &[f64], _hi: &[f64]) -> Option<(f64, f64)> {
        None
    }
}

/// Builds a surface from its name and JSON parameters.
pub fn make_surface(name: &str, params: &Value) -> Result<Box<dyn EnergySurface>> {
    fn parse<T: for<'de> Deserialize<'de>>(name: &str, params: &Value) -> Result<T> {
        let params = if params.is_null() {
            Value::Object(Default::default())
        } else {
            params.clone()
        };
        serde_json::from_value(params)
            .map_err(|e| Error::config(format!("bad parameters for `{name}`: {e}")))
    }

    let surface: Box<dyn EnergySurface> = match name {
        "constant" => {
            let p: ConstantParams = parse(name, params)?;
            if p.dim == 0 {
                return Err(Error::config("constant: dim must be at least 1"));
            }
            Box::new(Constant {
                dim: p.dim,
                value: p.value,
            })
        }
        "linear" => {
            let p: LinearParams = parse(name, params)?;
            if p.gradient.is_empty() {
                return Err(Error::config("linear: gradient must be non-empty"));
            }
            Box::new(Linear {
                gradient: p.gradient,
                offset: p.offset,
            })
        }
        "quadratic_form" => {
            let p: QuadraticParams = parse(name, params)?;
            Box::new(QuadraticForm::new(p.matrix, p.minimum, p.offset)?)
        }
        "dipole_field" => {
            let p: DipoleParams = parse(name, params)?;
            Box::new(DipoleField::new(p.dipole, p.polarizability, p.offset)?)
        }
        "morse_1d" => {
            let p: MorseParams = parse(name, params)?;
            if !(p.depth > 0.0 && p.a > 0.0) {
                return Err(Error::config("morse_1d: depth and a must be positive"));
            }
            Box::new(Morse {
                depth: p.depth,
                a: p.a,
                r_e: p.r_e,
            })
        }
        "lennard_jones_pair" => {
            let p: LennardJonesParams = parse(name, params)?;
            if !(p.epsilon > 0.0 && p.sigma > 0.0) {
                return Err(Error::config(
                    "lennard_jones_pair: epsilon and sigma must be positive",
                ));
            }
            Box::new(LennardJones {
                epsilon: p.epsilon,
                sigma: p.sigma,
            })
        }
        "mueller_brown_2d" => {
            let p: MuellerBrownParams = parse(name, params)?;
            Box::new(MuellerBrown { scale: p.scale })
        }
        "polynomial_1d" => {
            let p: PolynomialParams = parse(name, params)?;
            if p.coefficients.is_empty() {
                return Err(Error::config("polynomial_1d: coefficients must be non-empty"));
            }
            Box::new(Polynomial1d {
                coefficients: p.coefficients,
            })
        }
        other => return Err(Error::config(format!("unknown model `{other}`"))),
    };
    Ok(surface)
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    #[serde(default = "one")]
    dim: usize,
    #[serde(default)]
    value: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    gradient: Vec<f64>,
    #[serde(default)]
    offset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    matrix: Vec<Vec<f64>>,
    #[serde(default)]
    minimum: Option<Vec<f64>>,
    #[serde(default)]
    offset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DipoleParams {
    dipole: Vec<f64>,
    #[serde(default)]
    polarizability: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    offset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MorseParams {
    #[serde(default = "unit")]
    depth: f64,
    #[serde(default = "unit")]
    a: f64,
    #[serde(default = "unit")]
    r_e: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LennardJonesParams {
    #[serde(default = "unit")]
    epsilon: f64,
    #[serde(default = "unit")]
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MuellerBrownParams {
    #[serde(default = "unit")]
    scale: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolynomialParams {
    coefficients: Vec<f64>,
}

fn check_square_symmetric(name: &str, m: &[Vec<f64>], dim: usize) -> Result<()> {
    if m.len() != dim || m.iter().any(|row| row.len() != dim) {
        return Err(Error::config(format!("{name}: matrix must be {dim}x{dim}")));
    }
    for i in 0..dim {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                return Err(Error::config(format!("{name}: matrix must be symmetric")));
            }
        }
    }
    Ok(())
}

fn unit_box(dim: usize) -> Vec<(f64, f64)> {
    vec![(-1.0, 1.0); dim]
}

fn max_abs_offset(region: &[(f64, f64)], center: &[f64]) -> Vec<f64> {
    region
        .iter()
        .zip(center)
        .map(|(&(lo, hi), &c)| (lo - c).abs().max((hi - c).abs()))
        .collect()
}

/// `E = value`.
#[derive(Debug, Clone)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl EnergySurface for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn derivative(&self, order: usize, _x: &[f64]) -> Tensor {
        if order == 0 {
            return Tensor::scalar(self.value);
        }
        Tensor::zeros(self.dim, order)
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        unit_box(self.dim)
    }
    fn derivative_bound(&self, _order: usize, _region: &[(f64, f64)]) -> f64 {
        0.0
    }
    fn exact_range(&self, _lo: &[f64], _hi: &[f64]) -> Option<(f64, f64)> {
        Some((self.value, self.value))
    }
}

/// `E = offset + g . x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub gradient: Vec<f64>,
    pub offset: f64,
}

impl EnergySurface for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn dim(&self) -> usize {
        self.gradient.len()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.offset + self.gradient.iter().zip(x).map(|(g, x)| g * x).sum::<f64>()
    }
    fn derivative(&self, order: usize, x: &[f64]) -> Tensor {
        match order {
            0 => Tensor::scalar(self.energy(x)),
            1 => Tensor::from_vec(self.dim(), 1, self.gradient.clone()),
            r => Tensor::zeros(self.dim(), r),
        }
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        unit_box(self.dim())
    }
    fn derivative_bound(&self, order: usize, _region: &[(f64, f64)]) -> f64 {
        if order == 1 {
            self.gradient.iter().fold(0.0, |m, g| m.max(g.abs()))
        } else {
            0.0
        }
    }
    fn exact_range(&self, lo: &[f64], hi: &[f64]) -> Option<(f64, f64)> {
        let (mut min, mut max) = (self.offset, self.offset);
        for ((g, l), h) in self.gradient.iter().zip(lo).zip(hi) {
            let (a, b) = (g * l, g * h);
            min += a.min(b);
            max += a.max(b);
        }
        Some((min, max))
    }
}

/// `E = offset + 1/2 (x - x*)^T A (x - x*)`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub matrix: Vec<Vec<f64>>,
    pub minimum: Vec<f64>,
    pub offset: f64,
}

impl QuadraticForm {
    pub fn new(matrix: Vec<Vec<f64>>, minimum: Option<Vec<f64>>, offset: f64) -> Result<Self> {
        let dim = matrix.len();
        if dim == 0 {
            return Err(Error::config("quadratic_form: matrix must be non-empty"));
        }
        check_square_symmetric("quadratic_form", &matrix, dim)?;
        let minimum = minimum.unwrap_or_else(|| vec![0.0; dim]);
        if minimum.len() != dim {
            return Err(Error::config("quadratic_form: minimum has wrong length"));
        }
        Ok(Self {
            matrix,
            minimum,
            offset,
        })
    }

    fn displacement(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.minimum).map(|(x, m)| x - m).collect()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl EnergySurface for QuadraticForm {
    fn name(&self) -> &'static str {
        "quadratic_form"
    }
    fn dim(&self) -> usize {
        self.matrix.len()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        let dx = self.displacement(x);
        let adx = self.apply(&dx);
        self.offset + 0.5 * dx.iter().zip(&adx).map(|(a, b)| a * b).sum::<f64>()
    }
    fn derivative(&self, order: usize, x: &[f64]) -> Tensor {
        let d = self.dim();
        match order {
            0 => Tensor::scalar(self.energy(x)),
            1 => Tensor::from_vec(d, 1, self.apply(&self.displacement(x))),
            2 => Tensor::from_vec(d, 2, self.matrix.iter().flatten().copied().collect()),
            r => Tensor::zeros(d, r),
        }
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        unit_box(self.dim())
    }
    fn derivative_bound(&self, order: usize, region: &[(f64, f64)]) -> f64 {
        match order {
            1 => {
                let reach = max_abs_offset(region, &self.minimum);
                self.matrix
                    .iter()
                    .map(|row| row.iter().zip(&reach).map(|(a, r)| a.abs() * r).sum::<f64>())
                    .fold(0.0, f64::max)
            }
            2 => self.matrix.iter().flatten().fold(0.0, |m, a| m.max(a.abs())),
            _ => 0.0,
        }
    }
}

/// Molecule in a static field `F`: `E = offset - p . F - 1/2 F^T alpha F`.
///
/// The first derivative at zero field is minus the permanent dipole and the
/// second is minus the static polarizability.
#[derive(Debug, Clone)]
pub struct DipoleField {
    pub dipole: Vec<f64>,
    pub polarizability: Vec<Vec<f64>>,
    pub offset: f64,
}

impl DipoleField {
    pub fn new(
        dipole: Vec<f64>,
        polarizability: Option<Vec<Vec<f64>>>,
        offset: f64,
    ) -> Result<Self> {
        let dim = dipole.len();
        if dim == 0 {
            return Err(Error::config("dipole_field: dipole must be non-empty"));
        }
        let polarizability = polarizability.unwrap_or_else(|| vec![vec![0.0; dim]; dim]);
        check_square_symmetric("dipole_field", &polarizability, dim)?;
        Ok(Self {
            dipole,
            polarizability,
            offset,
        })
    }

    fn induced(&self, f: &[f64]) -> Vec<f64> {
        self.polarizability
            .iter()
            .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn is_linear(&self) -> bool {
        self.polarizability.iter().flatten().all(|a| *a == 0.0)
    }
}

impl EnergySurface for DipoleField {
    fn name(&self) -> &'static str {
        "dipole_field"
    }
    fn dim(&self) -> usize {
        self.dipole.len()
    }
    fn energy(&self, f: &[f64]) -> f64 {
        let af = self.induced(f);
        self.offset
            - self.dipole.iter().zip(f).map(|(p, f)| p * f).sum::<f64>()
            - 0.5 * f.iter().zip(&af).map(|(a, b)| a * b).sum::<f64>()
    }
    fn derivative(&self, order: usize, f: &[f64]) -> Tensor {
        let d = self.dim();
        match order {
            0 => Tensor::scalar(self.energy(f)),
            1 => {
                let af = self.induced(f);
                Tensor::from_vec(d, 1, self.dipole.iter().zip(af).map(|(p, a)| -p - a).collect())
            }
            2 => Tensor::from_vec(
                d,
                2,
                self.polarizability.iter().flatten().map(|a| -a).collect(),
            ),
            r => Tensor::zeros(d, r),
        }
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        unit_box(self.dim())
    }
    fn derivative_bound(&self, order: usize, region: &[(f64, f64)]) -> f64 {
        match order {
            1 => {
                let reach = max_abs_offset(region, &vec![0.0; self.dim()]);
                self.polarizability
                    .iter()
                    .zip(&self.dipole)
                    .map(|(row, p)| {
                        p.abs() + row.iter().zip(&reach).map(|(a, r)| a.abs() * r).sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            }
            2 => self
                .polarizability
                .iter()
                .flatten()
                .fold(0.0, |m, a| m.max(a.abs())),
            _ => 0.0,
        }
    }
    fn exact_range(&self, lo: &[f64], hi: &[f64]) -> Option<(f64, f64)> {
        if !self.is_linear() {
            return None;
        }
        let neg: Vec<f64> = self.dipole.iter().map(|p| -p).collect();
        Linear {
            gradient: neg,
            offset: self.offset,
        }
        .exact_range(lo, hi)
    }
}

/// Diatomic Morse curve `E = D (1 - exp(-a (R - R_e)))^2`.
#[derive(Debug, Clone)]
pub struct Morse {
    pub depth: f64,
    pub a: f64,
    pub r_e: f64,
}

impl Morse {
    fn nth(&self, order: usize, r: f64) -> f64 {
        let x = r - self.r_e;
        let e1 = (-self.a * x).exp();
        if order == 0 {
            return self.depth * (1.0 - e1).powi(2);
        }
        // D (1 - 2 e^{-ax} + e^{-2ax}) differentiated term by term.
        let k = order as i32;
        self.depth * (-2.0 * (-self.a).powi(k) * e1 + (-2.0 * self.a).powi(k) * e1 * e1)
    }
}

impl EnergySurface for Morse {
    fn name(&self) -> &'static str {
        "morse_1d"
    }
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.nth(0, x[0])
    }
    fn derivative(&self, order: usize, x: &[f64]) -> Tensor {
        scalar_1d(order, self.nth(order, x[0]))
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        vec![(self.r_e - 0.5 / self.a, self.r_e + 3.0 / self.a)]
    }
    fn derivative_bound(&self, order: usize, region: &[(f64, f64)]) -> f64 {
        let x_lo = region[0].0 - self.r_e;
        let e1 = (-self.a * x_lo).exp();
        let k = order as i32;
        self.depth * (2.0 * self.a.powi(k) * e1 + (2.0 * self.a).powi(k) * e1 * e1)
    }
}

/// Pair potential `E = 4 eps ((sigma/r)^12 - (sigma/r)^6)`.
#[derive(Debug, Clone)]
pub struct LennardJones {
    pub epsilon: f64,
    pub sigma: f64,
}

/// `d^k/dr^k r^{-p} = (-1)^k p (p+1) ... (p+k-1) r^{-p-k}`.
fn inverse_power_derivative(p: i32, k: usize, r: f64) -> f64 {
    let rising: f64 = (0..k as i32).map(|j| (p + j) as f64).product();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * rising * r.powi(-p - k as i32)
}

impl LennardJones {
    fn nth(&self, order: usize, r: f64) -> f64 {
        4.0 * self.epsilon
            * (self.sigma.powi(12) * inverse_power_derivative(12, order, r)
                - self.sigma.powi(6) * inverse_power_derivative(6, order, r))
    }

    pub fn minimum(&self) -> f64 {
        2f64.powf(1.0 / 6.0) * self.sigma
    }
}

impl EnergySurface for LennardJones {
    fn name(&self) -> &'static str {
        "lennard_jones_pair"
    }
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.nth(0, x[0])
    }
    fn derivative(&self, order: usize, x: &[f64]) -> Tensor {
        scalar_1d(order, self.nth(order, x[0]))
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        vec![(0.9 * self.sigma, 3.0 * self.sigma)]
    }
    fn derivative_bound(&self, order: usize, region: &[(f64, f64)]) -> f64 {
        let r = region[0].0;
        4.0 * self.epsilon
            * (self.sigma.powi(12) * inverse_power_derivative(12, order, r).abs()
                + self.sigma.powi(6) * inverse_power_derivative(6, order, r).abs())
    }
}

/// `E = sum_j c_j x^j`.
#[derive(Debug, Clone)]
pub struct Polynomial1d {
    pub coefficients: Vec<f64>,
}

impl Polynomial1d {
    fn nth(&self, order: usize, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(order)
            .map(|(j, c)| c * falling(j, order) * x.powi((j - order) as i32))
            .sum()
    }
}

fn falling(j: usize, k: usize) -> f64 {
    (0..k).map(|i| (j - i) as f64).product()
}

impl EnergySurface for Polynomial1d {
    fn name(&self) -> &'static str {
        "polynomial_1d"
    }
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.nth(0, x[0])
    }
    fn derivative(&self, order: usize, x: &[f64]) -> Tensor {
        scalar_1d(order, self.nth(order, x[0]))
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        unit_box(1)
    }
    fn derivative_bound(&self, order: usize, region: &[(f64, f64)]) -> f64 {
        let reach = region[0].0.abs().max(region[0].1.abs());
        self.coefficients
            .iter()
            .enumerate()
            .skip(order)
            .map(|(j, c)| c.abs() * falling(j, order) * reach.powi((j - order) as i32))
            .fold(0.0, |acc, x| acc + x)
    }
}

fn scalar_1d(order: usize, value: f64) -> Tensor {
    if order == 0 {
        Tensor::scalar(value)
    } else {
        Tensor::from_vec(1, order, vec![value])
    }
}

/// Mueller-Brown surface: four anisotropic Gaussians, three minima and two
/// saddles on the standard parameter set.
#[derive(Debug, Clone)]
pub struct MuellerBrown {
    pub scale: f64,
}

const MB_A: [f64; 4] = [-200.0, -100.0, -170.0, 15.0];
const MB_SA: [f64; 4] = [-1.0, -1.0, -6.5, 0.7];
const MB_SB: [f64; 4] = [0.0, 0.0, 11.0, 0.6];
const MB_SC: [f64; 4] = [-10.0, -10.0, -6.5, 0.7];
const MB_X0: [f64; 4] = [1.0, 0.0, -0.5, -1.0];
const MB_Y0: [f64; 4] = [0.0, 0.5, 1.5, 1.0];

/// Dense polynomial in two variables, `coef[i][j]` multiplies `u^i v^j`.
#[derive(Debug, Clone)]
struct Poly2 {
    coef: Vec<Vec<f64>>,
}

impl Poly2 {
    fn one(size: usize) -> Self {
        let mut coef = vec![vec![0.0; size]; size];
        coef[0][0] = 1.0;
        Self { coef }
    }

    /// `(P e^q)' = (P' + P q') e^q` with `q' = lu u + lv v`.
    fn differentiate(&self, along_u: bool, lu: f64, lv: f64) -> Self {
        let size = self.coef.len();
        let mut out = vec![vec![0.0; size]; size];
        for i in 0..size {
            for j in 0..size {
                let c = self.coef[i][j];
                if c == 0.0 {
                    continue;
                }
                if along_u && i > 0 {
                    out[i - 1][j] += c * i as f64;
                }
                if !along_u && j > 0 {
                    out[i][j - 1] += c * j as f64;
                }
                if i + 1 < size {
                    out[i + 1][j] += c * lu;
                }
                if j + 1 < size {
                    out[i][j + 1] += c * lv;
                }
            }
        }
        Self { coef: out }
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        let mut total = 0.0;
        for (i, row) in self.coef.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if *c != 0.0 {
                    total += c * u.powi(i as i32) * v.powi(j as i32);
                }
            }
        }
        total
    }
}

impl MuellerBrown {
    /// Mixed partial with `nx` derivatives in x and `ny` in y.
    fn partial(&self, nx: usize, ny: usize, x: f64, y: f64) -> f64 {
        let size = nx + ny + 1;
        let mut total = 0.0;
        for t in 0..4 {
            let (u, v) = (x - MB_X0[t], y - MB_Y0[t]);
            let q = MB_SA[t] * u * u + MB_SB[t] * u * v + MB_SC[t] * v * v;
            let mut p = Poly2::one(size);
            for _ in 0..nx {
                p = p.differentiate(true, 2.0 * MB_SA[t], MB_SB[t]);
            }
            for _ in 0..ny {
                p = p.differentiate(false, MB_SB[t], 2.0 * MB_SC[t]);
            }
            total += MB_A[t] * p.eval(u, v) * q.exp();
        }
        self.scale * total
    }
}

impl EnergySurface for MuellerBrown {
    fn name(&self) -> &'static str {
        "mueller_brown_2d"
    }
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.partial(0, 0, x[0], x[1])
    }
    fn derivative(&self, order: usize, x: &[f64]) -> Tensor {
        if order == 0 {
            return Tensor::scalar(self.energy(x));
        }
        let by_count: Vec<f64> = (0..=order)
            .map(|ny| self.partial(order - ny, ny, x[0], x[1]))
            .collect();
        let mut t = Tensor::zeros(2, order);
        for flat in 0..t.len() {
            let idx = t.unflat(flat);
            let ny = idx.iter().filter(|&&i| i == 1).count();
            t.data[flat] = by_count[ny];
        }
        t
    }
    fn default_region(&self) -> Vec<(f64, f64)> {
        vec![(-1.5, 1.2), (-0.5, 2.0)]
    }
    /// Largest sampled partial on a 61x61 grid over the region.
    fn derivative_bound(&self, order: usize, region: &[(f64, f64)]) -> f64 {
        let steps = 60;
        let mut worst = 0.0_f64;
        for i in 0..=steps {
            let x = region[0].0 + (region[0].1 - region[0].0) * i as f64 / steps as f64;
            for j in 0..=steps {
                let y = region[1].0 + (region[1].1 - region[1].0) * j as f64 / steps as f64;
                for ny in 0..=order {
                    worst = worst.max(self.partial(order - ny, ny, x, y).abs());
                }
            }
        }
        worst
    }
}
