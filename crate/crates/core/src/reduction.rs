//! Balanced reduction of a causal FIR controller to a low-order IIR one.
//!
//! The Markov parameters `h(1), ..., h(n)` of an FIR with `n + 1` causal
//! taps fill the `n × n` Hankel matrix `H[i][j] = h(i + j + 1)` (zero past
//! `h(n)`). This matrix is exactly the product of the observability and
//! controllability matrices of the FIR's `n`-state shift realization, so its
//! singular values are the Hankel singular values of the FIR itself and its
//! SVD gives a balanced realization. Truncating that realization to `r`
//! states obeys
//!
//! ```text
//! ||C_FIR - C_IIR||_∞  <=  2 (σ_{r+1} + ... + σ_n).
//! ```
//!
//! A Hankel matrix is symmetric, so the SVD comes from a symmetric
//! eigendecomposition: `σ = |λ|`, `u = q`, `v = sign(λ) q`.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{RationalTf, RationalTfJson};
use crate::pipeline::ANTICAUSAL_ENERGY_LIMIT;
use crate::signal::TwoSidedFir;

/// Default grid for the measured H∞ error.
pub const ERROR_GRID: usize = 4096;

/// Default share of the Hankel singular value sum kept by the reduction.
pub const DEFAULT_ENERGY_FRACTION: f64 = 0.96;

/// Singular values below this fraction of `σ_1` count as zero rank.
const RANK_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderSelection {
    Order(usize),
    /// Smallest `r` with `σ_1 + ... + σ_r >= η Σ σ`.
    EnergyFraction(f64),
}

#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub reduced: RationalTf,
    /// Descending.
    pub hankel_singular_values: Vec<f64>,
    pub order: usize,
    /// `2 Σ_{k > r} σ_k`.
    pub error_bound: f64,
    /// `max |C_FIR - C_IIR|` over the default grid.
    pub measured_grid_error: f64,
}

#[derive(Serialize)]
struct ReductionJson<'a> {
    reduced: RationalTfJson,
    order: usize,
    error_bound: f64,
    error_bound_db: f64,
    measured_grid_error: f64,
    measured_grid_error_db: f64,
    hankel_singular_values: &'a [f64],
}

impl ReductionResult {
    pub fn error_bound_db(&self) -> f64 {
        amplitude_db(self.error_bound)
    }

    pub fn measured_grid_error_db(&self) -> f64 {
        amplitude_db(self.measured_grid_error)
    }

    pub fn to_json(&self) -> Result<String> {
        let j = ReductionJson {
            reduced: self.reduced.to_json_value(),
            order: self.order,
            error_bound: self.error_bound,
            error_bound_db: self.error_bound_db(),
            measured_grid_error: self.measured_grid_error,
            measured_grid_error_db: self.measured_grid_error_db(),
            hankel_singular_values: &self.hankel_singular_values,
        };
        serde_json::to_string_pretty(&j).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn amplitude_db(v: f64) -> f64 {
    20.0 * v.log10()
}

fn markov_parameters(fir: &TwoSidedFir) -> Result<&[f64]> {
    let fraction = fir.anticausal_energy_fraction();
    if fraction > ANTICAUSAL_ENERGY_LIMIT {
        return Err(Error::AnticausalEnergy { fraction });
    }
    let causal = fir.causal_taps();
    if causal.is_empty() {
        return Err(Error::EmptyCausalPart);
    }
    Ok(&causal[1..])
}

fn hankel(markov: &[f64]) -> Mat<f64> {
    let n = markov.len();
    Mat::from_fn(n, n, |i, j| markov.get(i + j).copied().unwrap_or(0.0))
}

/// Hankel singular values of the causal part of `fir`, descending.
pub fn hankel_singular_values(fir: &TwoSidedFir) -> Result<Vec<f64>> {
    let markov = markov_parameters(fir)?;
    if markov.is_empty() {
        return Ok(Vec::new());
    }
    let eig = hankel(markov)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let mut s: Vec<f64> = eig.into_iter().map(f64::abs).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Select the order for `selection` given descending singular values.
pub fn select_order(sigma: &[f64], selection: OrderSelection) -> Result<usize> {
    match selection {
        OrderSelection::Order(r) => {
            if r > sigma.len() {
                return Err(Error::InvalidParameter(format!(
                    "order {r} exceeds the {} available states",
                    sigma.len()
                )));
            }
            Ok(r)
        }
        OrderSelection::EnergyFraction(eta) => {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "energy fraction {eta} outside (0, 1]"
                )));
            }
            let total: f64 = sigma.iter().sum();
            let mut acc = 0.0;
            for (r, s) in std::iter::once(&0.0).chain(sigma).enumerate() {
                acc += s;
                if acc >= eta * total {
                    return Ok(r);
                }
            }
            Ok(sigma.len())
        }
    }
}

/// `2 Σ_{k > r} σ_k`.
pub fn error_bound(sigma: &[f64], order: usize) -> f64 {
    2.0 * sigma.iter().skip(order).sum::<f64>()
}

/// Balanced truncation of the causal part of `fir`.
///
/// The order is capped at the numerical rank of the Hankel matrix; the
/// returned `order` is the one actually realized.
pub fn balanced_reduce(
    fir: &TwoSidedFir,
    selection: OrderSelection,
    sample_rate_hz: f64,
) -> Result<ReductionResult> {
    let markov = markov_parameters(fir)?;
    let d = fir.lag(0);
    let n = markov.len();

    let (sigma, vectors, signs) = if n == 0 {
        (Vec::new(), Mat::<f64>::zeros(0, 0), Vec::new())
    } else {
        let evd = hankel(markov)
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        let lambda: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| lambda[b].abs().total_cmp(&lambda[a].abs()));
        let sigma: Vec<f64> = idx.iter().map(|&i| lambda[i].abs()).collect();
        let signs: Vec<f64> = idx
            .iter()
            .map(|&i| if lambda[i] < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let u = evd.U();
        let vectors = Mat::from_fn(n, n, |row, col| u[(row, idx[col])]);
        (sigma, vectors, signs)
    };

    let requested = select_order(&sigma, selection)?;
    let rank = sigma
        .iter()
        .take_while(|&&s| s > RANK_TOLERANCE * sigma.first().copied().unwrap_or(0.0))
        .count();
    let r = requested.min(rank);
    let bound = error_bound(&sigma, r);

    let reduced = if r == 0 {
        RationalTf::gain(d, sample_rate_hz)?
    } else {
        let (a, b, c) = project(markov, &sigma[..r], &vectors, &signs[..r]);
        let (tf, poles) = realize(&a, &b, &c, d, sample_rate_hz)?;
        let magnitudes: Vec<f64> = poles.iter().map(|p| p.norm()).collect();
        if magnitudes.iter().any(|&m| m >= 1.0) {
            return Err(Error::UnstableReduction { magnitudes });
        }
        tf
    };

    let grid = uniform_grid(ERROR_GRID);
    let full = fir.causal_part().frequency_response(&grid);
    let approx = reduced.freq_response(&grid)?;
    let measured = full
        .iter()
        .zip(&approx)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);

    Ok(ReductionResult {
        reduced,
        hankel_singular_values: sigma,
        order: r,
        error_bound: bound,
        measured_grid_error: measured,
    })
}

/// Balanced `(A, B, C)` of order `r = sigma.len()`:
/// `A = Σ^{-1/2} U^T H_shift V Σ^{-1/2}`, `B = Σ^{1/2} V^T e_1`,
/// `C = e_1^T U Σ^{1/2}`, with `H_shift[i][j] = h(i + j + 2)`.
fn project(
    markov: &[f64],
    sigma: &[f64],
    q: &Mat<f64>,
    signs: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = markov.len();
    let r = sigma.len();
    let shifted = |k: usize| markov.get(k + 1).copied().unwrap_or(0.0);

    // columns of H_shift V
    let mut hv = vec![vec![0.0; n]; r];
    for (col, out) in hv.iter_mut().enumerate() {
        let v: Vec<f64> = (0..n).map(|j| signs[col] * q[(j, col)]).collect();
        for (i, o) in out.iter_mut().enumerate() {
            // entries with i + j + 1 >= n vanish
            let mut acc = 0.0;
            for (j, vj) in v.iter().enumerate().take(n.saturating_sub(i + 1)) {
                acc += shifted(i + j) * vj;
            }
            *o = acc;
        }
    }
    let root: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let mut a = vec![vec![0.0; r]; r];
    for (row, a_row) in a.iter_mut().enumerate() {
        for (col, a_rc) in a_row.iter_mut().enumerate() {
            let dot: f64 = (0..n).map(|i| q[(i, row)] * hv[col][i]).sum();
            *a_rc = dot / (root[row] * root[col]);
        }
    }
    let b = (0..r).map(|k| root[k] * signs[k] * q[(0, k)]).collect();
    let c = (0..r).map(|k| q[(0, k)] * root[k]).collect();
    (a, b, c)
}

/// `C (zI - A)^{-1} B + D` from characteristic polynomials:
/// `C adj(zI - A) B = det(zI - A + BC) - det(zI - A)`.
pub fn state_space_to_tf(
    a: &[Vec<f64>],
    b: &[f64],
    c: &[f64],
    d: f64,
    sample_rate_hz: f64,
) -> Result<RationalTf> {
    Ok(realize(a, b, c, d, sample_rate_hz)?.0)
}

/// The transfer function together with the eigenvalues of `A`, which are
/// its poles before any cancellation.
fn realize(
    a: &[Vec<f64>],
    b: &[f64],
    c: &[f64],
    d: f64,
    sample_rate_hz: f64,
) -> Result<(RationalTf, Vec<Complex64>)> {
    let n = a.len();
    if b.len() != n || c.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidParameter(
            "state-space dimensions disagree".into(),
        ));
    }
    if n == 0 {
        return Ok((RationalTf::gain(d, sample_rate_hz)?, Vec::new()));
    }
    let eigenvalues = |m: Mat<f64>| -> Result<Vec<Complex64>> {
        m.eigenvalues()
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))
    };
    let poles = eigenvalues(Mat::from_fn(n, n, |i, j| a[i][j]))?;
    let den = crate::poly::from_roots(&poles);
    let closed = crate::poly::from_roots(&eigenvalues(Mat::from_fn(n, n, |i, j| {
        a[i][j] - b[i] * c[j]
    }))?);
    let num: Vec<f64> = den
        .iter()
        .zip(&closed)
        .enumerate()
        .map(|(k, (p, q))| if k == 0 { d * p } else { d * p + q - p })
        .collect();
    Ok((RationalTf::new(num, den, sample_rate_hz)?, poles))
}

/// `ω_k = π (k + 1) / n`, `k = 0..n`: uniform on `(0, π]`. DC is left out
/// because loop gains with an integrator have a pole there.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| PI * (k + 1) as f64 / n as f64).collect()
}

/// Anything with a frequency response on the unit circle.
pub trait FrequencyResponse {
    fn response(&self, grid: &[f64]) -> Result<Vec<Complex64>>;
}

impl FrequencyResponse for RationalTf {
    fn response(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        self.freq_response(grid)
    }
}

impl FrequencyResponse for TwoSidedFir {
    fn response(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        Ok(self.frequency_response(grid))
    }
}

/// A product of responses, e.g. `P C_IIR H`.
pub struct Cascade<'a>(pub Vec<&'a dyn FrequencyResponse>);

impl FrequencyResponse for Cascade<'_> {
    fn response(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        let mut acc = vec![Complex64::new(1.0, 0.0); grid.len()];
        for part in &self.0 {
            for (a, v) in acc.iter_mut().zip(part.response(grid)?) {
                *a *= v;
            }
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridError {
    pub max_abs: f64,
    pub max_db: f64,
    /// Frequency (rad/sample) where the maximum occurs.
    pub at_omega: f64,
}

/// Pointwise `|a - b|` over [`uniform_grid`]`(grid_size)`.
pub fn grid_error_profile(
    a: &dyn FrequencyResponse,
    b: &dyn FrequencyResponse,
    grid_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if grid_size == 0 {
        return Err(Error::InvalidParameter("grid_size must be positive".into()));
    }
    let grid = uniform_grid(grid_size);
    let ra = a.response(&grid)?;
    let rb = b.response(&grid)?;
    let err = ra.iter().zip(&rb).map(|(x, y)| (x - y).norm()).collect();
    Ok((grid, err))
}

/// `max_ω |a - b|` over a uniform grid, also in dB.
pub fn grid_hinf_error(
    a: &dyn FrequencyResponse,
    b: &dyn FrequencyResponse,
    grid_size: usize,
) -> Result<GridError> {
    let (grid, err) = grid_error_profile(a, b, grid_size)?;
    let (i, max_abs) =
        err.iter().copied().enumerate().fold(
            (0, 0.0f64),
            |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) },
        );
    Ok(GridError {
        max_abs,
        max_db: amplitude_db(max_abs),
        at_omega: grid[i],
    })
}
