//! Discrete-time rational transfer functions.
//!
//! Coefficients are stored in descending powers of `z`, so
//! `num = [0.3, -0.27]`, `den = [1.0, -1.699, 0.6993]` is
//! `(0.3 z - 0.27) / (z^2 - 1.699 z + 0.6993)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;
use crate::signal::{fmt_real, Sequence};

#[derive(Debug, Clone, PartialEq)]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
    sample_rate_hz: f64,
}

/// On-disk form: `{"num": [...], "den": [...], "fs_hz": <real>}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalTfJson {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub fs_hz: f64,
}

impl RationalTf {
    /// Builds a transfer function. Exactly-zero leading coefficients are
    /// stripped; an improper result is allowed but cannot be simulated.
    pub fn new(num: Vec<f64>, den: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::NonPositive(sample_rate_hz));
        }
        let den = poly::trim_exact(&den);
        if den.len() == 1 && den[0] == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        let num = if num.is_empty() {
            vec![0.0]
        } else {
            poly::trim_exact(&num)
        };
        Ok(Self {
            num,
            den,
            sample_rate_hz,
        })
    }

    pub fn gain(g: f64, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![g], vec![1.0], sample_rate_hz)
    }

    pub fn identity(sample_rate_hz: f64) -> Result<Self> {
        Self::gain(1.0, sample_rate_hz)
    }

    /// `z^-d`.
    pub fn delay(d: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![1.0], poly::shift_up(&[1.0], d), sample_rate_hz)
    }

    /// `gain * prod(z - zeros) / prod(z - poles)`; complex entries must come
    /// in conjugate pairs.
    pub fn from_zpk(
        zeros: &[Complex64],
        poles: &[Complex64],
        gain: f64,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        Self::new(
            poly::scale(&poly::from_roots(zeros), gain),
            poly::from_roots(poles),
            sample_rate_hz,
        )
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn num_degree(&self) -> usize {
        poly::degree(&self.num)
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        poly::is_zero(&self.num)
    }

    pub fn is_proper(&self) -> bool {
        self.is_zero() || self.num_degree() <= self.den_degree()
    }

    /// `deg(den) - deg(num)`, negative for improper transfer functions. The
    /// zero transfer function reports `i64::MAX`.
    pub fn relative_order(&self) -> i64 {
        if self.is_zero() {
            return i64::MAX;
        }
        self.den_degree() as i64 - self.num_degree() as i64
    }

    fn require_proper(&self) -> Result<()> {
        if self.is_proper() {
            Ok(())
        } else {
            Err(Error::Improper {
                num_degree: self.num_degree(),
                den_degree: self.den_degree(),
            })
        }
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        if self.is_zero() {
            return Ok(Vec::new());
        }
        poly::roots(&self.num)
    }

    /// Value at an arbitrary complex point.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        poly::eval(&self.num, z) / poly::eval(&self.den, z)
    }

    /// `num(e^{jw}) / den(e^{jw})` at each grid frequency (rad/sample).
    ///
    /// Where the expanded denominator is nearly cancelled (clustered poles
    /// close to the circle), the value is computed from the factored form
    /// instead, and a pole within `1e-9` of the point is reported.
    pub fn freq_response(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        let scale = poly::norm(&self.den);
        let mut factored: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
        grid.iter()
            .map(|&w| {
                let z = Complex64::from_polar(1.0, w);
                let d = poly::eval(&self.den, z);
                if d.norm() > 1e-10 * scale {
                    return Ok(poly::eval(&self.num, z) / d);
                }
                if factored.is_none() {
                    factored = Some((self.zeros()?, self.poles()?));
                }
                let (zeros, poles) = factored.as_ref().unwrap();
                if d == Complex64::new(0.0, 0.0) || poles.iter().any(|p| (p - z).norm() <= 1e-9) {
                    return Err(Error::PoleOnUnitCircle { omega: w });
                }
                let lead = poly::trim_exact(&self.num)[0] / self.den[0];
                let num: Complex64 = zeros.iter().map(|q| z - q).product();
                let den: Complex64 = poles.iter().map(|p| z - p).product();
                Ok(lead * num / den)
            })
            .collect()
    }

    /// Zero-state response of the difference equation to `input`. The
    /// recursion starts at the first stored sample; the output keeps the
    /// input's support.
    pub fn simulate(&self, input: &Sequence) -> Result<Sequence> {
        self.require_proper()?;
        check_rate(self.sample_rate_hz, input.sample_rate_hz())?;
        let y = self.simulate_slice(input.samples());
        input.with_samples(y)
    }

    pub(crate) fn simulate_slice(&self, x: &[f64]) -> Vec<f64> {
        let n = self.den.len() - 1;
        let a0 = self.den[0];
        let a: Vec<f64> = self.den.iter().map(|c| c / a0).collect();
        let mut b = vec![0.0; n + 1];
        if !self.is_zero() {
            let off = n + 1 - self.num.len();
            for (i, c) in self.num.iter().enumerate() {
                b[off + i] = c / a0;
            }
        }
        // transposed direct form II
        let mut state = vec![0.0; n];
        let mut y = Vec::with_capacity(x.len());
        for &xk in x {
            let yk = b[0] * xk + state.first().copied().unwrap_or(0.0);
            for i in 0..n {
                let next = if i + 1 < n { state[i + 1] } else { 0.0 };
                state[i] = next + b[i + 1] * xk - a[i + 1] * yk;
            }
            y.push(yk);
        }
        y
    }

    pub fn impulse_response(&self, length: usize) -> Result<Sequence> {
        self.simulate(&Sequence::delta(length, 0, self.sample_rate_hz)?)
    }

    pub fn step_response(&self, length: usize) -> Result<Sequence> {
        self.simulate(&Sequence::step(length, self.sample_rate_hz)?)
    }

    /// `self * other`.
    pub fn series(&self, other: &RationalTf) -> Result<RationalTf> {
        check_rate(self.sample_rate_hz, other.sample_rate_hz)?;
        Self::new(
            poly::trim(&poly::mul(&self.num, &other.num)),
            poly::trim(&poly::mul(&self.den, &other.den)),
            self.sample_rate_hz,
        )
    }

    /// `self / other`; the result may be improper.
    pub fn divide(&self, other: &RationalTf) -> Result<RationalTf> {
        check_rate(self.sample_rate_hz, other.sample_rate_hz)?;
        if other.is_zero() {
            return Err(Error::ZeroDenominator);
        }
        Self::new(
            poly::trim(&poly::mul(&self.num, &other.den)),
            poly::trim(&poly::mul(&self.den, &other.num)),
            self.sample_rate_hz,
        )
    }

    /// `L / (1 + L)`.
    pub fn feedback_unity(&self) -> Result<RationalTf> {
        let den = poly::trim(&poly::add(&self.den, &self.num));
        if poly::is_zero(&den) {
            return Err(Error::DegenerateLoop);
        }
        if self.is_zero() {
            return Self::new(vec![0.0], self.den.clone(), self.sample_rate_hz);
        }
        Self::new(self.num.clone(), den, self.sample_rate_hz)
    }

    /// Multiply numerator (`n > 0`) or denominator (`n < 0`) by `z^|n|`.
    pub fn times_z_power(&self, n: i64) -> Result<RationalTf> {
        let (num, den) = if n >= 0 {
            (poly::shift_up(&self.num, n as usize), self.den.clone())
        } else {
            (self.num.clone(), poly::shift_up(&self.den, (-n) as usize))
        };
        Self::new(num, den, self.sample_rate_hz)
    }

    /// Largest pole magnitude.
    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(self
            .poles()?
            .iter()
            .map(|p| p.norm())
            .fold(0.0f64, f64::max))
    }

    pub fn to_json_value(&self) -> RationalTfJson {
        RationalTfJson {
            num: self.num.clone(),
            den: self.den.clone(),
            fs_hz: self.sample_rate_hz,
        }
    }

    pub fn from_json_value(v: RationalTfJson) -> Result<Self> {
        Self::new(v.num, v.den, v.fs_hz)
    }

    /// JSON with every coefficient written to 17 significant digits.
    pub fn to_json(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|c| fmt_real(*c))
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "{{\"num\": [{}], \"den\": [{}], \"fs_hz\": {}}}\n",
            list(&self.num),
            list(&self.den),
            fmt_real(self.sample_rate_hz)
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: RationalTfJson =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json_value(v)
    }
}

fn check_rate(a: f64, b: f64) -> Result<()> {
    if a != b {
        return Err(Error::SampleRateMismatch(a, b));
    }
    Ok(())
}
