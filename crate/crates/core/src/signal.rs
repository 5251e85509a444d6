//! Finite discrete-time signals, two-sided FIR filters and the operations
//! the learning loops are built from.
//!
//! Every signal and filter carries an *anchor*: the storage index that
//! corresponds to time (or lag) zero. A sample at storage index `i` lives at
//! time `i - anchor`. Non-causal filters such as plant inverses with an
//! advance are therefore ordinary values, and convolution keeps time
//! alignment without any bookkeeping at the call site.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A finite real-valued signal sampled at `sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    samples: Vec<f64>,
    anchor: usize,
    sample_rate_hz: f64,
}

impl Sequence {
    pub fn new(samples: Vec<f64>, anchor: usize, sample_rate_hz: f64) -> Result<Self> {
        check_rate(sample_rate_hz)?;
        check_anchor(anchor, samples.len(), true)?;
        Ok(Self {
            samples,
            anchor,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, anchor: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![0.0; len], anchor, sample_rate_hz)
    }

    /// Unit impulse of `len` samples placed at storage index `anchor`, which
    /// is also time zero.
    pub fn delta(len: usize, anchor: usize, sample_rate_hz: f64) -> Result<Self> {
        if len == 0 || anchor >= len {
            return Err(Error::AnchorOutOfRange { anchor, len });
        }
        let mut samples = vec![0.0; len];
        samples[anchor] = 1.0;
        Self::new(samples, anchor, sample_rate_hz)
    }

    /// Unit step starting at time zero (storage index 0).
    pub fn step(len: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(vec![1.0; len], 0, sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Value at time `k`; zero outside the stored support.
    pub fn at(&self, k: i64) -> f64 {
        let idx = k + self.anchor as i64;
        if idx < 0 {
            return 0.0;
        }
        self.samples.get(idx as usize).copied().unwrap_or(0.0)
    }

    /// Same support and rate, new values.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != self.samples.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} samples, got {}",
                self.samples.len(),
                samples.len()
            )));
        }
        Ok(Self {
            samples,
            anchor: self.anchor,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Element-wise `self - other` over identical supports.
    pub fn sub(&self, other: &Sequence) -> Result<Self> {
        self.check_same_support(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a - b)
            .collect();
        self.with_samples(samples)
    }

    /// Element-wise `self + other` over identical supports.
    pub fn add(&self, other: &Sequence) -> Result<Self> {
        self.check_same_support(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        self.with_samples(samples)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            anchor: self.anchor,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    fn check_same_support(&self, other: &Sequence) -> Result<()> {
        if self.samples.len() != other.samples.len() || self.anchor != other.anchor {
            return Err(Error::InvalidParameter(format!(
                "support mismatch: ({}, anchor {}) vs ({}, anchor {})",
                self.samples.len(),
                self.anchor,
                other.samples.len(),
                other.anchor
            )));
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::SampleRateMismatch(
                self.sample_rate_hz,
                other.sample_rate_hz,
            ));
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.samples, self.anchor, self.sample_rate_hz)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let (samples, anchor, fs) = read_csv(r)?;
        Self::new(samples, anchor, fs)
    }
}

/// FIR filter with taps on both sides of lag zero.
///
/// `taps[anchor]` multiplies the current sample, `taps[anchor + k]` the
/// sample `k` steps in the past and `taps[anchor - k]` the sample `k` steps in
/// the future.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSidedFir {
    taps: Vec<f64>,
    anchor: usize,
}

impl TwoSidedFir {
    pub fn new(taps: Vec<f64>, anchor: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::EmptyFilter);
        }
        check_anchor(anchor, taps.len(), false)?;
        Ok(Self { taps, anchor })
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            anchor: 0,
        }
    }

    pub fn gain(g: f64) -> Self {
        Self {
            taps: vec![g],
            anchor: 0,
        }
    }

    /// `z^-d`.
    pub fn delay(d: usize) -> Self {
        let mut taps = vec![0.0; d + 1];
        taps[d] = 1.0;
        Self { taps, anchor: 0 }
    }

    /// `z^d`, the exact inverse of a pure `d`-sample delay.
    pub fn advance(d: usize) -> Self {
        let mut taps = vec![0.0; d + 1];
        taps[0] = 1.0;
        Self { taps, anchor: d }
    }

    /// Interpret a signal as filter taps, keeping its time alignment.
    pub fn from_sequence(seq: &Sequence) -> Result<Self> {
        Self::new(seq.samples().to_vec(), seq.anchor())
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Tap at lag `k` (positive = delay); zero outside the support.
    pub fn lag(&self, k: i64) -> f64 {
        let idx = k + self.anchor as i64;
        if idx < 0 {
            return 0.0;
        }
        self.taps.get(idx as usize).copied().unwrap_or(0.0)
    }

    /// Taps at lags `0, 1, 2, ...`.
    pub fn causal_taps(&self) -> &[f64] {
        &self.taps[self.anchor..]
    }

    /// Taps at negative lags, as stored (most anticausal first).
    pub fn anticausal_taps(&self) -> &[f64] {
        &self.taps[..self.anchor]
    }

    /// Share of the total tap energy held by negative lags.
    pub fn anticausal_energy_fraction(&self) -> f64 {
        let total: f64 = self.taps.iter().map(|t| t * t).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.anticausal_taps().iter().map(|t| t * t).sum::<f64>() / total
    }

    /// Drop negative lags.
    pub fn causal_part(&self) -> Self {
        Self {
            taps: self.causal_taps().to_vec(),
            anchor: 0,
        }
    }

    pub fn reversed(&self) -> Self {
        let mut taps = self.taps.clone();
        taps.reverse();
        Self {
            anchor: self.taps.len() - 1 - self.anchor,
            taps,
        }
    }

    pub fn scaled(&self, g: f64) -> Self {
        Self {
            taps: self.taps.iter().map(|t| t * g).collect(),
            anchor: self.anchor,
        }
    }

    /// `sum_k taps(k) e^{-j w (k - anchor)}` at each grid frequency.
    pub fn frequency_response(&self, omegas: &[f64]) -> Vec<Complex64> {
        omegas
            .iter()
            .map(|&w| dtft(&self.taps, self.anchor, w))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W, sample_rate_hz: f64) -> Result<()> {
        write_csv(w, &self.taps, self.anchor, sample_rate_hz)
    }

    /// Returns the filter and the sample rate recorded in the header.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, f64)> {
        let (taps, anchor, fs) = read_csv(r)?;
        Ok((Self::new(taps, anchor)?, fs))
    }
}

fn check_rate(fs: f64) -> Result<()> {
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(Error::NonPositive(fs));
    }
    Ok(())
}

fn check_anchor(anchor: usize, len: usize, allow_empty: bool) -> Result<()> {
    let ok = if len == 0 {
        allow_empty && anchor == 0
    } else {
        anchor < len
    };
    if ok {
        Ok(())
    } else {
        Err(Error::AnchorOutOfRange { anchor, len })
    }
}

/// Full linear convolution. The result anchor is the sum of both anchors so
/// that time zero lines up; its length is `len(x) + len(f) - 1`.
pub fn convolve(x: &Sequence, f: &TwoSidedFir) -> Result<Sequence> {
    if x.is_empty() {
        return Err(Error::EmptySequence);
    }
    let full = convolve_slices(x.samples(), f.taps());
    Sequence::new(full, x.anchor() + f.anchor(), x.sample_rate_hz())
}

/// Apply `f` to `x` and keep only the samples that fall on the support of
/// `x`. Output that would land outside the window is discarded.
pub fn filter_windowed(f: &TwoSidedFir, x: &Sequence) -> Result<Sequence> {
    if x.is_empty() {
        return Err(Error::EmptySequence);
    }
    let full = convolve_slices(x.samples(), f.taps());
    // full[m] sits at time m - x.anchor - f.anchor, x[i] at i - x.anchor
    let start = f.anchor();
    let samples = full[start..start + x.len()].to_vec();
    x.with_samples(samples)
}

const DIRECT_LIMIT: usize = 1 << 15;

/// Full linear convolution of two slices. Small products use the direct
/// double sum; large ones go through an FFT.
pub fn convolve_slices(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if a.len().min(b.len()) <= 32 || a.len() * b.len() <= DIRECT_LIMIT {
        convolve_direct(a, b)
    } else {
        convolve_fft(a, b)
    }
}

fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (o, &bj) in out[i..].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
    out
}

fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n_out = a.len() + b.len() - 1;
    let n = n_out.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    // pack both real inputs into one complex transform
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| {
            Complex64::new(
                a.get(i).copied().unwrap_or(0.0),
                b.get(i).copied().unwrap_or(0.0),
            )
        })
        .collect();
    fwd.process(&mut buf);
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = buf[k];
        let zc = buf[(n - k) % n].conj();
        let fa = (zk + zc) * 0.5;
        let fb = (zk - zc) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / n as f64;
    prod[..n_out].iter().map(|c| c.re * scale).collect()
}

/// `sum_i x[i] e^{-j w (i - anchor)}`.
pub fn dtft(x: &[f64], anchor: usize, w: f64) -> Complex64 {
    // Horner in e^{-jw}, then undo the anchor offset
    let step = Complex64::from_polar(1.0, -w);
    let mut acc = Complex64::new(0.0, 0.0);
    for &v in x.iter().rev() {
        acc = acc * step + v;
    }
    acc * Complex64::from_polar(1.0, w * anchor as f64)
}

pub fn l2_norm(x: &[f64]) -> f64 {
    // scaled to avoid overflow/underflow on extreme values
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    l2_norm(x) / (x.len() as f64).sqrt()
}

pub fn to_db(v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::NonPositive(v));
    }
    Ok(20.0 * v.log10())
}

/// Symmetric Blackman-windowed sinc low-pass with `2 * half_length + 1` taps,
/// normalized to unit DC gain. `cutoff_normalized` is relative to Nyquist.
pub fn zero_phase_lowpass(cutoff_normalized: f64, half_length: usize) -> Result<TwoSidedFir> {
    if !(cutoff_normalized > 0.0 && cutoff_normalized <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff_normalized} outside (0, 1]"
        )));
    }
    if half_length == 0 {
        return Err(Error::InvalidParameter(
            "half_length must be positive".into(),
        ));
    }
    let m = 2 * half_length;
    let mut taps: Vec<f64> = (0..=m)
        .map(|n| {
            let k = n as f64 - half_length as f64;
            let x = PI * cutoff_normalized * k;
            let sinc = if k == 0.0 { 1.0 } else { x.sin() / x };
            let t = n as f64 / m as f64;
            let window = 0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos();
            cutoff_normalized * sinc * window
        })
        .collect();
    // enforce exact symmetry before normalizing
    for i in 0..half_length {
        let avg = 0.5 * (taps[i] + taps[m - i]);
        taps[i] = avg;
        taps[m - i] = avg;
    }
    let dc: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= dc;
    }
    TwoSidedFir::new(taps, half_length)
}

/// `# anchor=<int> fs=<real>` header, then one sample per line.
pub fn write_csv<W: Write>(mut w: W, samples: &[f64], anchor: usize, fs: f64) -> Result<()> {
    writeln!(w, "# anchor={anchor} fs={}", fmt_real(fs))?;
    for v in samples {
        writeln!(w, "{}", fmt_real(*v))?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, usize, f64)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("missing header".into()))??;
    let mut anchor = None;
    let mut fs = None;
    for field in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = field.strip_prefix("anchor=") {
            anchor = Some(
                v.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("anchor: {e}")))?,
            );
        } else if let Some(v) = field.strip_prefix("fs=") {
            fs = Some(
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("fs: {e}")))?,
            );
        }
    }
    let (anchor, fs) = match (anchor, fs) {
        (Some(a), Some(f)) => (a, f),
        _ => return Err(Error::Parse(format!("bad header: {header}"))),
    };
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        samples.push(
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?,
        );
    }
    Ok((samples, anchor, fs))
}

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(v: &[f64]) -> Sequence {
        Sequence::new(v.to_vec(), 0, 1.0).unwrap()
    }

    #[test]
    fn delta_shapes() {
        assert_eq!(
            Sequence::delta(3, 0, 1.0).unwrap().samples(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(
            Sequence::delta(5, 2, 1.0).unwrap().samples(),
            &[0.0, 0.0, 1.0, 0.0, 0.0]
        );
        for (n, a) in [(1, 0), (7, 3), (100, 99)] {
            assert_eq!(Sequence::delta(n, a, 1.0).unwrap().l2_norm(), 1.0);
        }
        assert!(matches!(
            Sequence::delta(3, 3, 1.0),
            Err(Error::AnchorOutOfRange { .. })
        ));
    }

    #[test]
    fn sequence_invariants() {
        assert!(Sequence::new(vec![], 0, 1.0).is_ok());
        assert!(Sequence::new(vec![], 1, 1.0).is_err());
        assert!(Sequence::new(vec![1.0], 0, 0.0).is_err());
        assert!(Sequence::new(vec![1.0], 0, -3.0).is_err());
        assert!(TwoSidedFir::new(vec![], 0).is_err());
        assert!(TwoSidedFir::new(vec![1.0, 2.0], 2).is_err());
    }

    #[test]
    fn identity_filter_passes_through() {
        let x = Sequence::new(vec![1.0, -2.0, 3.5], 1, 10.0).unwrap();
        let y = convolve(&x, &TwoSidedFir::identity()).unwrap();
        assert_eq!(y, x);
        // a unit tap surrounded by zeros pads but keeps alignment
        let f = TwoSidedFir::new(vec![0.0, 1.0, 0.0], 1).unwrap();
        let y = convolve(&x, &f).unwrap();
        for k in -3..4 {
            assert_eq!(y.at(k), x.at(k));
        }
        assert_eq!(y.len(), x.len() + 2);
    }

    #[test]
    fn sifting_property() {
        let f = TwoSidedFir::new(vec![0.5, -1.0, 2.0, 0.25], 1).unwrap();
        let d = 3;
        let x = Sequence::delta(6, 0, 1.0).unwrap();
        let shifted = Sequence::new(
            {
                let mut v = vec![0.0; 6];
                v[d] = 1.0;
                v
            },
            0,
            1.0,
        )
        .unwrap();
        let y = convolve(&shifted, &f).unwrap();
        let y0 = convolve(&x, &f).unwrap();
        for k in -2..10 {
            assert_eq!(y.at(k + d as i64), y0.at(k));
            assert_eq!(y0.at(k), f.lag(k));
        }
    }

    #[test]
    fn convolve_errors() {
        let empty = Sequence::new(vec![], 0, 1.0).unwrap();
        assert!(matches!(
            convolve(&empty, &TwoSidedFir::identity()),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn advance_inverts_delay() {
        let x = seq(&[1.0, 2.0, 3.0, 4.0]);
        let y = convolve(&x, &TwoSidedFir::delay(2)).unwrap();
        let z = convolve(&y, &TwoSidedFir::advance(2)).unwrap();
        for k in 0..4 {
            assert_eq!(z.at(k), x.at(k));
        }
    }

    #[test]
    fn windowed_filter_keeps_support() {
        let x = Sequence::new(vec![0.0, 1.0, 0.0, 0.0], 1, 1.0).unwrap();
        let y = filter_windowed(&TwoSidedFir::delay(1), &x).unwrap();
        assert_eq!(y.samples(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(y.anchor(), 1);
        let y = filter_windowed(&TwoSidedFir::advance(1), &x).unwrap();
        assert_eq!(y.samples(), &[1.0, 0.0, 0.0, 0.0]);
        // the advanced sample falls off the left edge
        let y = filter_windowed(&TwoSidedFir::advance(2), &x).unwrap();
        assert_eq!(y.samples(), &[0.0; 4]);
    }

    #[test]
    fn fft_path_matches_direct() {
        let a: Vec<f64> = (0..700)
            .map(|i| ((i * 37 % 101) as f64 - 50.0) / 13.0)
            .collect();
        let b: Vec<f64> = (0..900)
            .map(|i| ((i * 53 % 97) as f64 - 48.0) / 7.0)
            .collect();
        let d = convolve_direct(&a, &b);
        let f = convolve_fft(&a, &b);
        let scale = l2_norm(&d);
        for (x, y) in d.iter().zip(&f) {
            assert!((x - y).abs() <= 1e-12 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn norms() {
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(to_db(1.0).unwrap(), 0.0);
        assert!((rms(&[0.5; 100]) - 0.5).abs() < 1e-15);
        assert!(to_db(0.0).is_err());
        assert!(to_db(-1.0).is_err());
        assert_eq!(l2_norm(&[]), 0.0);
    }

    #[test]
    fn lowpass_construction() {
        for (c, h) in [(0.5, 50), (0.1, 20), (1.0, 3), (0.37, 11)] {
            let f = zero_phase_lowpass(c, h).unwrap();
            assert_eq!(f.anchor(), h);
            assert_eq!(f.len(), 2 * h + 1);
            for k in 1..=h as i64 {
                assert_eq!(f.lag(k), f.lag(-k));
            }
            assert!((f.taps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(zero_phase_lowpass(0.0, 5).is_err());
        assert!(zero_phase_lowpass(1.5, 5).is_err());
    }

    #[test]
    fn lowpass_stopband() {
        let f = zero_phase_lowpass(0.5, 50).unwrap();
        let g = dtft(f.taps(), f.anchor(), PI).norm();
        assert!(to_db(g).unwrap() < -60.0, "{}", to_db(g).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let x = Sequence::new(vec![1.0 / 3.0, -2e-300, 7.25e12, 0.0], 2, 10_000.0).unwrap();
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# anchor=2 fs="));
        let y = Sequence::read_csv(buf.as_slice()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(Sequence::read_csv("no header\n1\n".as_bytes()).is_err());
        assert!(Sequence::read_csv("# anchor=0 fs=1\nabc\n".as_bytes()).is_err());
        assert!(Sequence::read_csv("# anchor=5 fs=1\n1\n".as_bytes()).is_err());
    }
}
