//! Learning a two-sided FIR approximation of the plant inverse by tracking
//! an impulse, with periodic cross-updates of the learning filter.
//!
//! The learner only talks to a [`PlantOracle`]. It measures the impulse
//! response once to build a reverse-time starting filter, then tracks a
//! delta placed in the middle of the window. Because the learned input
//! `f_j` satisfies `P f_j ≈ δ`, it is itself a better learning filter than
//! the one in use, so every `M` trials the filter is swapped for `f_j`.

use crate::error::{Error, Result};
use crate::ilc::{run_with_filter_updates, IlcConfig, IlcResult};
use crate::oracle::{probe_impulse, PlantOracle};
use crate::signal::{filter_windowed, zero_phase_lowpass, Sequence, TwoSidedFir};

/// Number of frequencies used to normalize the starting filter.
pub const NORMALIZATION_GRID: usize = 1024;

/// Optional zero-phase low-pass applied to the delta reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceShaping {
    /// Cutoff relative to Nyquist, in (0, 1].
    pub cutoff_normalized: f64,
    pub half_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseLearnConfig {
    /// Taps on each side of the window center.
    pub filter_half_length: usize,
    pub total_iterations: usize,
    /// Replace the learning filter every this many trials; `None` keeps the
    /// starting filter throughout.
    pub cross_update_period: Option<usize>,
    pub initial_gain_alpha: f64,
    pub reference_shaping: Option<ReferenceShaping>,
}

impl Default for InverseLearnConfig {
    fn default() -> Self {
        Self {
            filter_half_length: 2500,
            total_iterations: 100,
            cross_update_period: Some(10),
            initial_gain_alpha: 0.5,
            reference_shaping: None,
        }
    }
}

impl InverseLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_half_length == 0 {
            return Err(Error::InvalidParameter(
                "filter_half_length must be positive".into(),
            ));
        }
        if self.total_iterations == 0 {
            return Err(Error::InvalidParameter(
                "total_iterations must be positive".into(),
            ));
        }
        if let Some(m) = self.cross_update_period {
            if m == 0 || m > self.total_iterations {
                return Err(Error::InvalidParameter(format!(
                    "cross_update_period {m} must lie in 1..={}",
                    self.total_iterations
                )));
            }
        }
        if !(self.initial_gain_alpha > 0.0 && self.initial_gain_alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "initial_gain_alpha {} outside (0, 1]",
                self.initial_gain_alpha
            )));
        }
        Ok(())
    }

    pub fn window_length(&self) -> usize {
        2 * self.filter_half_length
    }
}

/// Reverse-time starting filter `ρ p(-k)` with
/// `ρ = alpha / max_ω |P(e^{jω})|²` over a uniform grid on `[0, π]`.
///
/// `P F = ρ |P|²` is then real with values in `(0, alpha]`, so
/// `|1 - P F| < 1` wherever `P` does not vanish.
pub fn initial_learning_filter(impulse_measurement: &Sequence, alpha: f64) -> Result<TwoSidedFir> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} outside (0, 1]"
        )));
    }
    if impulse_measurement.is_empty() {
        return Err(Error::EmptySequence);
    }
    let fir = TwoSidedFir::from_sequence(impulse_measurement)?;
    let grid: Vec<f64> = (0..NORMALIZATION_GRID)
        .map(|k| std::f64::consts::PI * k as f64 / (NORMALIZATION_GRID - 1) as f64)
        .collect();
    let peak = fir
        .frequency_response(&grid)
        .iter()
        .map(|h| h.norm_sqr())
        .fold(0.0f64, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::ZeroResponse);
    }
    Ok(fir.reversed().scaled(alpha / peak))
}

/// The tracking target: a unit impulse at the window center, optionally
/// smoothed by a zero-phase low-pass. The anchor sits on the center.
pub fn inverse_reference(config: &InverseLearnConfig, sample_rate_hz: f64) -> Result<Sequence> {
    let len = config.window_length();
    let center = config.filter_half_length;
    let delta = Sequence::delta(len, center, sample_rate_hz)?;
    match &config.reference_shaping {
        None => Ok(delta),
        Some(s) => {
            let lp = zero_phase_lowpass(s.cutoff_normalized, s.half_length)?;
            filter_windowed(&lp, &delta)
        }
    }
}

/// Learn the inverse filter. Returns the filter (lag 0 at the window
/// center) together with the tracking run that produced it.
pub fn learn_inverse<O: PlantOracle + ?Sized>(
    oracle: &mut O,
    config: &InverseLearnConfig,
) -> Result<(TwoSidedFir, IlcResult)> {
    config.validate()?;
    let len = config.window_length();
    let probe = probe_impulse(oracle, len, crate::oracle::DEFAULT_PROBE_THRESHOLD)?;
    let initial = initial_learning_filter(&probe.response, config.initial_gain_alpha)?;
    let reference = inverse_reference(config, oracle.sample_rate_hz())?;

    let ilc = IlcConfig {
        max_iterations: config.total_iterations,
        ..IlcConfig::default()
    };
    let period = config.cross_update_period;
    let result =
        run_with_filter_updates(oracle, &reference, &initial, &ilc, |j, u| match period {
            Some(m) if (j + 1) % m == 0 => TwoSidedFir::from_sequence(u).ok(),
            _ => None,
        })?;
    let filter = TwoSidedFir::from_sequence(&result.learned_input)?;
    Ok((filter, result))
}
