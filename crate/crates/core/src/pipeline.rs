//! Loop shaping as impulse-response tracking.
//!
//! If `C` is the controller and `P` the plant, the loop gain `P C` equals the
//! target `L_d` exactly when `P c = l_d` sample by sample, with `c` and `l_d`
//! the impulse responses. So the controller taps are learned by ILC with
//! `l_d` as the reference and the learned plant inverse as the learning
//! filter, using nothing but plant trials.
//!
//! Slow poles of `L_d` would need a very long window to settle. They can be
//! moved into a weight `H`, so that ILC only has to match the fast part
//! `L_d' = L_d / H`; the controller is then `H c'`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ilc::{ilc_run, IlcConfig, IlcResult};
use crate::ilcff::{learn_inverse, InverseLearnConfig};
use crate::lti::RationalTf;
use crate::oracle::{probe_relative_order, PlantOracle, DEFAULT_PROBE_THRESHOLD};
use crate::poly;
use crate::signal::{Sequence, TwoSidedFir};

/// Largest tolerated share of controller energy at negative lags.
pub const ANTICAUSAL_ENERGY_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopShapeConfig {
    /// Reference length `N`.
    pub horizon: usize,
    /// Trailing controller taps below this fraction of the peak are cut.
    pub truncation_threshold: f64,
    /// Poles of `L_d` at or beyond this radius go into the weight `H`;
    /// `None` tracks `L_d` directly.
    pub slow_pole_radius: Option<f64>,
    /// Zero samples placed before time zero so that any anticausal
    /// controller energy shows up instead of being cut off.
    pub anticausal_margin: usize,
    pub probe_length: usize,
    pub probe_threshold: f64,
    pub inverse_learn: InverseLearnConfig,
    pub ilc: IlcConfig,
}

impl Default for LoopShapeConfig {
    fn default() -> Self {
        Self {
            horizon: 5000,
            truncation_threshold: 1e-10,
            slow_pole_radius: Some(0.995),
            anticausal_margin: 8,
            probe_length: 256,
            probe_threshold: DEFAULT_PROBE_THRESHOLD,
            inverse_learn: InverseLearnConfig::default(),
            ilc: IlcConfig::default(),
        }
    }
}

impl LoopShapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || !self.horizon.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be positive and even",
                self.horizon
            )));
        }
        if !(self.truncation_threshold > 0.0 && self.truncation_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation_threshold {} outside (0, 1)",
                self.truncation_threshold
            )));
        }
        if let Some(r) = self.slow_pole_radius {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "slow_pole_radius {r} outside (0, 1)"
                )));
            }
        }
        if self.probe_length < 2 {
            return Err(Error::InvalidParameter(
                "probe_length must be at least 2".into(),
            ));
        }
        if self.ilc.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        self.inverse_learn.validate()
    }
}

/// Probe the plant's relative order and compare it with the target's.
/// Equal orders are accepted.
pub fn check_relative_order<O: PlantOracle + ?Sized>(
    oracle: &mut O,
    target: &RationalTf,
    probe_length: usize,
    probe_threshold: f64,
) -> Result<(usize, usize)> {
    if !target.is_proper() {
        return Err(Error::Improper {
            num_degree: target.num_degree(),
            den_degree: target.den_degree(),
        });
    }
    if target.is_zero() {
        return Err(Error::InvalidParameter("desired loop gain is zero".into()));
    }
    let plant_order = probe_relative_order(oracle, probe_length, probe_threshold)?;
    let target_order = target.relative_order() as usize;
    if target_order < plant_order {
        return Err(Error::RelativeOrder {
            plant_order,
            target_order,
        });
    }
    Ok((plant_order, target_order))
}

struct PoleSplit {
    lead: f64,
    slow: Vec<Complex64>,
    fast: Vec<Complex64>,
}

fn partition_poles(target: &RationalTf, radius: f64) -> Result<PoleSplit> {
    if !target.is_proper() {
        return Err(Error::Improper {
            num_degree: target.num_degree(),
            den_degree: target.den_degree(),
        });
    }
    let (slow, fast) = target
        .poles()?
        .into_iter()
        .partition(|p: &Complex64| p.norm() >= radius);
    Ok(PoleSplit {
        lead: target.den()[0],
        slow,
        fast,
    })
}

/// Move every pole with `|p| >= radius` into `H = 1 / Π (z - p)`, leaving
/// `L_d' = L_d / H`. If that makes `L_d'` improper by `n`, both factors are
/// shifted: `L_d' z^-n` and `H z^n`.
pub fn split_frequency_weight(
    target: &RationalTf,
    radius: f64,
) -> Result<(RationalTf, RationalTf)> {
    let PoleSplit { lead, slow, fast } = partition_poles(target, radius)?;
    let fs = target.sample_rate_hz();
    if slow.is_empty() {
        return Ok((RationalTf::identity(fs)?, target.clone()));
    }
    let num = target.num().to_vec();
    let mut den = poly::scale(&poly::from_roots(&fast), lead);
    let mut h_num = vec![1.0];
    let excess = poly::degree(&num) as i64 - poly::degree(&den) as i64;
    if excess > 0 {
        den = poly::shift_up(&den, excess as usize);
        h_num = poly::shift_up(&h_num, excess as usize);
    }
    let h = RationalTf::new(h_num, poly::from_roots(&slow), fs)?;
    Ok((h, RationalTf::new(num, den, fs)?))
}

/// Like [`split_frequency_weight`], but pads `H` with one zero at the origin
/// per slow pole so `H` is biproper and `L_d'` keeps the relative order of
/// `L_d`. The controller learned against `L_d'` then stays causal whenever
/// it is causal for `L_d`.
pub fn split_frequency_weight_matched(
    target: &RationalTf,
    radius: f64,
) -> Result<(RationalTf, RationalTf)> {
    let PoleSplit { lead, slow, fast } = partition_poles(target, radius)?;
    let fs = target.sample_rate_hz();
    if slow.is_empty() {
        return Ok((RationalTf::identity(fs)?, target.clone()));
    }
    let s = slow.len();
    let h = RationalTf::new(poly::shift_up(&[1.0], s), poly::from_roots(&slow), fs)?;
    let den = poly::shift_up(&poly::scale(&poly::from_roots(&fast), lead), s);
    Ok((h, RationalTf::new(target.num().to_vec(), den, fs)?))
}

/// How well the reference settles inside the window.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceWarning {
    /// The last 5% of the reference still exceeds `threshold * peak`.
    UnsettledTail { tail_ratio: f64, threshold: f64 },
}

#[derive(Debug, Clone)]
pub struct ReferenceReport {
    /// Impulse response over `N` samples, anchored at time zero.
    pub reference: Sequence,
    /// `max |r(k)|` over the last 5% of the window, relative to `max |r|`.
    pub tail_ratio: f64,
    pub warning: Option<ReferenceWarning>,
}

/// The impulse response of `L_d'` over `N` samples, with a settling check.
pub fn build_reference(
    target: &RationalTf,
    horizon: usize,
    truncation_threshold: f64,
) -> Result<ReferenceReport> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if !target.is_proper() {
        return Err(Error::Improper {
            num_degree: target.num_degree(),
            den_degree: target.den_degree(),
        });
    }
    let radius = target.spectral_radius()?;
    if radius >= 1.0 {
        return Err(Error::UnsettledReference { magnitude: radius });
    }
    let reference = target.impulse_response(horizon)?;
    let s = reference.samples();
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::ZeroResponse);
    }
    let tail_len = horizon.div_ceil(20);
    let tail = s[horizon - tail_len..]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tail_ratio = tail / peak;
    let warning = (tail_ratio > truncation_threshold).then_some(ReferenceWarning::UnsettledTail {
        tail_ratio,
        threshold: truncation_threshold,
    });
    Ok(ReferenceReport {
        reference,
        tail_ratio,
        warning,
    })
}

#[derive(Debug, Clone)]
pub struct LoopShapeResult {
    /// Learned `c'(k)`, causal, lag 0 first.
    pub controller_fir: TwoSidedFir,
    /// `H`; the identity when no split was made.
    pub weight: RationalTf,
    /// `L_d'`, the part of the target that was tracked.
    pub tracked_target: RationalTf,
    pub tracking: IlcResult,
    pub inverse_filter: TwoSidedFir,
    pub inverse_tracking: IlcResult,
    pub relative_order_plant: usize,
    pub relative_order_target: usize,
    pub reference: ReferenceReport,
    /// Energy share at negative lags before those taps were removed.
    pub anticausal_energy_fraction: f64,
    /// Trailing taps removed (unobservable plus below threshold).
    pub dropped_tail_taps: usize,
}

/// The full learning path: probe, learn the inverse, split, track.
pub fn run_loopshaping<O: PlantOracle + ?Sized>(
    oracle: &mut O,
    target: &RationalTf,
    config: &LoopShapeConfig,
) -> Result<LoopShapeResult> {
    config.validate()?;
    if target.sample_rate_hz() != oracle.sample_rate_hz() {
        return Err(Error::SampleRateMismatch(
            oracle.sample_rate_hz(),
            target.sample_rate_hz(),
        ));
    }
    let (plant_order, target_order) =
        check_relative_order(oracle, target, config.probe_length, config.probe_threshold)?;

    let (inverse_filter, inverse_tracking) = learn_inverse(oracle, &config.inverse_learn)?;

    let (weight, tracked_target) = match config.slow_pole_radius {
        Some(r) => split_frequency_weight_matched(target, r)?,
        None => (
            RationalTf::identity(target.sample_rate_hz())?,
            target.clone(),
        ),
    };

    let reference = build_reference(&tracked_target, config.horizon, config.truncation_threshold)?;
    let margin = config.anticausal_margin;
    let mut padded = vec![0.0; margin];
    padded.extend_from_slice(reference.reference.samples());
    let padded = Sequence::new(padded, margin, oracle.sample_rate_hz())?;

    let tracking = ilc_run(oracle, &padded, &inverse_filter, &config.ilc)?;

    let learned = TwoSidedFir::from_sequence(&tracking.learned_input)?;
    let anticausal_energy_fraction = learned.anticausal_energy_fraction();
    if anticausal_energy_fraction > ANTICAUSAL_ENERGY_LIMIT {
        return Err(Error::AnticausalEnergy {
            fraction: anticausal_energy_fraction,
        });
    }
    let causal = learned.causal_taps();
    // the last `plant_order` inputs only reach the output after the window
    // closes, so ILC never sees their effect
    let observable = &causal[..causal.len().saturating_sub(plant_order).max(1)];
    let controller_fir = truncate_tail(observable, config.truncation_threshold)?;
    let dropped_tail_taps = causal.len() - controller_fir.len();

    Ok(LoopShapeResult {
        controller_fir,
        weight,
        tracked_target,
        tracking,
        inverse_filter,
        inverse_tracking,
        relative_order_plant: plant_order,
        relative_order_target: target_order,
        reference,
        anticausal_energy_fraction,
        dropped_tail_taps,
    })
}

/// Drop trailing taps smaller than `threshold * max|tap|`. At least one tap
/// is kept.
pub fn truncate_tail(taps: &[f64], threshold: f64) -> Result<TwoSidedFir> {
    let peak = taps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep = taps
        .iter()
        .rposition(|v| v.abs() >= threshold * peak && *v != 0.0)
        .map_or(1, |i| i + 1);
    TwoSidedFir::new(taps[..keep].to_vec(), 0)
}

/// `c = H c'` over the support of `c'`. An identity weight returns `c'`
/// unchanged.
pub fn reconstruct_controller(c_prime: &TwoSidedFir, weight: &RationalTf) -> Result<TwoSidedFir> {
    if !weight.is_proper() {
        return Err(Error::Improper {
            num_degree: weight.num_degree(),
            den_degree: weight.den_degree(),
        });
    }
    if weight.num() == weight.den() {
        return Ok(c_prime.clone());
    }
    TwoSidedFir::new(weight.simulate_slice(c_prime.taps()), c_prime.anchor())
}
