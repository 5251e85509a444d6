//! Closed-loop checks: unity feedback, step-response metrics, phase margin,
//! and comparison against a requirement set.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::RationalTf;
use crate::reduction::uniform_grid;
use crate::signal::{fmt_real, Sequence};

/// Default frequency grid for margin computation.
pub const MARGIN_GRID: usize = 16384;

/// Default step-simulation horizon.
pub const DEFAULT_HORIZON_S: f64 = 0.1;

/// An unstable closed-loop pole this close to a zero is reported as a
/// near cancellation rather than plain instability.
pub const CANCELLATION_DISTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DesignSpec {
    pub rise_time_max_s: f64,
    pub settling_time_max_s: f64,
    pub overshoot_max_fraction: f64,
    pub phase_margin_min_deg: f64,
    pub steady_state_error_max_fraction: f64,
    #[serde(default = "default_band")]
    pub settling_band_fraction: f64,
}

fn default_band() -> f64 {
    0.02
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        let bounds = [
            ("rise_time_max_s", self.rise_time_max_s),
            ("settling_time_max_s", self.settling_time_max_s),
            ("overshoot_max_fraction", self.overshoot_max_fraction),
            ("phase_margin_min_deg", self.phase_margin_min_deg),
            (
                "steady_state_error_max_fraction",
                self.steady_state_error_max_fraction,
            ),
        ];
        for (name, v) in bounds {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.settling_band_fraction > 0.0 && self.settling_band_fraction <= 0.1) {
            return Err(Error::InvalidParameter(format!(
                "settling_band_fraction {} outside (0, 0.1]",
                self.settling_band_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMetrics {
    /// 10% to 90% of the final value.
    pub rise_time_s: f64,
    /// Time after which the response stays inside the band.
    pub settling_time_s: f64,
    pub overshoot_fraction: f64,
    /// `|1 - final value|`.
    pub steady_state_error_fraction: f64,
    pub final_value: f64,
    pub phase_margin_deg: Option<f64>,
    pub gain_crossover_hz: Option<f64>,
}

/// `L / (1 + L)`.
pub fn closed_loop(loop_gain: &RationalTf) -> Result<RationalTf> {
    loop_gain.feedback_unity()
}

/// Time-domain metrics of the unit-step response of `g`. The final value
/// is the mean over the last 5% of the horizon; the band is relative to it.
pub fn step_metrics(g: &RationalTf, horizon_s: f64, band: f64) -> Result<StepMetrics> {
    Ok(step_metrics_with_response(g, horizon_s, band)?.0)
}

/// [`step_metrics`] plus the simulated response.
pub fn step_metrics_with_response(
    g: &RationalTf,
    horizon_s: f64,
    band: f64,
) -> Result<(StepMetrics, Sequence)> {
    if !(horizon_s > 0.0) {
        return Err(Error::NonPositive(horizon_s));
    }
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "band {band} outside (0, 1)"
        )));
    }
    let radius = g.spectral_radius()?;
    if radius >= 1.0 {
        return Err(Error::Unstable { magnitude: radius });
    }
    let fs = g.sample_rate_hz();
    let n = (horizon_s * fs).round() as usize;
    if n < 20 {
        return Err(Error::InvalidParameter(format!(
            "horizon of {n} samples is too short"
        )));
    }
    let y = g.step_response(n)?;
    let metrics = metrics_of_response(y.samples(), 1.0 / fs, band)?;
    Ok((metrics, y))
}

fn metrics_of_response(y: &[f64], period: f64, band: f64) -> Result<StepMetrics> {
    let n = y.len();
    let tail = n.div_ceil(20);
    let final_value = y[n - tail..].iter().sum::<f64>() / tail as f64;
    if final_value == 0.0 || !final_value.is_finite() {
        return Err(Error::NotSettled);
    }
    let s: Vec<f64> = y.iter().map(|v| v / final_value).collect();

    let first_above = |level: f64| s.iter().position(|&v| v >= level);
    let (k10, k90) = match (first_above(0.1), first_above(0.9)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NotSettled),
    };
    let rise_time_s = (k90 - k10) as f64 * period;

    let settling_index = match s.iter().rposition(|&v| (v - 1.0).abs() > band) {
        None => 0,
        Some(k) if k >= n - tail => return Err(Error::NotSettled),
        Some(k) => k + 1,
    };
    let peak = s.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));

    Ok(StepMetrics {
        rise_time_s,
        settling_time_s: settling_index as f64 * period,
        overshoot_fraction: (peak - 1.0).max(0.0),
        steady_state_error_fraction: (1.0 - final_value).abs(),
        final_value,
        phase_margin_deg: None,
        gain_crossover_hz: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margins {
    pub phase_margin_deg: f64,
    pub gain_crossover_hz: f64,
    pub gain_crossover_rad: f64,
}

fn wrap_to_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Phase margin at the first gain crossover on a uniform grid over
/// `(0, π]`, refined by bisection. Phase is unwrapped along the grid.
pub fn stability_margins(loop_gain: &RationalTf, grid_size: usize) -> Result<Margins> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter(
            "grid_size must be at least 2".into(),
        ));
    }
    let grid = uniform_grid(grid_size);
    let resp = loop_gain.freq_response(&grid)?;
    let excess: Vec<f64> = resp.iter().map(|h| h.norm() - 1.0).collect();

    let k = (0..grid.len() - 1)
        .find(|&k| excess[k] == 0.0 || (excess[k] > 0.0) != (excess[k + 1] > 0.0))
        .ok_or(Error::NoCrossover)?;

    let mag_excess = |w: f64| loop_gain.eval(Complex64::from_polar(1.0, w)).norm() - 1.0;
    let (mut lo, mut hi) = (grid[k], grid[k + 1]);
    let crossover = if excess[k] == 0.0 {
        lo
    } else {
        let lo_sign = excess[k] > 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (mag_excess(mid) > 0.0) == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let mut phase = resp[0].arg();
    for h in &resp[1..=k] {
        phase += wrap_to_pi(h.arg() - phase);
    }
    let at = loop_gain.eval(Complex64::from_polar(1.0, crossover));
    phase += wrap_to_pi(at.arg() - phase);

    let fs = loop_gain.sample_rate_hz();
    Ok(Margins {
        phase_margin_deg: 180.0 + phase.to_degrees(),
        gain_crossover_hz: crossover * fs / (2.0 * PI),
        gain_crossover_rad: crossover,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecCheck {
    pub name: &'static str,
    pub measured: Option<f64>,
    pub bound: f64,
    /// `"<="` or `">="`.
    pub relation: &'static str,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecReport {
    pub checks: Vec<SpecCheck>,
    pub pass: bool,
}

/// Compare each metric with its bound. Comparisons are non-strict; a
/// missing phase margin fails.
pub fn check_specs(metrics: &StepMetrics, spec: &DesignSpec) -> SpecReport {
    let at_most = |name, measured: f64, bound: f64| SpecCheck {
        name,
        measured: Some(measured),
        bound,
        relation: "<=",
        pass: measured <= bound,
    };
    let checks = vec![
        at_most("rise_time_s", metrics.rise_time_s, spec.rise_time_max_s),
        at_most(
            "settling_time_s",
            metrics.settling_time_s,
            spec.settling_time_max_s,
        ),
        at_most(
            "overshoot_fraction",
            metrics.overshoot_fraction,
            spec.overshoot_max_fraction,
        ),
        SpecCheck {
            name: "phase_margin_deg",
            measured: metrics.phase_margin_deg,
            bound: spec.phase_margin_min_deg,
            relation: ">=",
            pass: metrics
                .phase_margin_deg
                .is_some_and(|pm| pm >= spec.phase_margin_min_deg),
        },
        at_most(
            "steady_state_error_fraction",
            metrics.steady_state_error_fraction,
            spec.steady_state_error_max_fraction,
        ),
    ];
    let pass = checks.iter().all(|c| c.pass);
    SpecReport { checks, pass }
}

/// Everything known about one loop gain.
#[derive(Debug, Clone, Serialize)]
pub struct LoopEvaluation {
    #[serde(skip)]
    pub closed_loop: RationalTf,
    #[serde(skip)]
    pub step: Sequence,
    pub closed_loop_poles: Vec<[f64; 2]>,
    pub metrics: StepMetrics,
    pub report: SpecReport,
}

/// Close the loop, simulate the step, measure margins, check the spec.
pub fn evaluate_loop(
    loop_gain: &RationalTf,
    spec: &DesignSpec,
    horizon_s: f64,
    grid_size: usize,
) -> Result<LoopEvaluation> {
    spec.validate()?;
    let g = closed_loop(loop_gain)?;
    let poles = g.poles()?;
    if let Some(p) = poles
        .iter()
        .copied()
        .filter(|p| p.norm() >= 1.0)
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
    {
        let distance = g
            .zeros()?
            .iter()
            .map(|z| (z - p).norm())
            .fold(f64::INFINITY, f64::min);
        if distance < CANCELLATION_DISTANCE {
            return Err(Error::NearCancellation {
                magnitude: p.norm(),
                distance,
            });
        }
    }
    let (mut metrics, step) =
        step_metrics_with_response(&g, horizon_s, spec.settling_band_fraction)?;
    let margins = stability_margins(loop_gain, grid_size)?;
    metrics.phase_margin_deg = Some(margins.phase_margin_deg);
    metrics.gain_crossover_hz = Some(margins.gain_crossover_hz);
    let report = check_specs(&metrics, spec);
    let closed_loop_poles = poles.iter().map(|p| [p.re, p.im]).collect();
    Ok(LoopEvaluation {
        closed_loop: g,
        step,
        closed_loop_poles,
        metrics,
        report,
    })
}

/// `t_s,y` rows, time measured from the first sample.
pub fn write_step_csv<W: Write>(mut w: W, response: &Sequence) -> Result<()> {
    writeln!(w, "t_s,y")?;
    let period = response.sample_period_s();
    for (k, v) in response.samples().iter().enumerate() {
        writeln!(w, "{},{}", fmt_real(k as f64 * period), fmt_real(*v))?;
    }
    Ok(())
}
