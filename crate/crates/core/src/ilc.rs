//! The first-order iterative learning loop
//!
//! ```text
//! u_0     = F r
//! u_{j+1} = u_j + F (r - y_j),   y_j = plant(u_j)
//! ```
//!
//! run over a finite trial window. Filtered signals are cut back to the
//! reference support after every application of `F`, so every iterate has
//! the length of the reference.

use std::io::Write;

use crate::error::{Error, Result};
use crate::oracle::PlantOracle;
use crate::signal::{filter_windowed, Sequence, TwoSidedFir};

/// Errors below this fraction of `||r||` are treated as round-off when
/// checking for divergence. Long learning filters with high gain settle
/// into a noise floor around `1e-11 ||r||` where the error jitters by more
/// than 10x from trial to trial.
pub const DIVERGENCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IlcConfig {
    pub max_iterations: usize,
    /// Stop once `20 log10(||e|| / ||r||)` drops below this.
    pub stop_error_db: f64,
    /// Keep every error signal `e_j`, not just its norm.
    pub record_history: bool,
}

impl Default for IlcConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            stop_error_db: -300.0,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IlcResult {
    /// The input of the last trial.
    pub learned_input: Sequence,
    /// The plant response to `learned_input`.
    pub final_output: Sequence,
    /// `||e_j||_2` for every trial, in order.
    pub error_l2_history: Vec<f64>,
    pub iterations_run: usize,
    pub reference_l2: f64,
    /// `e_j` for every trial; empty unless `record_history` was set.
    pub error_signals: Vec<Sequence>,
}

impl IlcResult {
    /// Error relative to the reference, in dB, per trial.
    pub fn error_db_history(&self) -> Vec<f64> {
        self.error_l2_history
            .iter()
            .map(|e| relative_db(*e, self.reference_l2))
            .collect()
    }

    pub fn final_error_l2(&self) -> f64 {
        self.error_l2_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_error_db(&self) -> f64 {
        relative_db(self.final_error_l2(), self.reference_l2)
    }

    /// Empirical contraction factor of the whole run, ignoring entries
    /// below `1e-13 * ||r||`.
    pub fn convergence_rate(&self) -> Result<f64> {
        empirical_convergence_rate(&self.error_l2_history, 1e-13 * self.reference_l2)
    }

    /// `iteration,error_l2,error_db` rows; `error_db` is relative to the
    /// reference norm.
    pub fn write_learning_curve<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,error_l2,error_db")?;
        for (j, (e, db)) in self
            .error_l2_history
            .iter()
            .zip(self.error_db_history())
            .enumerate()
        {
            writeln!(w, "{j},{e:.16e},{db:.6}")?;
        }
        Ok(())
    }
}

fn relative_db(e: f64, reference: f64) -> f64 {
    let r = if reference > 0.0 { reference } else { 1.0 };
    20.0 * (e / r).log10()
}

/// Run the learning loop with a fixed learning filter.
pub fn ilc_run<O: PlantOracle + ?Sized>(
    oracle: &mut O,
    reference: &Sequence,
    learning_filter: &TwoSidedFir,
    config: &IlcConfig,
) -> Result<IlcResult> {
    run_with_filter_updates(oracle, reference, learning_filter, config, |_, _| None)
}

/// The learning loop with a hook that may swap the learning filter after
/// each trial. `update(j, u_j)` runs after trial `j` has been measured and
/// before `u_{j+1}` is formed.
pub(crate) fn run_with_filter_updates<O, U>(
    oracle: &mut O,
    reference: &Sequence,
    learning_filter: &TwoSidedFir,
    config: &IlcConfig,
    mut update: U,
) -> Result<IlcResult>
where
    O: PlantOracle + ?Sized,
    U: FnMut(usize, &Sequence) -> Option<TwoSidedFir>,
{
    if reference.is_empty() {
        return Err(Error::EmptySequence);
    }
    if config.max_iterations == 0 {
        return Err(Error::InvalidParameter(
            "max_iterations must be at least 1".into(),
        ));
    }
    let reference_l2 = reference.l2_norm();
    let floor = DIVERGENCE_FLOOR
        * if reference_l2 > 0.0 {
            reference_l2
        } else {
            1.0
        };

    let mut filter = learning_filter.clone();
    let mut input = filter_windowed(&filter, reference)?;
    check_finite(&input, 0)?;

    let mut history = Vec::with_capacity(config.max_iterations);
    let mut signals = Vec::new();
    let mut minimum = f64::INFINITY;
    let mut output;

    let mut j = 0;
    loop {
        output = oracle.run_trial(&input)?;
        if output.len() != input.len() {
            return Err(Error::OracleLengthMismatch {
                expected: input.len(),
                got: output.len(),
            });
        }
        check_finite(&output, j)?;
        let error = reference.sub(&output)?;
        let e = error.l2_norm();
        history.push(e);
        if config.record_history {
            signals.push(error.clone());
        }

        if e > 10.0 * minimum && e > floor {
            return Err(Error::Diverged {
                iteration: j,
                error: e,
                minimum,
            });
        }
        minimum = minimum.min(e);

        if relative_db(e, reference_l2) < config.stop_error_db || j + 1 == config.max_iterations {
            break;
        }
        if let Some(f) = update(j, &input) {
            filter = f;
        }
        input = input.add(&filter_windowed(&filter, &error)?)?;
        j += 1;
        check_finite(&input, j)?;
    }

    Ok(IlcResult {
        learned_input: input,
        final_output: output,
        iterations_run: history.len(),
        error_l2_history: history,
        reference_l2,
        error_signals: signals,
    })
}

fn check_finite(x: &Sequence, iteration: usize) -> Result<()> {
    if x.samples().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration })
    }
}

/// Geometric mean of the successive ratios `e_{j+1} / e_j`, taken while
/// `e_j` stays above `floor`. A zero error after a usable entry yields 0.
pub fn empirical_convergence_rate(history: &[f64], floor: f64) -> Result<f64> {
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for pair in history.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if !(a > floor) {
            break;
        }
        if b <= 0.0 {
            return Ok(0.0);
        }
        log_sum += (b / a).ln();
        count += 1;
        if !(b > floor) {
            break;
        }
    }
    if count == 0 {
        return Err(Error::TooFewEntries);
    }
    Ok((log_sum / count as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::RationalTf;
    use crate::oracle::SimulatedPlant;

    const FS: f64 = 1000.0;

    fn oracle(tf: RationalTf) -> SimulatedPlant {
        SimulatedPlant::new(tf).unwrap()
    }

    fn bump(len: usize) -> Sequence {
        let s = (0..len)
            .map(|k| {
                let t = k as f64 / len as f64;
                (std::f64::consts::PI * t).sin().powi(2)
            })
            .collect();
        Sequence::new(s, 0, FS).unwrap()
    }

    #[test]
    fn identity_plant_converges_at_once() {
        let mut p = oracle(RationalTf::identity(FS).unwrap());
        let r = bump(40);
        let res = ilc_run(&mut p, &r, &TwoSidedFir::identity(), &IlcConfig::default()).unwrap();
        assert_eq!(res.error_l2_history[0], 0.0);
        assert_eq!(res.iterations_run, res.error_l2_history.len());
    }

    #[test]
    fn exact_inverse_of_delay() {
        let d = 3;
        let mut p = oracle(RationalTf::delay(d, FS).unwrap());
        // keep the reference clear of the first d samples so it is reachable
        let mut s = vec![0.0; 50];
        s[10..40].copy_from_slice(bump(30).samples());
        let r = Sequence::new(s, 0, FS).unwrap();
        let res = ilc_run(&mut p, &r, &TwoSidedFir::advance(d), &IlcConfig::default()).unwrap();
        assert!(res.error_l2_history[0] == 0.0);
        assert!(res.error_l2_history.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn scalar_contraction_rate() {
        let mut p = oracle(RationalTf::gain(2.0, FS).unwrap());
        let r = bump(20);
        let cfg = IlcConfig {
            max_iterations: 12,
            ..IlcConfig::default()
        };
        let res = ilc_run(&mut p, &r, &TwoSidedFir::gain(0.25), &cfg).unwrap();
        // |1 - p f| = 0.5
        assert!((res.convergence_rate().unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn convergence_rate_examples() {
        assert!((empirical_convergence_rate(&[1.0, 0.5, 0.25], 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(empirical_convergence_rate(&[1.0, 0.0], 1e-13).unwrap(), 0.0);
        assert!(matches!(
            empirical_convergence_rate(&[1.0], 0.0),
            Err(Error::TooFewEntries)
        ));
        assert!(matches!(
            empirical_convergence_rate(&[1e-20, 1e-21], 1e-13),
            Err(Error::TooFewEntries)
        ));
        // entries after the floor are numerical noise and ignored
        let r = empirical_convergence_rate(&[1.0, 0.1, 1e-14, 5e-14], 1e-13).unwrap();
        assert!((r - (0.1f64 * 1e-13).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stop_threshold_ends_early() {
        let mut p = oracle(RationalTf::gain(2.0, FS).unwrap());
        let r = bump(20);
        let cfg = IlcConfig {
            max_iterations: 50,
            stop_error_db: -20.0,
            record_history: true,
        };
        let res = ilc_run(&mut p, &r, &TwoSidedFir::gain(0.25), &cfg).unwrap();
        // e_j = 0.5^(j + 1) ||r||, first below 0.1 ||r|| at j = 3
        assert_eq!(res.iterations_run, 4);
        assert_eq!(res.error_signals.len(), 4);
        assert!(res.final_error_db() < -20.0);
    }

    #[test]
    fn divergence_is_reported() {
        let mut p = oracle(RationalTf::gain(2.0, FS).unwrap());
        let r = bump(20);
        let cfg = IlcConfig {
            max_iterations: 50,
            ..IlcConfig::default()
        };
        // |1 - 2 * 1.5| = 2
        let err = ilc_run(&mut p, &r, &TwoSidedFir::gain(1.5), &cfg).unwrap_err();
        assert!(
            matches!(err, Error::Diverged { iteration: 4, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn bad_inputs() {
        let mut p = oracle(RationalTf::identity(FS).unwrap());
        let empty = Sequence::new(vec![], 0, FS).unwrap();
        assert!(ilc_run(
            &mut p,
            &empty,
            &TwoSidedFir::identity(),
            &IlcConfig::default()
        )
        .is_err());
        let cfg = IlcConfig {
            max_iterations: 0,
            ..IlcConfig::default()
        };
        assert!(ilc_run(&mut p, &bump(4), &TwoSidedFir::identity(), &cfg).is_err());
    }

    #[test]
    fn non_finite_iterate_is_reported() {
        let mut p = oracle(RationalTf::identity(FS).unwrap());
        let f = TwoSidedFir::gain(f64::INFINITY);
        let err = ilc_run(&mut p, &bump(8), &f, &IlcConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { iteration: 0 }));
    }

    struct ShortOracle;
    impl PlantOracle for ShortOracle {
        fn run_trial(&mut self, input: &Sequence) -> Result<Sequence> {
            Sequence::new(input.samples()[1..].to_vec(), 0, input.sample_rate_hz())
        }
        fn trials(&self) -> usize {
            0
        }
        fn sample_rate_hz(&self) -> f64 {
            FS
        }
    }

    #[test]
    fn oracle_length_mismatch() {
        let err = ilc_run(
            &mut ShortOracle,
            &bump(8),
            &TwoSidedFir::identity(),
            &IlcConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::OracleLengthMismatch {
                expected: 8,
                got: 7
            }
        ));
    }

    #[test]
    fn learning_curve_csv() {
        let mut p = oracle(RationalTf::gain(2.0, FS).unwrap());
        let cfg = IlcConfig {
            max_iterations: 3,
            ..IlcConfig::default()
        };
        let res = ilc_run(&mut p, &bump(20), &TwoSidedFir::gain(0.25), &cfg).unwrap();
        let mut buf = Vec::new();
        res.write_learning_curve(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "iteration,error_l2,error_db");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("1,"));
    }
}
