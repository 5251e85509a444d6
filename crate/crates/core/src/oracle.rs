//! Black-box plant access.
//!
//! Learning code only ever sees a [`PlantOracle`]: submit an input trial,
//! get the measured output back. Nothing downstream can read plant
//! coefficients, which is what makes the design procedure model-free.
//!
//! The external-process protocol lets any program act as the plant. The
//! child reads requests on stdin and answers on stdout:
//!
//! ```text
//! TRIAL <n>
//! <sample 1>
//! ...
//! <sample n>
//! ```
//!
//! and must reply with exactly `n` decimal samples, one per line.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use crate::error::{Error, Result};
use crate::lti::RationalTf;
use crate::signal::{fmt_real, Sequence};

/// Deterministic trial executor. Trials are serialized through `&mut self`.
pub trait PlantOracle {
    /// Run one trial. The output has the same support and sample rate as
    /// the input.
    fn run_trial(&mut self, input: &Sequence) -> Result<Sequence>;

    /// Number of trials executed so far.
    fn trials(&self) -> usize;

    fn sample_rate_hz(&self) -> f64;
}

impl<T: PlantOracle + ?Sized> PlantOracle for &mut T {
    fn run_trial(&mut self, input: &Sequence) -> Result<Sequence> {
        (**self).run_trial(input)
    }
    fn trials(&self) -> usize {
        (**self).trials()
    }
    fn sample_rate_hz(&self) -> f64 {
        (**self).sample_rate_hz()
    }
}

/// In-process plant backed by a rational transfer function. The model is
/// private; callers only get trial outputs.
pub struct SimulatedPlant {
    tf: RationalTf,
    trials: usize,
}

impl SimulatedPlant {
    pub fn new(tf: RationalTf) -> Result<Self> {
        if !tf.is_proper() {
            return Err(Error::Improper {
                num_degree: tf.num_degree(),
                den_degree: tf.den_degree(),
            });
        }
        Ok(Self { tf, trials: 0 })
    }
}

impl PlantOracle for SimulatedPlant {
    fn run_trial(&mut self, input: &Sequence) -> Result<Sequence> {
        self.trials += 1;
        self.tf.simulate(input)
    }

    fn trials(&self) -> usize {
        self.trials
    }

    fn sample_rate_hz(&self) -> f64 {
        self.tf.sample_rate_hz()
    }
}

/// Plant living in a child process that speaks the trial protocol.
pub struct ProcessPlant {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    sample_rate_hz: f64,
    trials: usize,
}

impl ProcessPlant {
    pub fn spawn<S: AsRef<std::ffi::OsStr>>(
        program: S,
        args: &[String],
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::NonPositive(sample_rate_hz));
        }
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Process(format!("spawn failed: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| Error::Process("no stdin".into()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::Process("no stdout".into()))?;
        Ok(Self {
            child,
            stdin: BufWriter::new(stdin),
            stdout: BufReader::new(stdout),
            sample_rate_hz,
            trials: 0,
        })
    }
}

impl PlantOracle for ProcessPlant {
    fn run_trial(&mut self, input: &Sequence) -> Result<Sequence> {
        if input.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::SampleRateMismatch(
                self.sample_rate_hz,
                input.sample_rate_hz(),
            ));
        }
        self.trials += 1;
        let io = |e: std::io::Error| Error::Process(format!("pipe: {e}"));
        writeln!(self.stdin, "TRIAL {}", input.len()).map_err(io)?;
        for v in input.samples() {
            writeln!(self.stdin, "{}", fmt_real(*v)).map_err(io)?;
        }
        self.stdin.flush().map_err(io)?;

        let mut out = Vec::with_capacity(input.len());
        let mut line = String::new();
        while out.len() < input.len() {
            line.clear();
            let n = self.stdout.read_line(&mut line).map_err(io)?;
            if n == 0 {
                return Err(Error::OracleLengthMismatch {
                    expected: input.len(),
                    got: out.len(),
                });
            }
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            out.push(
                t.parse::<f64>()
                    .map_err(|e| Error::Process(format!("bad sample {t:?}: {e}")))?,
            );
        }
        input.with_samples(out)
    }

    fn trials(&self) -> usize {
        self.trials
    }

    fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }
}

impl Drop for ProcessPlant {
    fn drop(&mut self) {
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serve the trial protocol for `tf` until `input` is exhausted.
pub fn serve_trials<R: BufRead, W: Write>(tf: &RationalTf, input: R, mut output: W) -> Result<()> {
    let mut lines = input.lines();
    while let Some(line) = lines.next() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let n: usize = t
            .strip_prefix("TRIAL ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected `TRIAL <n>`, got {t:?}")))?;
        let mut samples = Vec::with_capacity(n);
        while samples.len() < n {
            let l = lines
                .next()
                .ok_or_else(|| Error::Parse("trial truncated".into()))??;
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            samples.push(
                l.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("sample {l:?}: {e}")))?,
            );
        }
        let y = tf.simulate_slice(&samples);
        for v in y {
            writeln!(output, "{}", fmt_real(v))?;
        }
        output.flush()?;
    }
    Ok(())
}

pub const DEFAULT_PROBE_THRESHOLD: f64 = 1e-8;

/// Result of kicking the plant with a unit impulse at time zero.
#[derive(Debug, Clone)]
pub struct ImpulseProbe {
    pub response: Sequence,
    pub relative_order: usize,
    pub peak: f64,
}

/// Relative order as the index of the first response sample exceeding
/// `threshold * max|y|` after a unit impulse at time zero.
pub fn probe_relative_order<O: PlantOracle + ?Sized>(
    oracle: &mut O,
    length: usize,
    threshold: f64,
) -> Result<usize> {
    Ok(probe_impulse(oracle, length, threshold)?.relative_order)
}

pub fn probe_impulse<O: PlantOracle + ?Sized>(
    oracle: &mut O,
    length: usize,
    threshold: f64,
) -> Result<ImpulseProbe> {
    if length < 2 {
        return Err(Error::InvalidParameter(
            "probe length must be at least 2".into(),
        ));
    }
    let input = Sequence::delta(length, 0, oracle.sample_rate_hz())?;
    let response = oracle.run_trial(&input)?;
    if response.len() != length {
        return Err(Error::OracleLengthMismatch {
            expected: length,
            got: response.len(),
        });
    }
    let peak = response
        .samples()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::ZeroResponse);
    }
    let relative_order = response
        .samples()
        .iter()
        .position(|v| v.abs() > threshold * peak)
        .unwrap_or(0);
    Ok(ImpulseProbe {
        response,
        relative_order,
        peak,
    })
}
