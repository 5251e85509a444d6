//! The pipeline stages behind each subcommand.

use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::{Context, Result};
use loopshape::ilcff::learn_inverse;
use loopshape::oracle::{probe_impulse, PlantOracle};
use loopshape::pipeline::{run_loopshaping, LoopShapeResult, ReferenceWarning};
use loopshape::reduction::{balanced_reduce, Cascade, FrequencyResponse};
use loopshape::validation::{evaluate_loop, write_step_csv, LoopEvaluation};
use loopshape::{IlcResult, RationalTf, ReductionResult, TwoSidedFir};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::artifacts::Artifacts;
use crate::config::PipelineConfig;

/// Points on the logarithmic Bode grid.
const BODE_POINTS: usize = 2000;
/// Lowest Bode frequency as a fraction of Nyquist.
const BODE_LOW: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Probe,
    LearnInverse,
    Shape,
    Reduce,
    Validate,
    Full,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Probe => "probe",
            Command::LearnInverse => "learn-inverse",
            Command::Shape => "shape",
            Command::Reduce => "reduce",
            Command::Validate => "validate",
            Command::Full => "full",
        }
    }
}

pub enum Outcome {
    Done,
    SpecFailed,
}

pub struct Invocation {
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub seedless: bool,
}

pub fn execute(command: Command, inv: &Invocation) -> Result<Outcome> {
    let (mut cfg, text) = PipelineConfig::load(&inv.config_path)?;
    if let Some(n) = inv.horizon {
        cfg.override_horizon(n)?;
    }
    cfg.validate()?;
    let out = inv
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut art = Artifacts::new(&out)?;

    let outcome = match command {
        Command::Probe => {
            probe(&cfg, &mut art)?;
            Outcome::Done
        }
        Command::LearnInverse => {
            let mut oracle = cfg.oracle()?;
            let (filter, run) = learn_inverse(oracle.as_mut(), &cfg.inverse_learn())?;
            write_inverse(&cfg, &mut art, &filter, &run)?;
            Outcome::Done
        }
        Command::Shape => {
            shape(&cfg, &mut art)?;
            Outcome::Done
        }
        Command::Reduce => {
            let shaped = shape(&cfg, &mut art)?;
            reduce(&cfg, &mut art, &shaped)?;
            Outcome::Done
        }
        Command::Validate => {
            let shaped = shape(&cfg, &mut art)?;
            let reduced = reduce(&cfg, &mut art, &shaped)?;
            validate(&cfg, &mut art, &shaped, &reduced)?
        }
        Command::Full => {
            probe(&cfg, &mut art)?;
            let shaped = shape(&cfg, &mut art)?;
            let reduced = reduce(&cfg, &mut art, &shaped)?;
            validate(&cfg, &mut art, &shaped, &reduced)?
        }
    };

    let overrides = json!({ "horizon": inv.horizon, "seedless": inv.seedless });
    let parameters = serde_json::to_value(&cfg)?;
    art.finish(
        command.name(),
        &inv.config_path,
        &text,
        &overrides,
        &parameters,
    )?;
    Ok(outcome)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> loopshape::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn probe(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<()> {
    let mut oracle = cfg.oracle()?;
    let p = probe_impulse(oracle.as_mut(), cfg.probe_length, cfg.probe_threshold)?;
    let s = p.response.samples();
    let tail_len = s.len().div_ceil(20);
    let tail = s[s.len() - tail_len..]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tail_ratio = tail / p.peak;
    println!("relative order: {}", p.relative_order);
    println!("impulse peak: {:.6e}", p.peak);
    println!("tail/peak over the last {tail_len} samples: {tail_ratio:.3e}");
    art.write("impulse.csv", &csv_bytes(|w| p.response.write_csv(w))?)?;
    art.write_json(
        "probe.json",
        &json!({
            "relative_order": p.relative_order,
            "peak": p.peak,
            "tail_ratio": tail_ratio,
            "length": s.len(),
        }),
    )
}

fn write_inverse(
    cfg: &PipelineConfig,
    art: &mut Artifacts,
    filter: &TwoSidedFir,
    run: &IlcResult,
) -> Result<()> {
    let window = cfg.inverse_learn().window_length() as f64;
    let rms = run.final_error_l2() / window.sqrt();
    println!(
        "inverse: {} trials, final error {:.3e} rms ({:.1} dB)",
        run.iterations_run,
        rms,
        run.final_error_db()
    );
    art.write(
        "inverse_fir.csv",
        &csv_bytes(|w| filter.write_csv(w, cfg.sample_rate_hz))?,
    )?;
    art.write(
        "inverse_learning_curve.csv",
        &csv_bytes(|w| run.write_learning_curve(w))?,
    )?;
    art.write_json(
        "inverse.json",
        &json!({
            "iterations": run.iterations_run,
            "final_error_l2": run.final_error_l2(),
            "final_error_rms": rms,
            "final_error_db": run.final_error_db(),
            "convergence_rate": run.convergence_rate().ok(),
            "taps": filter.len(),
            "anchor": filter.anchor(),
        }),
    )
}

fn shape(cfg: &PipelineConfig, art: &mut Artifacts) -> Result<LoopShapeResult> {
    let target = cfg.target()?;
    let mut oracle: Box<dyn PlantOracle> = cfg.oracle()?;
    let res = run_loopshaping(oracle.as_mut(), &target, &cfg.loopshape()?)?;
    write_inverse(cfg, art, &res.inverse_filter, &res.inverse_tracking)?;

    if let Some(ReferenceWarning::UnsettledTail {
        tail_ratio,
        threshold,
    }) = &res.reference.warning
    {
        eprintln!("warning: reference tail/peak {tail_ratio:.3e} exceeds {threshold:.1e}; consider a longer horizon or a frequency weight");
    }
    println!(
        "shape: relative orders plant {} target {}, controller {} taps, tracking error {:.1} dB",
        res.relative_order_plant,
        res.relative_order_target,
        res.controller_fir.len(),
        res.tracking.final_error_db()
    );
    let fs = cfg.sample_rate_hz;
    art.write(
        "controller_fir.csv",
        &csv_bytes(|w| res.controller_fir.write_csv(w, fs))?,
    )?;
    art.write(
        "tracking_curve.csv",
        &csv_bytes(|w| res.tracking.write_learning_curve(w))?,
    )?;
    art.write("weight.json", res.weight.to_json().as_bytes())?;
    art.write(
        "tracked_target.json",
        res.tracked_target.to_json().as_bytes(),
    )?;
    art.write_json(
        "shape.json",
        &json!({
            "relative_order_plant": res.relative_order_plant,
            "relative_order_target": res.relative_order_target,
            "controller_taps": res.controller_fir.len(),
            "dropped_tail_taps": res.dropped_tail_taps,
            "anticausal_energy_fraction": res.anticausal_energy_fraction,
            "reference_tail_ratio": res.reference.tail_ratio,
            "reference_warning": res.reference.warning.is_some(),
            "tracking_error_db": res.tracking.error_db_history(),
        }),
    )?;
    Ok(res)
}

/// Log-spaced frequencies from `BODE_LOW * π` to `π`.
fn bode_grid() -> Vec<f64> {
    let (lo, hi) = ((BODE_LOW * PI).ln(), PI.ln());
    (0..BODE_POINTS)
        .map(|k| (lo + (hi - lo) * k as f64 / (BODE_POINTS - 1) as f64).exp())
        .collect()
}

/// Magnitude in dB and phase in degrees, unwrapped along the grid.
fn bode_columns(resp: &[Complex64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(resp.len());
    let mut phase = 0.0;
    for (i, h) in resp.iter().enumerate() {
        let a = h.arg();
        phase = if i == 0 {
            a
        } else {
            let mut d = a - phase;
            d -= 2.0 * PI * (d / (2.0 * PI)).round();
            phase + d
        };
        out.push((20.0 * h.norm().log10(), phase.to_degrees()));
    }
    out
}

fn reduce(
    cfg: &PipelineConfig,
    art: &mut Artifacts,
    shaped: &LoopShapeResult,
) -> Result<ReductionResult> {
    let fs = cfg.sample_rate_hz;
    let red = balanced_reduce(&shaped.controller_fir, cfg.order_selection()?, fs)?;
    println!(
        "reduce: order {}, bound {:.4} ({:.2} dB), measured {:.4} ({:.2} dB)",
        red.order,
        red.error_bound,
        red.error_bound_db(),
        red.measured_grid_error,
        red.measured_grid_error_db()
    );
    let mut text = red.to_json()?;
    text.push('\n');
    art.write("reduction.json", text.as_bytes())?;
    art.write("reduced_controller.json", red.reduced.to_json().as_bytes())?;

    let grid = bode_grid();
    let mut columns = vec![
        ("c_fir", shaped.controller_fir.response(&grid)?),
        ("c_iir", red.reduced.response(&grid)?),
    ];
    if let Some(plant) = cfg.plant_model()? {
        let target = cfg.target()?;
        columns.push(("ld", target.response(&grid)?));
        let l_iir = Cascade(vec![&plant, &red.reduced, &shaped.weight]);
        columns.push((
            "l_iir",
            l_iir
                .response(&grid)
                .context("plant x reduced controller")?,
        ));
    }
    let mut csv = String::from("freq_hz");
    for (name, _) in &columns {
        csv.push_str(&format!(",{name}_db,{name}_deg"));
    }
    csv.push('\n');
    let cols: Vec<Vec<(f64, f64)>> = columns.iter().map(|(_, r)| bode_columns(r)).collect();
    for (k, w) in grid.iter().enumerate() {
        csv.push_str(&format!("{:.10e}", w * fs / (2.0 * PI)));
        for c in &cols {
            csv.push_str(&format!(",{:.10e},{:.10e}", c[k].0, c[k].1));
        }
        csv.push('\n');
    }
    art.write("bode.csv", csv.as_bytes())?;
    Ok(red)
}

#[derive(Serialize)]
struct ValidationReport<'a> {
    g_d: &'a LoopEvaluation,
    /// Absent when the plant is only reachable through trials.
    g_iir: Option<&'a LoopEvaluation>,
    pass: bool,
}

fn print_table(name: &str, ev: &LoopEvaluation) {
    println!("{name}:");
    for c in &ev.report.checks {
        let measured = c.measured.map_or("n/a".to_string(), |m| format!("{m:.6e}"));
        let verdict = if c.pass { "ok" } else { "FAIL" };
        println!(
            "  {:<28} {measured:>14} {} {:<12.6e} {verdict}",
            c.name, c.relation, c.bound
        );
    }
}

fn validate(
    cfg: &PipelineConfig,
    art: &mut Artifacts,
    shaped: &LoopShapeResult,
    reduced: &ReductionResult,
) -> Result<Outcome> {
    let v = &cfg.validation;
    let target = cfg.target()?;
    let g_d = evaluate_loop(&target, &cfg.spec, v.horizon_s, v.margin_grid).context("G_d")?;
    print_table("G_d", &g_d);
    art.write(
        "step_g_d.csv",
        &csv_bytes(|w| write_step_csv(w, &g_d.step))?,
    )?;

    let g_iir = match cfg.plant_model()? {
        Some(plant) => {
            let l: RationalTf = plant.series(&reduced.reduced)?.series(&shaped.weight)?;
            let ev = evaluate_loop(&l, &cfg.spec, v.horizon_s, v.margin_grid).context("G_IIR")?;
            print_table("G_IIR", &ev);
            art.write(
                "step_g_iir.csv",
                &csv_bytes(|w| write_step_csv(w, &ev.step))?,
            )?;
            Some(ev)
        }
        None => {
            eprintln!("note: plant model unknown; G_IIR is not evaluated");
            None
        }
    };
    let pass = g_d.report.pass && g_iir.as_ref().is_none_or(|e| e.report.pass);
    art.write_json(
        "report.json",
        &ValidationReport {
            g_d: &g_d,
            g_iir: g_iir.as_ref(),
            pass,
        },
    )?;
    println!("specs {}", if pass { "met" } else { "NOT met" });
    Ok(if pass {
        Outcome::Done
    } else {
        Outcome::SpecFailed
    })
}
