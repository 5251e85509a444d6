//! JSON pipeline configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use loopshape::ilc::IlcConfig;
use loopshape::ilcff::{InverseLearnConfig, ReferenceShaping};
use loopshape::oracle::{PlantOracle, ProcessPlant, SimulatedPlant};
use loopshape::pipeline::LoopShapeConfig;
use loopshape::reduction::{OrderSelection, DEFAULT_ENERGY_FRACTION};
use loopshape::validation::{DesignSpec, DEFAULT_HORIZON_S, MARGIN_GRID};
use loopshape::RationalTf;
use serde::{Deserialize, Serialize};

/// Coefficients in descending powers of `z`. The sample rate defaults to
/// the pipeline's.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfConfig {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_hz: Option<f64>,
}

impl TfConfig {
    fn build(&self, fs: f64, what: &str) -> Result<RationalTf> {
        if let Some(own) = self.fs_hz {
            if own != fs {
                bail!("{what}: fs_hz {own} differs from sample_rate_hz {fs}");
            }
        }
        RationalTf::new(self.num.clone(), self.den.clone(), fs).with_context(|| what.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSource {
    /// Simulated in process from a known model.
    Tf(TfConfig),
    /// A child process speaking the trial protocol.
    Process {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingConfig {
    pub cutoff_normalized: f64,
    pub half_length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    pub filter_half_length: usize,
    pub total_iterations: usize,
    pub cross_update_period: Option<usize>,
    pub initial_gain_alpha: f64,
    pub reference_shaping: Option<ShapingConfig>,
}

impl Default for InverseConfig {
    fn default() -> Self {
        let d = InverseLearnConfig::default();
        Self {
            filter_half_length: d.filter_half_length,
            total_iterations: d.total_iterations,
            cross_update_period: d.cross_update_period,
            initial_gain_alpha: d.initial_gain_alpha,
            reference_shaping: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub max_iterations: usize,
    pub stop_error_db: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        let d = IlcConfig::default();
        Self {
            max_iterations: d.max_iterations,
            stop_error_db: d.stop_error_db,
        }
    }
}

/// Either a fixed order or an energy fraction; a fixed order wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    pub order: Option<usize>,
    pub energy_fraction: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            order: None,
            energy_fraction: DEFAULT_ENERGY_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub horizon_s: f64,
    pub margin_grid: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            horizon_s: DEFAULT_HORIZON_S,
            margin_grid: MARGIN_GRID,
        }
    }
}

fn default_horizon() -> usize {
    5000
}

fn default_truncation() -> f64 {
    1e-10
}

fn default_margin() -> usize {
    8
}

fn default_probe_length() -> usize {
    256
}

fn default_probe_threshold() -> f64 {
    loopshape::oracle::DEFAULT_PROBE_THRESHOLD
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub plant: PlantSource,
    pub desired_loop_gain: TfConfig,
    pub sample_rate_hz: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_truncation")]
    pub truncation_threshold: f64,
    #[serde(default)]
    pub slow_pole_radius: Option<f64>,
    #[serde(default = "default_margin")]
    pub anticausal_margin: usize,
    #[serde(default = "default_probe_length")]
    pub probe_length: usize,
    #[serde(default = "default_probe_threshold")]
    pub probe_threshold: f64,
    #[serde(default)]
    pub inverse: InverseConfig,
    #[serde(default)]
    pub ilc: TrackingConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    pub spec: DesignSpec,
    #[serde(default)]
    pub validation: ValidationConfig,
    /// Output directory; `--out` overrides it.
    #[serde(default)]
    pub out: Option<String>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok((cfg, text))
    }

    /// `N` and the inverse window half-length `N/2` together.
    pub fn override_horizon(&mut self, n: usize) -> Result<()> {
        if n == 0 || !n.is_multiple_of(2) {
            bail!("--horizon {n} must be positive and even");
        }
        self.horizon = n;
        self.inverse.filter_half_length = n / 2;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            bail!("sample_rate_hz must be positive");
        }
        if let PlantSource::Process { program, .. } = &self.plant {
            if program.is_empty() {
                bail!("plant.process.program is empty");
            }
        }
        self.plant_model()?;
        self.target()?;
        self.loopshape()?.validate()?;
        self.order_selection()?;
        self.spec.validate()?;
        if self.validation.horizon_s.is_nan() || self.validation.horizon_s <= 0.0 || self.validation.margin_grid < 2 {
            bail!("validation.horizon_s must be positive and margin_grid at least 2");
        }
        Ok(())
    }

    pub fn target(&self) -> Result<RationalTf> {
        self.desired_loop_gain
            .build(self.sample_rate_hz, "desired_loop_gain")
    }

    /// The model behind an in-process plant; `None` for a process plant.
    pub fn plant_model(&self) -> Result<Option<RationalTf>> {
        match &self.plant {
            PlantSource::Tf(tf) => Ok(Some(tf.build(self.sample_rate_hz, "plant")?)),
            PlantSource::Process { .. } => Ok(None),
        }
    }

    pub fn oracle(&self) -> Result<Box<dyn PlantOracle>> {
        Ok(match &self.plant {
            PlantSource::Tf(tf) => Box::new(SimulatedPlant::new(
                tf.build(self.sample_rate_hz, "plant")?,
            )?),
            PlantSource::Process { program, args } => {
                Box::new(ProcessPlant::spawn(program, args, self.sample_rate_hz)?)
            }
        })
    }

    pub fn inverse_learn(&self) -> InverseLearnConfig {
        InverseLearnConfig {
            filter_half_length: self.inverse.filter_half_length,
            total_iterations: self.inverse.total_iterations,
            cross_update_period: self.inverse.cross_update_period,
            initial_gain_alpha: self.inverse.initial_gain_alpha,
            reference_shaping: self
                .inverse
                .reference_shaping
                .as_ref()
                .map(|s| ReferenceShaping {
                    cutoff_normalized: s.cutoff_normalized,
                    half_length: s.half_length,
                }),
        }
    }

    pub fn loopshape(&self) -> Result<LoopShapeConfig> {
        Ok(LoopShapeConfig {
            horizon: self.horizon,
            truncation_threshold: self.truncation_threshold,
            slow_pole_radius: self.slow_pole_radius,
            anticausal_margin: self.anticausal_margin,
            probe_length: self.probe_length,
            probe_threshold: self.probe_threshold,
            inverse_learn: self.inverse_learn(),
            ilc: IlcConfig {
                max_iterations: self.ilc.max_iterations,
                stop_error_db: self.ilc.stop_error_db,
                record_history: false,
            },
        })
    }

    pub fn order_selection(&self) -> Result<OrderSelection> {
        match self.reduction.order {
            Some(r) => Ok(OrderSelection::Order(r)),
            None => {
                let eta = self.reduction.energy_fraction;
                if !(eta > 0.0 && eta <= 1.0) {
                    bail!("reduction.energy_fraction {eta} outside (0, 1]");
                }
                Ok(OrderSelection::EnergyFraction(eta))
            }
        }
    }
}
