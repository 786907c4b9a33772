//! JSON analysis configuration (schema version 1).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use qbdstab::halfplane::{
    CatastropheModel, HalfPlaneDriftSpec, HalfPlaneQbd, HalfPlaneSpec, Param, SweepAxis, SweepGrid,
};
use qbdstab::qbd::{PhaseOperator, QbdSpec};
use qbdstab::simulate::SimConfig;
use qbdstab::stability::{DriftSpec, SolverConfig};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftConfig>,
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: AnalysisConfig = serde_json::from_str(text).map_err(CliError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "version: unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        self.solver
            .validate()
            .map_err(|e| CliError::Config(format!("solver: {e}")))?;
        if let ModelConfig::Catastrophe(m) = &self.model {
            m.validate()
                .map_err(|e| CliError::Config(format!("model: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelConfig {
    Qbd(QbdModel),
    Catastrophe(CatastropheModel),
    HalfplaneCustom(HalfPlaneModel),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Qbd(_) => "qbd",
            ModelConfig::Catastrophe(_) => "catastrophe",
            ModelConfig::HalfplaneCustom(_) => "halfplane-custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum QbdModel {
    Mm1 {
        lambda: f64,
        mu: f64,
    },
    Operators {
        a_plus: OperatorConfig,
        #[serde(default)]
        a_zero: OperatorConfig,
        a_minus: OperatorConfig,
        #[serde(default)]
        b_zero: OperatorConfig,
        #[serde(default)]
        hx: usize,
    },
    /// `A_m` for arbitrary level jumps `m`.
    Bands {
        bands: Vec<BandConfig>,
        #[serde(default)]
        b_zero: OperatorConfig,
        #[serde(default)]
        hx: usize,
    },
}

impl QbdModel {
    pub fn build(&self) -> Result<QbdSpec, CliError> {
        let spec = match self {
            QbdModel::Mm1 { lambda, mu } => QbdSpec::mm1(*lambda, *mu),
            QbdModel::Operators {
                a_plus,
                a_zero,
                a_minus,
                b_zero,
                hx,
            } => QbdSpec::new(
                a_plus.build()?,
                a_zero.build()?,
                a_minus.build()?,
                b_zero.build()?,
                *hx,
            ),
            QbdModel::Bands { bands, b_zero, hx } => {
                let mut map = BTreeMap::new();
                for b in bands {
                    if map.insert(b.level_jump, b.operator.build()?).is_some() {
                        return Err(CliError::Config(format!(
                            "model.bands: level_jump {} given twice",
                            b.level_jump
                        )));
                    }
                }
                QbdSpec::multi_band(map, b_zero.build()?, *hx)
            }
        };
        spec.map_err(|e| CliError::Config(format!("model: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub level_jump: i64,
    pub operator: OperatorConfig,
}

/// A phase operator as explicit triples or a parametric family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    #[default]
    Zero,
    Entries {
        entries: Vec<(usize, usize, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<usize>,
    },
    /// `rate` on every `(i, i)`.
    Diagonal {
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<usize>,
    },
    /// `rate` on every `(i, i + offset)`.
    Shift {
        offset: i64,
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<usize>,
    },
    Sum {
        terms: Vec<OperatorConfig>,
    },
}

impl OperatorConfig {
    pub fn build(&self) -> Result<PhaseOperator, CliError> {
        let check = |name: &str, r: f64| {
            if r.is_finite() && r >= 0.0 {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "{name}: rate {r} must be nonnegative"
                )))
            }
        };
        Ok(match self {
            OperatorConfig::Zero => PhaseOperator::zero(),
            OperatorConfig::Entries { entries, phases } => {
                let op = PhaseOperator::from_entries(entries.iter().copied())
                    .map_err(|e| CliError::Config(e.to_string()))?;
                match phases {
                    Some(n) => op.with_phases(*n),
                    None => op,
                }
            }
            OperatorConfig::Diagonal { rate, phases } => {
                check("diagonal", *rate)?;
                PhaseOperator::diagonal(*rate, *phases)
            }
            OperatorConfig::Shift {
                offset,
                rate,
                phases,
            } => {
                check("shift", *rate)?;
                PhaseOperator::shift(*offset, *rate, *phases)
            }
            OperatorConfig::Sum { terms } => {
                let ops = terms
                    .iter()
                    .map(|t| t.build())
                    .collect::<Result<Vec<_>, _>>()?;
                let refs: Vec<&PhaseOperator> = ops.iter().collect();
                PhaseOperator::sum(&refs)
            }
        })
    }
}

/// Phase function given by its first values and a constant tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFunction {
    #[serde(default)]
    pub values: Vec<f64>,
    pub tail: f64,
}

impl StepFunction {
    pub fn constant(v: f64) -> Self {
        StepFunction {
            values: Vec::new(),
            tail: v,
        }
    }

    pub fn into_fn(self) -> impl Fn(usize) -> f64 + Send + Sync + 'static {
        move |x| self.values.get(x).copied().unwrap_or(self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfPlaneModel {
    pub upper: Vec<BandConfig>,
    pub axis: Vec<BandConfig>,
    #[serde(default)]
    pub lower: Vec<BandConfig>,
    #[serde(default)]
    pub hx: usize,
    pub f_plus: StepFunction,
    #[serde(default = "zero_step")]
    pub f_minus: StepFunction,
    pub u_bound: f64,
}

fn zero_step() -> StepFunction {
    StepFunction::constant(0.0)
}

impl HalfPlaneModel {
    pub fn build(&self) -> Result<(HalfPlaneSpec, HalfPlaneDriftSpec), CliError> {
        let bands =
            |name: &str, list: &[BandConfig]| -> Result<BTreeMap<i64, PhaseOperator>, CliError> {
                let mut map = BTreeMap::new();
                for b in list {
                    if map.insert(b.level_jump, b.operator.build()?).is_some() {
                        return Err(CliError::Config(format!(
                            "model.{name}: level_jump {} given twice",
                            b.level_jump
                        )));
                    }
                }
                Ok(map)
            };
        let qbd = HalfPlaneQbd::new(
            bands("upper", &self.upper)?,
            bands("axis", &self.axis)?,
            bands("lower", &self.lower)?,
            self.hx,
        )
        .map_err(|e| CliError::Config(format!("model: {e}")))?;
        let ds = HalfPlaneDriftSpec::linear(
            self.f_plus.clone().into_fn(),
            self.f_minus.clone().into_fn(),
            self.u_bound,
        );
        Ok((qbd.spec(), ds))
    }
}

/// A swept parameter, as explicit values or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisConfig {
    Values {
        param: Param,
        values: Vec<f64>,
    },
    Range {
        param: Param,
        from: f64,
        to: f64,
        n: usize,
    },
}

impl AxisConfig {
    pub fn axis(&self) -> SweepAxis {
        match self {
            AxisConfig::Values { param, values } => SweepAxis {
                param: *param,
                values: values.clone(),
            },
            AxisConfig::Range { param, from, to, n } => SweepAxis::linspace(*param, *from, *to, *n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub outer: AxisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<AxisConfig>,
}

impl SweepConfig {
    pub fn grid(&self, base: CatastropheModel) -> SweepGrid {
        SweepGrid {
            base,
            outer: self.outer.axis(),
            inner: self.inner.as_ref().map(AxisConfig::axis),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftModeConfig {
    #[default]
    Continuous,
    /// Checks the jump chain with `f` read per jump.
    Discrete,
}

/// Lyapunov data with `L^Y(y) = y`; `h(l) = h_scale / (1 + l)` in discrete mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default)]
    pub mode: DriftModeConfig,
    pub f: StepFunction,
    #[serde(default = "one")]
    pub y_star: i64,
    pub u_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_scale: Option<f64>,
}

fn one() -> i64 {
    1
}

impl DriftConfig {
    pub fn spec(&self) -> Result<DriftSpec, CliError> {
        if self.y_star < 0 {
            return Err(CliError::Config(format!(
                "drift.y_star = {} must be nonnegative",
                self.y_star
            )));
        }
        let mut ds = DriftSpec::linear(self.f.clone().into_fn(), self.y_star, self.u_bound);
        if let Some(c) = self.h_scale {
            ds = ds.with_h(move |l| c / (1.0 + l));
        }
        Ok(ds)
    }
}
