use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::famo::FamoConfig;
use crate::moment::ParamUpdater;
use crate::problems::{make_quadratic_bank, MultiTaskProblem, QuadraticBankSpec, Toy2d};

/// Model-parameter learning rate of the toy runs.
pub const TOY_LR: f64 = 5e-3;
pub const TOY_STEPS: u64 = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Toy2d,
    /// A fully specified bank.
    Quadratic { spec: QuadraticBankSpec },
    /// A seeded random bank with optional per-task scales.
    RandomQuadratic {
        k: usize,
        m: usize,
        seed: u64,
        #[serde(default)]
        scales: Option<Vec<f64>>,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn MultiTaskProblem>> {
        Ok(match self {
            ProblemSpec::Toy2d => Box::new(Toy2d::new()),
            ProblemSpec::Quadratic { spec } => Box::new(make_quadratic_bank(spec)?),
            ProblemSpec::RandomQuadratic { k, m, seed, scales } => {
                let mut spec = QuadraticBankSpec::random(*k, *m, *seed);
                if let Some(s) = scales {
                    if s.len() != *k {
                        return Err(Error::Config(format!("{} scales given for {k} tasks", s.len())));
                    }
                    spec = spec.with_scales(s);
                }
                Box::new(make_quadratic_bank(&spec)?)
            }
        })
    }

    pub fn is_toy(&self) -> bool {
        matches!(self, ProblemSpec::Toy2d)
    }
}

/// The optimizer under test.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Famo(FamoConfig),
    /// Full dual solve every step.
    FamoExact(FamoConfig),
    Baseline(Method),
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Famo(_) => "famo".into(),
            MethodSpec::FamoExact(_) => "famo_exact".into(),
            MethodSpec::Baseline(m) => m.label().into(),
        }
    }

    /// Gradient evaluations per step for `k` tasks.
    pub fn gradient_evals_per_step(&self, k: usize) -> u64 {
        match self {
            MethodSpec::Famo(_) => 1,
            MethodSpec::FamoExact(_) => k as u64,
            MethodSpec::Baseline(m) => m.gradient_evals_per_step(k),
        }
    }
}

impl TryFrom<serde_json::Value> for MethodSpec {
    type Error = String;

    fn try_from(v: serde_json::Value) -> std::result::Result<Self, String> {
        let name = v.get("name").and_then(|n| n.as_str()).ok_or("method needs a \"name\"")?.to_string();
        match name.as_str() {
            "famo" | "famo_exact" => {
                let mut rest = v.as_object().cloned().unwrap_or_default();
                rest.remove("name");
                let cfg: FamoConfig = serde_json::from_value(rest.into()).map_err(|e| e.to_string())?;
                Ok(if name == "famo" { MethodSpec::Famo(cfg) } else { MethodSpec::FamoExact(cfg) })
            }
            _ => serde_json::from_value(v).map(MethodSpec::Baseline).map_err(|e| e.to_string()),
        }
    }
}

impl From<MethodSpec> for serde_json::Value {
    fn from(m: MethodSpec) -> Self {
        let (name, cfg) = match m {
            MethodSpec::Famo(c) => ("famo", c),
            MethodSpec::FamoExact(c) => ("famo_exact", c),
            MethodSpec::Baseline(b) => return serde_json::to_value(b).expect("serializable"),
        };
        let mut v = serde_json::to_value(cfg).expect("serializable");
        v.as_object_mut().expect("object").insert("name".into(), name.into());
        v
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serde_json::Value::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        MethodSpec::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// How `θ` moves along the method's direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UpdaterSpec {
    Sgd { lr: f64 },
    Moment { lr: f64 },
}

impl UpdaterSpec {
    pub fn build(&self, dim: usize) -> Result<ParamUpdater> {
        match *self {
            UpdaterSpec::Sgd { lr } if lr > 0.0 => Ok(ParamUpdater::sgd(lr)),
            UpdaterSpec::Moment { lr } if lr > 0.0 => Ok(ParamUpdater::moment(dim, lr)),
            _ => Err(Error::Config("learning rate must be positive".into())),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    pub updater: UpdaterSpec,
    /// Initial parameters; zeros when absent.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    /// Prefix for `<output>.jsonl` and `<output>.summary.json`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Record per-step wall time; disable for byte-identical trajectories.
    #[serde(default = "default_true")]
    pub record_time: bool,
    /// Front cache used to score toy runs.
    #[serde(default)]
    pub pareto_front: Option<PathBuf>,
}

impl RunConfig {
    /// The toy protocol: moment updater with `TOY_LR` for `TOY_STEPS` steps.
    pub fn toy(method: MethodSpec, init: [f64; 2]) -> Self {
        Self {
            problem: ProblemSpec::Toy2d,
            method,
            updater: UpdaterSpec::Moment { lr: TOY_LR },
            init: Some(init.to_vec()),
            steps: TOY_STEPS,
            seed: 0,
            output: None,
            record_time: true,
            pareto_front: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be ≥ 1".into()));
        }
        if let MethodSpec::Famo(c) | MethodSpec::FamoExact(c) = &self.method {
            c.validate()?;
        }
        if let Some(init) = &self.init {
            if init.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("init must be finite".into()));
            }
        }
        Ok(())
    }
}
