//! Run configuration: one TOML file describing a whole experiment.
//!
//! Every key is required and unknown keys are rejected. Per-stage seeds are
//! derived from the top-level `seed`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::DdpmConfig;
use crate::cost::{CostBox, CostParams};
use crate::dataset::CollectConfig;
use crate::dynamics::MsdParams;
use crate::error::{Error, Result};
use crate::eval::{BootstrapConfig, CiMethod, EvalConfig};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub q_min: f64,
    pub q_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Cost weights used at evaluation time.
    pub eval_q: Vec<f64>,
    pub eval_r: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub m_plan: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    pub horizons: Vec<usize>,
    pub resamples: usize,
    pub confidence: f64,
    pub ci_method: CiMethod,
    /// Run episodes on the thread pool (wall times then include contention).
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dynamics: MsdParams,
    pub cost: CostSection,
    pub dataset: CollectConfig,
    pub train: TrainConfig,
    pub ddpm: DdpmConfig,
    pub plan: PlanSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = CostBox::default();
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            dynamics: MsdParams::default(),
            cost: CostSection {
                q_min: b.q_min,
                q_max: b.q_max,
                r_min: b.r_min,
                r_max: b.r_max,
                eval_q: vec![1.0, 1.0],
                eval_r: vec![0.1],
            },
            dataset: CollectConfig::default(),
            train: TrainConfig::default(),
            ddpm: DdpmConfig::default(),
            plan: PlanSection { m_plan: 16 },
            eval: EvalSection {
                episodes: 100,
                horizons: vec![30, 50, 100],
                resamples: 10_000,
                confidence: 0.95,
                ci_method: CiMethod::Bca,
                parallel: false,
            },
        }
    }
}

/// Parse `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Apply a `dotted.key=value` override to a TOML table. The key must exist.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let key = key.trim();
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        cur = cur
            .get_mut(p)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| {
                Error::Config(format!("unknown config section `{p}` in override `{key}`"))
            })?;
    }
    if !cur.contains_key(last) {
        return Err(Error::Config(format!("unknown config key `{key}`")));
    }
    cur.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Write the resolved configuration as `<dir>/<name>.config.toml`.
    pub fn write_resolved(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{name}.config.toml"));
        fs::write(&path, self.to_toml_string()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        self.cost_box().validate()?;
        self.eval_omega()?;
        self.collect_config().validate()?;
        self.train_config().validate()?;
        self.ddpm_config().validate()?;
        if self.plan.m_plan == 0 {
            return Err(Error::Config("plan.m_plan must be >= 1".into()));
        }
        if self.eval.episodes == 0
            || self.eval.horizons.is_empty()
            || self.eval.horizons.contains(&0)
        {
            return Err(Error::Config(
                "eval needs episodes >= 1 and nonempty positive horizons".into(),
            ));
        }
        if self.eval.resamples == 0 || !(self.eval.confidence > 0.0 && self.eval.confidence < 1.0) {
            return Err(Error::Config(
                "eval needs resamples >= 1 and confidence in (0, 1)".into(),
            ));
        }
        let d_x = self.dataset.init_box.lower.len();
        if d_x != 2 || self.cost.eval_q.len() != d_x || self.cost.eval_r.len() != 1 {
            return Err(Error::Config(
                "the mass-spring-damper has d_x = 2 and d_u = 1; init box and eval weights must match".into(),
            ));
        }
        Ok(())
    }

    pub fn cost_box(&self) -> CostBox {
        CostBox {
            q_min: self.cost.q_min,
            q_max: self.cost.q_max,
            r_min: self.cost.r_min,
            r_max: self.cost.r_max,
        }
    }

    pub fn eval_omega(&self) -> Result<CostParams> {
        CostParams::new(self.cost.eval_q.clone(), self.cost.eval_r.clone())
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            seed: self.seed,
            ..self.dataset.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(1),
            ..self.train.clone()
        }
    }

    pub fn ddpm_config(&self) -> DdpmConfig {
        DdpmConfig {
            seed: self.seed.wrapping_add(2),
            ..self.ddpm.clone()
        }
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            episodes: self.eval.episodes,
            m_plan: self.plan.m_plan,
            seed: self.seed.wrapping_add(3),
            init_box: self.dataset.init_box.clone(),
            omega: self.eval_omega()?,
            parallel: self.eval.parallel,
        })
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            resamples: self.eval.resamples,
            confidence: self.eval.confidence,
            method: self.eval.ci_method,
            ..BootstrapConfig::default()
        }
    }

    /// Fixed, so a summary depends only on its episode rows.
    pub fn bootstrap_seed(&self) -> u64 {
        0
    }
}
