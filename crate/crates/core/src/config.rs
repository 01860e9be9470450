//! Run configuration: a sectioned TOML file with a strict schema plus
//! `key=value` command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::algo::TrainConfig;
use crate::error::{Error, Result};
use crate::motion::GaitParams;
use crate::randomization::RndConfig;
use crate::runtime::EnvConfig;

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "STRIDER_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RndMode {
    /// Random force injection and action delay as configured in
    /// `env.randomization`.
    #[default]
    Simple,
    /// No training-time randomization.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Robot model file; the built-in planar walker when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Reference motion file; generated from `gait` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motion: Option<PathBuf>,
    pub rnd: RndMode,
    /// Write a checkpoint every this many updates; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub gait: GaitParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            model: None,
            motion: None,
            rnd: RndMode::Simple,
            checkpoint_every: 50,
            train: TrainConfig::default(),
            env: EnvConfig::default(),
            gait: GaitParams::default(),
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field,
                message: format!("{message} (in {})", path.as_ref().display()),
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.env.validate()?;
        Ok(())
    }

    /// Environment settings with the randomization mode applied.
    pub fn effective_env(&self) -> EnvConfig {
        let mut env = self.env.clone();
        if self.rnd == RndMode::None {
            env.randomization = RndConfig::disabled();
        }
        env
    }

    /// Applies `key=value` overrides. A key is either a dotted path
    /// (`train.lr`) or a bare field name that occurs exactly once anywhere
    /// in the schema (`lr`, `critic`, `seed`). Values use TOML syntax;
    /// anything that does not parse is taken as a string.
    pub fn apply_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = Table::try_from(self).map_err(|e| config_error("config", e.to_string()))?;
        let schema = Table::try_from(RunConfig::default()).expect("default config serializes");
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| config_error(item, "override must look like key=value"))?;
            let (key, raw) = (key.trim(), raw.trim());
            let path = resolve_key(&schema, key)?;
            set_path(&mut table, &path, parse_value(raw))?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error("override", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Output directory, placed under `$STRIDER_OUTPUT_ROOT` when that is set
    /// and the configured path is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn collect_paths(table: &Table, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    for (k, v) in table {
        prefix.push(k.clone());
        out.push(prefix.clone());
        if let Value::Table(t) = v {
            collect_paths(t, prefix, out);
        }
        prefix.pop();
    }
}

fn resolve_key(schema: &Table, key: &str) -> Result<Vec<String>> {
    let mut all = Vec::new();
    collect_paths(schema, &mut Vec::new(), &mut all);
    // Optional top-level paths are absent from the serialized defaults.
    for opt in ["model", "motion"] {
        all.push(vec![opt.to_string()]);
    }
    let wanted: Vec<String> = key.split('.').map(str::to_string).collect();
    if all.contains(&wanted) {
        return Ok(wanted);
    }
    if wanted.len() == 1 {
        let hits: Vec<&Vec<String>> = all.iter().filter(|p| p.last() == Some(&wanted[0])).collect();
        match hits.len() {
            1 => return Ok(hits[0].clone()),
            0 => {}
            _ => {
                let names: Vec<String> = hits.iter().map(|p| p.join(".")).collect();
                return Err(config_error(key, format!("ambiguous key, use one of: {}", names.join(", "))));
            }
        }
    }
    Err(config_error(key, "unknown configuration key"))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.clone())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| config_error(p, "not a section"))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::CriticKind;

    #[test]
    fn default_round_trips_exactly() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn modified_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.model = Some("robot.toml".into());
        cfg.train.lr = 3.0e-4;
        cfg.train.policy_hidden = vec![64, 32];
        cfg.env.weights = crate::runtime::ActionWeights([0.8, 1.2, 1.0]);
        cfg.rnd = RndMode::None;
        let text = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[train]\nlearning_rate = 0.1").is_err());
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = RunConfig::from_toml_str("[train]\nseed = 7\n").unwrap();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.gamma, RunConfig::default().train.gamma);
    }

    #[test]
    fn overrides_resolve_bare_and_dotted_keys() {
        let cfg = RunConfig::default()
            .apply_overrides(&["critic=scalar", "total_steps=10000", "env.max_steps=300", "rnd=none", "policy_hidden=[32, 32]"])
            .unwrap();
        assert_eq!(cfg.train.critic, CriticKind::Scalar);
        assert_eq!(cfg.train.total_steps, 10000);
        assert_eq!(cfg.env.max_steps, 300);
        assert_eq!(cfg.rnd, RndMode::None);
        assert_eq!(cfg.train.policy_hidden, vec![32, 32]);
        let cfg = cfg.apply_overrides(&["model=robot.toml", "output_dir=out/x"]).unwrap();
        assert_eq!(cfg.model, Some(PathBuf::from("robot.toml")));
        assert_eq!(cfg.output_dir, PathBuf::from("out/x"));
    }

    #[test]
    fn bad_overrides_fail() {
        let base = RunConfig::default();
        assert!(base.apply_overrides(&["nonsense=1"]).is_err());
        assert!(base.apply_overrides(&["lr"]).is_err());
        assert!(base.apply_overrides(&["gamma=2.0"]).is_err());
        assert!(base.apply_overrides(&["epochs=many"]).is_err());
    }

    #[test]
    fn rnd_none_disables_randomization() {
        let cfg = RunConfig {
            rnd: RndMode::None,
            ..RunConfig::default()
        };
        let env = cfg.effective_env();
        assert!(!env.randomization.enable_erfi && !env.randomization.enable_delay);
        assert!(RunConfig::default().effective_env().randomization.enable_erfi);
    }
}
