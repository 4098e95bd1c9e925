//! Layered configuration: built-in defaults, then a TOML file, then `MMVM_*`
//! environment variables, then command-line flags.
//!
//! Environment keys are `MMVM_<KEY>` for top-level keys and
//! `MMVM_<SECTION>_<KEY>` for section keys, e.g. `MMVM_SEED=7` or
//! `MMVM_PRETRAIN_LEARNING_RATE=0.05`. Values are parsed as TOML scalars when
//! possible and as strings otherwise.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "MMVM_";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub generate: GenerateSection,
    pub simulate: SimulateSection,
    pub pretrain: PretrainSection,
    pub sft: SftSection,
    pub evaluate: EvaluateSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub interval_seconds: f64,
    /// 0 keeps every object of the second frame.
    pub option_cap: usize,
    pub contour_thickness: u32,
    /// Frame rate assumed for COCO-style ingestion.
    pub fps: f64,
    /// Videos in the built-in corpus when no annotation file is given.
    pub synthetic_videos: usize,
    /// `off`, `replay` or `http`.
    pub annotate: String,
    pub transcript: String,
    pub endpoint: String,
    pub model: String,
    pub concurrency: usize,
    pub max_attempts: u32,
    pub timeout_seconds: u64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            interval_seconds: 1.0,
            option_cap: 0,
            contour_thickness: 3,
            fps: 6.0,
            synthetic_videos: 20,
            annotate: "off".into(),
            transcript: String::new(),
            endpoint: String::new(),
            model: String::new(),
            concurrency: 4,
            max_attempts: 3,
            timeout_seconds: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub images: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub pairs: usize,
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
    pub hflip_prob: f64,
    pub rotations: Vec<f64>,
    pub allow_arbitrary_rotation: bool,
    /// 0 keeps the crop size.
    pub resize_width: u32,
    pub resize_height: u32,
    pub min_visible_px: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            images: 200,
            min_objects: 4,
            max_objects: 8,
            pairs: 2000,
            crop_scale_min: 0.5,
            crop_scale_max: 1.0,
            hflip_prob: 0.5,
            rotations: vec![0.0, 90.0, 180.0, 270.0],
            allow_arbitrary_rotation: false,
            resize_width: 0,
            resize_height: 0,
            min_visible_px: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub temperature: f64,
    pub cosine: bool,
    pub pairs_per_step: usize,
    pub hidden_dim: usize,
    /// `f64` or `f32`.
    pub precision: String,
    pub heldout_images: usize,
    pub heldout_min_objects: usize,
    pub heldout_max_objects: usize,
    pub heldout_pairs: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 1e-2,
            momentum: 0.9,
            temperature: 1.0,
            cosine: false,
            pairs_per_step: 8,
            hidden_dim: 64,
            precision: "f64".into(),
            heldout_images: 100,
            heldout_min_objects: 8,
            heldout_max_objects: 12,
            heldout_pairs: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    /// `A`, `B`, `mix` or `both`.
    pub variant: String,
    /// Probability of variant B in `mix` mode.
    pub p: f64,
}

impl Default for SftSection {
    fn default() -> Self {
        Self {
            variant: "mix".into(),
            p: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// `oracle`, `random`, `replay` or `http`.
    pub client: String,
    pub transcript: String,
    pub endpoint: String,
    pub model: String,
    /// Name recorded in the log for replayed runs.
    pub name: String,
    pub single_image: bool,
    pub concurrency: usize,
    pub max_attempts: u32,
    pub timeout_seconds: u64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            client: "oracle".into(),
            transcript: String::new(),
            endpoint: String::new(),
            model: String::new(),
            name: "replay".into(),
            single_image: false,
            concurrency: 4,
            max_attempts: 3,
            timeout_seconds: 60,
        }
    }
}

const SECTIONS: &[&str] = &["generate", "simulate", "pretrain", "sft", "evaluate"];

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// `MMVM_PRETRAIN_LEARNING_RATE` -> `{pretrain = {learning_rate = ...}}`.
pub fn env_overrides(vars: impl IntoIterator<Item = (String, String)>) -> toml::Table {
    let mut out = toml::Table::new();
    for (k, v) in vars {
        let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
        let rest = rest.to_lowercase();
        if rest == "config" || rest == "log" {
            continue;
        }
        let value = parse_env_value(&v);
        match SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_"))) {
            Some(s) => {
                let key = rest[s.len() + 1..].to_string();
                let sec = out
                    .entry(s.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                if let toml::Value::Table(t) = sec {
                    t.insert(key, value);
                }
            }
            None => {
                out.insert(rest, value);
            }
        }
    }
    out
}

/// Defaults, then the file (if any), then the environment.
pub fn resolve(file: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> anyhow::Result<Config> {
    let mut table = toml::Table::try_from(Config::default()).context("serializing defaults")?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file_table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut table, file_table);
    }
    merge(&mut table, env_overrides(env));
    let cfg: Config = toml::Value::Table(table).try_into().context("invalid configuration")?;
    cfg.check()?;
    Ok(cfg)
}

impl Config {
    pub fn check(&self) -> anyhow::Result<()> {
        if !matches!(self.generate.annotate.as_str(), "off" | "replay" | "http") {
            bail!("generate.annotate must be off, replay or http");
        }
        if !matches!(self.evaluate.client.as_str(), "oracle" | "random" | "replay" | "http") {
            bail!("evaluate.client must be oracle, random, replay or http");
        }
        if !matches!(self.pretrain.precision.as_str(), "f32" | "f64") {
            bail!("pretrain.precision must be f32 or f64");
        }
        if self.simulate.min_objects == 0 || self.simulate.min_objects > self.simulate.max_objects {
            bail!("simulate.min_objects must be in 1..=max_objects");
        }
        if self.pretrain.heldout_min_objects == 0 || self.pretrain.heldout_min_objects > self.pretrain.heldout_max_objects {
            bail!("pretrain.heldout_min_objects must be in 1..=heldout_max_objects");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.toml");
        std::fs::write(&f, "seed = 3\n[pretrain]\nsteps = 10\nlearning_rate = 0.5\n").unwrap();
        let env = vec![
            ("MMVM_PRETRAIN_STEPS".to_string(), "20".to_string()),
            ("MMVM_EVALUATE_CLIENT".to_string(), "random".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let c = resolve(Some(&f), env).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.pretrain.steps, 20);
        assert_eq!(c.pretrain.learning_rate, 0.5);
        assert_eq!(c.pretrain.momentum, 0.9);
        assert_eq!(c.evaluate.client, "random");
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        let env = vec![("MMVM_PRETRAIN_STEPZ".to_string(), "20".to_string())];
        assert!(resolve(None, env).is_err());
        let env = vec![("MMVM_EVALUATE_CLIENT".to_string(), "gpt".to_string())];
        assert!(resolve(None, env).is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back: Config = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(c, back);
    }
}
