//! `run.json`: what was run, with which resolved config, on which inputs,
//! producing which outputs (SHA-256 per file).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use mmvm_core::hash::sha256_hex;

use crate::config::Config;

pub const RUN_MANIFEST: &str = "run.json";
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub formats: BTreeMap<&'static str, String>,
    pub config: Config,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn format_versions() -> BTreeMap<&'static str, String> {
    use mmvm_core::ocl::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
    BTreeMap::from([
        ("manifest", mmvm_core::model::MANIFEST_VERSION.to_string()),
        ("sft", mmvm_core::sft::SFT_FORMAT_VERSION.to_string()),
        ("extractor", mmvm_core::eval::EXTRACTOR_VERSION.to_string()),
        ("generator", mmvm_core::qagen::GENERATOR_NAME.to_string()),
        ("checkpoint", format!("{}/{CHECKPOINT_VERSION}", String::from_utf8_lossy(CHECKPOINT_MAGIC))),
    ])
}

pub fn hash_file(path: &Path) -> anyhow::Result<String> {
    Ok(sha256_hex(&std::fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Echo the resolved config and write `run.json` covering every file under `out`.
pub fn finish(command: &str, cfg: &Config, inputs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    std::fs::write(out.join(RESOLVED_CONFIG), cfg.to_toml())?;
    let mut files = Vec::new();
    walk(out, &mut files)?;
    files.sort();
    let mut outputs = BTreeMap::new();
    for f in files {
        let rel = f.strip_prefix(out).expect("walked under out").to_string_lossy().replace('\\', "/");
        if rel == RUN_MANIFEST {
            continue;
        }
        outputs.insert(rel, hash_file(&f)?);
    }
    let inputs = inputs
        .iter()
        .map(|p| Ok((p.display().to_string(), hash_file(p)?)))
        .collect::<anyhow::Result<BTreeMap<_, _>>>()?;
    let m = RunManifest {
        command: command.to_string(),
        version: mmvm_core::VERSION.to_string(),
        formats: format_versions(),
        config: cfg.clone(),
        inputs,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(out.join(RUN_MANIFEST), text)?;
    Ok(())
}
