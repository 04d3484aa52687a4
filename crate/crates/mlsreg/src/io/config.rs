//! Flat `section.key = value` configuration files and environment overrides.

use std::path::Path;

use mlsreg_core::config::PipelineConfig;

use crate::error::{io_err, Error, Result};

pub const ENV_PREFIX: &str = "MLSREG_";

/// `fine.voxel_edge_m` → `MLSREG_FINE__VOXEL_EDGE_M`.
pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "__").to_ascii_uppercase())
}

/// Applies `key = value` lines on top of `base`. `#` starts a comment;
/// unknown and repeated keys are errors.
pub fn apply_config_text(base: &mut PipelineConfig, text: &str, path: &Path) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let wrap = |source| Error::Config {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(wrap(mlsreg_core::Error::InvalidValue {
                key: line.into(),
                reason: "expected `key = value`".into(),
            }));
        };
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(wrap(mlsreg_core::Error::InvalidValue {
                key: key.into(),
                reason: "set more than once".into(),
            }));
        }
        base.set(key, value.trim()).map_err(wrap)?;
    }
    Ok(())
}

/// Overrides every key whose environment variable `lookup` returns.
pub fn apply_env(base: &mut PipelineConfig, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
    for key in PipelineConfig::KEYS {
        let var = env_var_name(key);
        if let Some(v) = lookup(&var) {
            base.set(key, v.trim()).map_err(|source| Error::Env { var, source })?;
        }
    }
    Ok(())
}

/// Defaults, then the file (if any), then `MLSREG_*` variables; validated.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    load_config_with(path, |v| std::env::var(v).ok())
}

pub fn load_config_with(path: Option<&Path>, lookup: impl Fn(&str) -> Option<String>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(io_err(p))?;
        apply_config_text(&mut cfg, &text, p)?;
    }
    apply_env(&mut cfg, lookup)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(cfg: &PipelineConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_kv_string()).map_err(io_err(path))
}
