//! Run configuration files.

use std::path::{Path, PathBuf};

use labgatr_core::model::{ModelConfig, TaskPreset, ToyKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Optional overrides of the preset's model and optimiser settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub channels: Option<usize>,
    pub heads: Option<usize>,
    pub blocks: Option<usize>,
    pub ratio: Option<f64>,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub schema: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub lr: Option<f64>,
    pub lr_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    /// Use the wide and deep preset of roughly 320k parameters.
    #[serde(default)]
    pub large: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Every `.off` and `.vtk` file of a directory, in file-name order.
    Directory { path: PathBuf },
    /// A procedural dataset generated on the fly.
    Toy { kind: ToyKind, count: usize, seed: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyToggles {
    /// Run the equivariance suite before training.
    #[serde(default)]
    pub equivariance: bool,
    /// Run the gradient checks before training.
    #[serde(default)]
    pub gradients: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: TaskPreset,
    #[serde(default)]
    pub model: ModelOverrides,
    pub dataset: DatasetSpec,
    /// The last `val_count` samples form the validation split.
    pub val_count: usize,
    pub output: PathBuf,
    #[serde(default)]
    pub verify: VerifyToggles,
}

impl RunConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output = resolve(base, &cfg.output);
        if let DatasetSpec::Directory { path: dir } = &mut cfg.dataset {
            *dir = resolve(base, dir);
            if !dir.is_dir() {
                return Err(CliError::Config(format!("dataset directory {} does not exist", dir.display())));
            }
        }
        Ok(cfg)
    }

    pub fn model_config(&self) -> ModelConfig {
        let o = &self.model;
        let mut c = ModelConfig::preset(self.preset);
        if o.large {
            c = c.large();
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f.clone() { c.$f = v; })* };
        }
        set!(channels, heads, blocks, ratio, k, epsilon, schema, seed, lr, lr_decay, epochs, batch_size);
        c
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"preset":"volume-velocity","dataset":{"toy":{"kind":"volume","count":4,"seed":1}},
            "val_count":1,"output":"out","learning_rate":0.1}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
        let nested = r#"{"preset":"volume-velocity","dataset":{"toy":{"kind":"volume","count":4,"seed":1}},
            "val_count":1,"output":"out","model":{"chanels":4}}"#;
        assert!(serde_json::from_str::<RunConfig>(nested).is_err());
    }

    #[test]
    fn overrides_apply_on_the_preset() {
        let text = r#"{"preset":"volume-velocity","dataset":{"toy":{"kind":"volume","count":4,"seed":1}},
            "val_count":1,"output":"out","model":{"ratio":0.05,"epochs":3}}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        let m = cfg.model_config();
        assert_eq!((m.ratio, m.epochs, m.k), (0.05, 3, 4));
    }
}
