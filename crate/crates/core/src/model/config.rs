use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::mesh::{NORMAL_DESCRIPTOR, POSITION_DESCRIPTOR};
use crate::tokenizer::{DEFAULT_EPSILON, RATIO_CORTEX, RATIO_SURFACE, RATIO_VOLUME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Per-vertex 3-vector read from the grade-1 part of the output.
    VertexVector,
    /// Per-vertex scalar read from `x_s`.
    VertexScalar,
    /// One scalar per mesh read from the class token's `x_s`.
    MeshScalar,
    /// Softmax over `classes` output channels of the class token.
    Classification { classes: usize },
}

impl Task {
    pub fn is_mesh_level(self) -> bool {
        matches!(self, Task::MeshScalar | Task::Classification { .. })
    }

    pub fn output_channels(self) -> usize {
        match self {
            Task::Classification { classes } => classes,
            _ => 1,
        }
    }
}

/// Named task presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskPreset {
    #[serde(rename = "surface-wss")]
    SurfaceWss,
    #[serde(rename = "volume-velocity")]
    VolumeVelocity,
    #[serde(rename = "mesh-scalar")]
    MeshScalar,
}

impl std::str::FromStr for TaskPreset {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surface-wss" => Ok(TaskPreset::SurfaceWss),
            "volume-velocity" => Ok(TaskPreset::VolumeVelocity),
            "mesh-scalar" => Ok(TaskPreset::MeshScalar),
            _ => Err(ModelError::Config(format!(
                "unknown preset `{s}` (expected surface-wss, volume-velocity or mesh-scalar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Multivector channels of the token stream.
    pub channels: usize,
    pub heads: usize,
    pub blocks: usize,
    /// `n_coarse / n`.
    pub ratio: f64,
    /// Interpolation neighbours, 3 for surfaces and 4 for volumes.
    pub k: usize,
    /// `ε` of the interpolation weights.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub task: Task,
    /// Descriptor names embedded as input channels, in order.
    pub schema: Vec<String>,
    pub seed: u64,
    pub lr: f64,
    /// Per-epoch learning-rate factor.
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ModelConfig {
    pub fn preset(preset: TaskPreset) -> Self {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        let base = ModelConfig {
            channels: 8,
            heads: 4,
            blocks: 4,
            ratio: RATIO_SURFACE,
            k: 3,
            epsilon: DEFAULT_EPSILON,
            task: Task::VertexVector,
            schema: names(&[POSITION_DESCRIPTOR, NORMAL_DESCRIPTOR, "inlet"]),
            seed: 0,
            lr: 3e-4,
            lr_decay: 0.9995,
            epochs: 200,
            batch_size: 4,
        };
        match preset {
            TaskPreset::SurfaceWss => base,
            TaskPreset::VolumeVelocity => ModelConfig {
                ratio: RATIO_VOLUME,
                k: 4,
                schema: names(&[POSITION_DESCRIPTOR, "axis", "wall", "radius", "inlet"]),
                ..base
            },
            TaskPreset::MeshScalar => ModelConfig { ratio: RATIO_CORTEX, task: Task::MeshScalar, ..base },
        }
    }

    /// Width and depth giving roughly 320k trainable parameters.
    pub fn large(self) -> Self {
        ModelConfig { channels: 16, heads: 4, blocks: 14, ..self }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.channels == 0 || self.heads == 0 || self.channels % self.heads != 0 {
            return fail(format!("{} channels cannot be split into {} heads", self.channels, self.heads));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return fail(format!("ratio {} is outside (0, 1]", self.ratio));
        }
        if self.k != 3 && self.k != 4 {
            return fail(format!("k must be 3 or 4, got {}", self.k));
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail(format!("lr_decay {} is outside (0, 1]", self.lr_decay));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.schema.is_empty() {
            return fail("descriptor schema is empty".into());
        }
        if let Task::Classification { classes } = self.task {
            if classes < 2 {
                return fail(format!("classification needs at least 2 classes, got {classes}"));
            }
        }
        Ok(())
    }

    /// Learning rate of a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}
