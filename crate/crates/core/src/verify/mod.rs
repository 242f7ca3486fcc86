//! Numerical self-checks shared by the command line and the test suites.

mod algebra;
mod network;
mod tokens;

use serde::{Deserialize, Serialize};

pub use algebra::{algebra_checks, convex_combination_checks, embedding_checks, oracle_product};
pub use network::{
    equivariance_checks, gradient_checks, EquivarianceOptions, GradientOptions, FD_STEP, GRADIENT_TOL,
    LAYER_EQUIVARIANCE_TOL, MODEL_EQUIVARIANCE_TOL,
};
pub use tokens::{tokenizer_checks, TokenizerCheckOptions};

/// One named measurement and the bound it has to stay below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// Where the worst value occurred, if known.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, detail: String::new() }
    }

    /// A count of failures that has to be zero.
    pub fn exact(name: impl Into<String>, failures: usize) -> Self {
        Check::new(name, failures as f64, 1.0)
    }

    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.tolerance
    }
}
