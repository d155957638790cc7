use serde::{Deserialize, Serialize};

/// Numerical thresholds used across the crate.
///
/// Every comparison is relative to the Frobenius norm of the operator being
/// tested, except `psd` which bounds the smallest eigenvalue from below.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub herm: f64,
    pub trace: f64,
    pub closure: f64,
    pub psd: f64,
    /// Relative residual for conic membership and proportionality classes.
    pub cone: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            herm: 1e-10,
            trace: 1e-10,
            closure: 1e-9,
            psd: 1e-9,
            cone: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn with_cone(mut self, cone: f64) -> Self {
        self.cone = cone;
        self
    }
}
