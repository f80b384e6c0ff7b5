use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warped_geometry::sphere_area;

/// Dimension, spectral weight, target bound and loss of a construction run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

impl Params {
    pub fn new(n: usize, gamma: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        let p = Params {
            n,
            gamma,
            lambda,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Domain(format!(
                "dimension n = {} must be at least 3",
                self.n
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!(
                "gamma = {} must be positive",
                self.gamma
            )));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Domain("lambda must be finite".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// (n-1)/(n-2): the construction needs gamma strictly above this.
    pub fn critical_gamma(&self) -> f64 {
        critical_gamma(self.n)
    }

    pub fn is_supercritical(&self) -> bool {
        self.gamma > self.critical_gamma()
    }

    /// Eigenvalue shift used for the Green's function, lambda - epsilon/2.
    pub fn green_shift(&self) -> f64 {
        self.lambda - 0.5 * self.epsilon
    }

    /// Bound certified on the surgered manifold, lambda - epsilon.
    pub fn target(&self) -> f64 {
        self.lambda - self.epsilon
    }

    /// Singular coefficient b = 1/(gamma (n-2) |S^{n-1}|).
    pub fn green_coefficient(&self) -> f64 {
        let area = sphere_area(self.n).expect("n >= 3 validated");
        1.0 / (self.gamma * (self.n as f64 - 2.0) * area)
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Params { gamma, ..*self }
    }
}

pub fn critical_gamma(n: usize) -> f64 {
    (n as f64 - 1.0) / (n as f64 - 2.0)
}
