//! Experiment configuration: strict TOML with documented defaults, plus the
//! named presets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ricci_tunnel::profile_file::{NeckSpec, ProfileFile, WarpSpec};
use ricci_tunnel::Params;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ToyIdentity,
    NeckCheck,
    GreenSolve,
    TunnelBuild,
    DefectScan,
    Lambda1,
    ThresholdScan,
    Asymptotics,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ToyIdentity => "toy-identity",
            ExperimentKind::NeckCheck => "neck-check",
            ExperimentKind::GreenSolve => "green-solve",
            ExperimentKind::TunnelBuild => "tunnel-build",
            ExperimentKind::DefectScan => "defect-scan",
            ExperimentKind::Lambda1 => "lambda1",
            ExperimentKind::ThresholdScan => "threshold-scan",
            ExperimentKind::Asymptotics => "asymptotics",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyChoice {
    /// The model alone, no surgery.
    None,
    /// Two copies of the model (or `model` and `second`), one basepoint each.
    ConnectedSum,
    /// Both basepoints on the model.
    Handle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Builtin family; ignored when `profile` names a file with a `[warp]` table.
    #[serde(default = "default_warp")]
    pub warp: WarpSpec,
    /// Custom profile file (see the README for the format).
    #[serde(default)]
    pub profile: Option<PathBuf>,
    /// Second component of a connected sum; defaults to a copy of `warp`.
    #[serde(default)]
    pub second: Option<WarpSpec>,
    #[serde(default = "default_basepoints")]
    pub basepoints: Vec<f64>,
    #[serde(default = "default_topology")]
    pub topology: TopologyChoice,
}

fn default_warp() -> WarpSpec {
    WarpSpec::Sphere {}
}

fn default_basepoints() -> Vec<f64> {
    vec![0.0]
}

fn default_topology() -> TopologyChoice {
    TopologyChoice::None
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            warp: default_warp(),
            profile: None,
            second: None,
            basepoints: default_basepoints(),
            topology: default_topology(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Sample count for toy, neck and Green tables (≥ 16).
    pub grid: usize,
    /// Sturm–Liouville cells (≥ 64).
    pub cells: usize,
    /// Tunnel points per defect scan (≥ 11).
    pub scan_grid: usize,
    /// Fixed neck radius; searched when absent.
    pub r0: Option<f64>,
    /// Smallest r₀ the search and dyadic scans go down to.
    pub r0_min: f64,
    pub bisection_steps: usize,
    /// Random test functions per Rayleigh-quotient check.
    pub random_tests: usize,
    /// Dyadic exponents k of r₀ = 2⁻ᵏ for blend asymptotics.
    pub blend_levels: Vec<i32>,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            grid: 4096,
            cells: 8192,
            scan_grid: 2001,
            r0: None,
            r0_min: 1e-4,
            bisection_steps: 16,
            random_tests: 100,
            blend_levels: (4..=10).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Number of γ values including both ends (≥ 2).
    pub steps: usize,
}

impl Sweep {
    pub fn gammas(&self) -> Vec<f64> {
        let m = self.steps - 1;
        (0..=m)
            .map(|i| self.gamma_min + (self.gamma_max - self.gamma_min) * i as f64 / m as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must agree with the subcommand when present.
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    pub params: Params,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub neck: NeckSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Seeds the random Rayleigh-quotient test functions.
    #[serde(default)]
    pub seed: u64,
}

pub const PRESETS: [&str; 7] = [
    "toy",
    "neck",
    "euclidean",
    "sphere",
    "dumbbell",
    "handle",
    "sharpness",
];

fn params(n: usize, gamma: f64, lambda: f64, epsilon: f64) -> Params {
    Params {
        n,
        gamma,
        lambda,
        epsilon,
    }
}

impl ExperimentConfig {
    fn base(kind: ExperimentKind, p: Params) -> Self {
        ExperimentConfig {
            kind: Some(kind),
            params: p,
            model: ModelConfig::default(),
            neck: NeckSpec::default(),
            numerics: Numerics::default(),
            sweep: None,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let sphere = params(3, 3.0, 2.0, 0.2);
        let cfg = match name {
            "toy" => Self::base(ExperimentKind::ToyIdentity, sphere),
            "neck" => Self::base(ExperimentKind::NeckCheck, sphere),
            "euclidean" => {
                let mut c = Self::base(ExperimentKind::GreenSolve, params(3, 3.0, 0.1, 0.2));
                c.model.warp = WarpSpec::Euclidean {};
                c
            }
            "sphere" => Self::base(ExperimentKind::GreenSolve, sphere),
            "dumbbell" => {
                let mut c = Self::base(ExperimentKind::TunnelBuild, sphere);
                c.model.topology = TopologyChoice::ConnectedSum;
                c
            }
            "handle" => {
                let mut c = Self::base(ExperimentKind::TunnelBuild, sphere);
                c.model.topology = TopologyChoice::Handle;
                c.model.basepoints = vec![0.0, PI];
                c
            }
            "sharpness" => {
                let mut c = Self::preset("handle")?;
                c.kind = Some(ExperimentKind::ThresholdScan);
                c.numerics.scan_grid = 801;
                c.numerics.bisection_steps = 0;
                c.sweep = Some(Sweep {
                    gamma_min: 1.2,
                    gamma_max: 4.0,
                    steps: 29,
                });
                c
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown preset '{other}' (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Knob ranges; `Params` is checked by the library.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        self.params
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let n = &self.numerics;
        if n.grid < 16 {
            return bad(format!("numerics.grid = {} must be at least 16", n.grid));
        }
        if n.cells < 64 {
            return bad(format!("numerics.cells = {} must be at least 64", n.cells));
        }
        if n.scan_grid < 11 {
            return bad(format!(
                "numerics.scan_grid = {} must be at least 11",
                n.scan_grid
            ));
        }
        if !(n.r0_min > 0.0 && n.r0_min < 1.0) {
            return bad(format!("numerics.r0_min = {} must lie in (0, 1)", n.r0_min));
        }
        if let Some(r0) = n.r0 {
            if !(r0 > 0.0 && r0.is_finite()) {
                return bad(format!("numerics.r0 = {r0} must be positive"));
            }
        }
        if n.blend_levels.iter().any(|&k| !(1..=30).contains(&k)) {
            return bad("numerics.blend_levels must lie in 1..=30".into());
        }
        let needed = match self.model.topology {
            TopologyChoice::Handle => 2,
            _ => 1,
        };
        if self.model.basepoints.len() != needed {
            return bad(format!(
                "model.basepoints has {} entries; this topology needs {needed}",
                self.model.basepoints.len()
            ));
        }
        if let Some(s) = &self.sweep {
            if s.steps < 2 || !(s.gamma_min < s.gamma_max) {
                return bad("sweep needs steps ≥ 2 and gamma_min < gamma_max".into());
            }
        }
        Ok(())
    }

    /// Warp and neck specs after reading the profile file, if any.
    pub fn resolved_specs(&self) -> Result<(WarpSpec, NeckSpec), CliError> {
        let Some(path) = &self.model.profile else {
            return Ok((self.model.warp.clone(), self.neck.clone()));
        };
        let file = ProfileFile::load(path).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((
            file.warp.unwrap_or_else(|| self.model.warp.clone()),
            file.neck.unwrap_or_else(|| self.neck.clone()),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let back = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(ExperimentConfig::preset("torus").is_err());
    }

    #[test]
    fn strict_parsing() {
        let ok = "[params]\nn = 3\ngamma = 3.0\nlambda = 2.0\nepsilon = 0.2\n";
        assert!(ExperimentConfig::parse(ok).is_ok());
        assert!(ExperimentConfig::parse(&format!("{ok}colour = 1\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{ok}[numerics]\ngrdi = 10\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{ok}[numerics]\ngrid = 4\n")).is_err());
        assert!(ExperimentConfig::parse(
            "[params]\nn = 2\ngamma = 3.0\nlambda = 2.0\nepsilon = 0.2\n"
        )
        .is_err());
    }
}
