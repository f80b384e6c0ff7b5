//! TOML profile files: a named family with parameters, or a sampled table.
//!
//! ```toml
//! [warp]
//! family = "sphere"
//!
//! [neck]
//! family = "shoulder"
//! kappa = 4.0
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neck_profile::{build_neck_profile, NeckProfile};
use crate::warped_geometry::{Domain, EndCondition, SampledWarp, WarpProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndSpec {
    Pole,
    Boundary,
}

impl From<EndSpec> for EndCondition {
    fn from(e: EndSpec) -> Self {
        match e {
            EndSpec::Pole => EndCondition::Pole,
            EndSpec::Boundary => EndCondition::Boundary,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WarpSpec {
    Euclidean {},
    Sphere {},
    Hyperbolic {},
    /// Geodesic ball of curvature −1 with a boundary at `radius`.
    HyperbolicCap {
        radius: f64,
    },
    SpaceForm {
        curvature: f64,
    },
    SpaceFormBall {
        curvature: f64,
        radius: f64,
    },
    Cylinder {
        period: f64,
    },
    WarpedCircle {
        period: f64,
        amplitude: f64,
    },
    Sampled {
        r: Vec<f64>,
        phi: Vec<f64>,
        start: EndSpec,
        end: EndSpec,
    },
}

impl WarpSpec {
    pub fn build(&self) -> Result<WarpProfile> {
        match self {
            WarpSpec::Euclidean {} => Ok(WarpProfile::euclidean()),
            WarpSpec::Sphere {} => Ok(WarpProfile::sphere()),
            WarpSpec::Hyperbolic {} => Ok(WarpProfile::hyperbolic()),
            WarpSpec::HyperbolicCap { radius } => WarpProfile::space_form_ball(-1.0, *radius),
            WarpSpec::SpaceForm { curvature } => WarpProfile::space_form(*curvature),
            WarpSpec::SpaceFormBall { curvature, radius } => {
                WarpProfile::space_form_ball(*curvature, *radius)
            }
            WarpSpec::Cylinder { period } => WarpProfile::cylinder(*period),
            WarpSpec::WarpedCircle { period, amplitude } => {
                WarpProfile::warped_circle(*period, *amplitude)
            }
            WarpSpec::Sampled { r, phi, start, end } => {
                let (Some(&a), Some(&b)) = (r.first(), r.last()) else {
                    return Err(Error::Profile("sampled warp table is empty".into()));
                };
                let domain = Domain::Interval {
                    start: a,
                    end: b,
                    start_condition: (*start).into(),
                    end_condition: (*end).into(),
                };
                let table = SampledWarp::new(r.clone(), phi.clone())?;
                WarpProfile::new(domain, Arc::new(table), "sampled")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NeckSpec {
    Canonical {},
    Shoulder {
        kappa: f64,
    },
    #[serde(rename = "xcothx")]
    XCothX {},
    Hyperbola {
        delta: f64,
    },
    /// f on nonnegative abscissae starting at 0.
    Sampled {
        x: Vec<f64>,
        f: Vec<f64>,
    },
}

impl Default for NeckSpec {
    fn default() -> Self {
        NeckSpec::Canonical {}
    }
}

impl NeckSpec {
    pub fn build(&self) -> Result<NeckProfile> {
        match self {
            NeckSpec::Canonical {} => build_neck_profile(),
            NeckSpec::Shoulder { kappa } => NeckProfile::shoulder(*kappa),
            NeckSpec::XCothX {} => Ok(NeckProfile::xcothx()),
            NeckSpec::Hyperbola { delta } => NeckProfile::hyperbola(*delta),
            NeckSpec::Sampled { x, f } => NeckProfile::sampled(x.clone(), f.clone()),
        }
    }
}

/// Contents of a profile file; either section may be absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub warp: Option<WarpSpec>,
    pub neck: Option<NeckSpec>,
}

impl ProfileFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Profile(format!("profile file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Profile(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Profile(format!("profile file: {e}")))
    }
}
