//! Rotationally symmetric metrics dr² + φ(r)² g_round: warps, Ricci
//! components, radial Laplacian, fiber factors and decay-rate fits.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

/// Value and first three derivatives of a function of one variable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Jet {
    pub const fn new(value: f64, d1: f64, d2: f64, d3: f64) -> Self {
        Jet { value, d1, d2, d3 }
    }

    /// Jet of x ↦ g(−x) given the jet of g at −x.
    pub fn reflect(self) -> Self {
        Jet::new(self.value, -self.d1, self.d2, -self.d3)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite() && self.d3.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
    Interpolated,
}

/// A warp function. Implementations must be cheap to evaluate and thread safe.
pub trait WarpFunction: Send + Sync + fmt::Debug {
    fn jet(&self, r: f64) -> Jet;

    /// 1 − φ′(r)² when the implementation can produce it without cancellation.
    fn slope_defect(&self, _r: f64) -> Option<f64> {
        None
    }

    /// Exact cap coefficients (c₃, c₅) at a pole, if known in closed form.
    fn cap_series(&self, _pole: f64) -> Option<(f64, f64)> {
        None
    }

    fn source(&self) -> DerivativeSource {
        DerivativeSource::Analytic
    }
}

/// sn_K: r for K = 0, sin(√K r)/√K for K > 0, sinh(√−K r)/√−K for K < 0.
#[derive(Clone, Copy, Debug)]
pub struct SpaceForm {
    pub curvature: f64,
}

impl WarpFunction for SpaceForm {
    fn jet(&self, r: f64) -> Jet {
        let k = self.curvature;
        let (v, d1) = if k > 0.0 {
            let s = k.sqrt();
            ((s * r).sin() / s, (s * r).cos())
        } else if k < 0.0 {
            let s = (-k).sqrt();
            ((s * r).sinh() / s, (s * r).cosh())
        } else {
            (r, 1.0)
        };
        Jet::new(v, d1, -k * v, -k * d1)
    }

    fn slope_defect(&self, r: f64) -> Option<f64> {
        let v = self.jet(r).value;
        Some(self.curvature * v * v)
    }

    fn cap_series(&self, _pole: f64) -> Option<(f64, f64)> {
        let k = self.curvature;
        Some((-k / 6.0, k * k / 120.0))
    }
}

/// φ ≡ value (a cylinder).
#[derive(Clone, Copy, Debug)]
pub struct ConstantWarp {
    pub value: f64,
}

impl WarpFunction for ConstantWarp {
    fn jet(&self, _r: f64) -> Jet {
        Jet::new(self.value, 0.0, 0.0, 0.0)
    }

    fn slope_defect(&self, _r: f64) -> Option<f64> {
        Some(1.0)
    }
}

/// φ = base + amplitude·cos(2πr/period).
#[derive(Clone, Copy, Debug)]
pub struct CosineWarp {
    pub base: f64,
    pub amplitude: f64,
    pub period: f64,
}

impl WarpFunction for CosineWarp {
    fn jet(&self, r: f64) -> Jet {
        let k = 2.0 * PI / self.period;
        let (s, c) = (k * r).sin_cos();
        let a = self.amplitude;
        Jet::new(
            self.base + a * c,
            -a * k * s,
            -a * k * k * c,
            a * k * k * k * s,
        )
    }
}

type JetFn = dyn Fn(f64) -> Jet + Send + Sync;
type ValueFn = dyn Fn(f64) -> f64 + Send + Sync;

/// User supplied closed-form jet.
#[derive(Clone)]
pub struct AnalyticWarp {
    f: Arc<JetFn>,
}

impl AnalyticWarp {
    pub fn new(f: impl Fn(f64) -> Jet + Send + Sync + 'static) -> Self {
        AnalyticWarp { f: Arc::new(f) }
    }
}

impl fmt::Debug for AnalyticWarp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnalyticWarp")
    }
}

impl WarpFunction for AnalyticWarp {
    fn jet(&self, r: f64) -> Jet {
        (self.f)(r)
    }
}

/// Values only; derivatives by fourth-order centered differences. The function
/// must be evaluable slightly past the domain ends (odd continuation at poles).
#[derive(Clone)]
pub struct DifferencedWarp {
    f: Arc<ValueFn>,
}

impl DifferencedWarp {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        DifferencedWarp { f: Arc::new(f) }
    }
}

impl fmt::Debug for DifferencedWarp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DifferencedWarp")
    }
}

/// Fourth-order centered stencils for the first three derivatives. Step sizes
/// balance truncation against rounding for each order separately.
pub fn centered_jet(f: &dyn Fn(f64) -> f64, r: f64) -> Jet {
    let scale = r.abs().max(1.0);
    let h1 = 1e-3 * scale;
    let h2 = 3e-3 * scale;
    let h3 = 8e-3 * scale;
    let v = f(r);
    let d1 = {
        let (p1, m1, p2, m2) = (f(r + h1), f(r - h1), f(r + 2.0 * h1), f(r - 2.0 * h1));
        (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h1)
    };
    let d2 = {
        let (p1, m1, p2, m2) = (f(r + h2), f(r - h2), f(r + 2.0 * h2), f(r - 2.0 * h2));
        (-(p2 + m2) + 16.0 * (p1 + m1) - 30.0 * v) / (12.0 * h2 * h2)
    };
    let d3 = {
        let h = h3;
        let g = |k: f64| f(r + k * h) - f(r - k * h);
        (-g(3.0) + 8.0 * g(2.0) - 13.0 * g(1.0)) / (8.0 * h * h * h)
    };
    Jet::new(v, d1, d2, d3)
}

impl WarpFunction for DifferencedWarp {
    fn jet(&self, r: f64) -> Jet {
        centered_jet(&*self.f, r)
    }

    fn source(&self) -> DerivativeSource {
        DerivativeSource::FiniteDifference
    }
}

/// Tabulated warp through a monotone cubic interpolant.
#[derive(Clone, Debug)]
pub struct SampledWarp {
    table: MonotoneCubic,
}

impl SampledWarp {
    pub fn new(r: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        Ok(SampledWarp {
            table: MonotoneCubic::new(r, phi)?,
        })
    }
}

impl WarpFunction for SampledWarp {
    fn jet(&self, r: f64) -> Jet {
        let [v, d1, d2, d3] = self.table.eval(r);
        Jet::new(v, d1, d2, d3)
    }

    fn source(&self) -> DerivativeSource {
        DerivativeSource::Interpolated
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndCondition {
    Pole,
    Boundary,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    /// `end` may be +∞ (complete noncompact end) with a `Boundary` condition.
    Interval {
        start: f64,
        end: f64,
        start_condition: EndCondition,
        end_condition: EndCondition,
    },
    Circle {
        start: f64,
        period: f64,
    },
}

impl Domain {
    pub fn length(&self) -> f64 {
        match *self {
            Domain::Interval { start, end, .. } => end - start,
            Domain::Circle { period, .. } => period,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Domain::Interval { start, end, .. } => (start, end),
            Domain::Circle { start, period } => (start, start + period),
        }
    }

    pub fn is_closed(&self) -> bool {
        match *self {
            Domain::Interval {
                end,
                start_condition,
                end_condition,
                ..
            } => {
                end.is_finite()
                    && start_condition == EndCondition::Pole
                    && end_condition == EndCondition::Pole
            }
            Domain::Circle { .. } => true,
        }
    }
}

/// Cap expansion φ(p + σs) = s + c₃s³ + c₅s⁵ + … about a pole p.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapSeries {
    pub pole: f64,
    /// +1 when the domain lies to the right of the pole.
    pub orientation: f64,
    pub c3: f64,
    pub c5: f64,
}

impl CapSeries {
    fn denom(&self, s: f64) -> f64 {
        let s2 = s * s;
        1.0 + s2 * (self.c3 + self.c5 * s2)
    }

    /// −φ″/φ from the expansion.
    pub fn k_radial(&self, s: f64) -> f64 {
        let s2 = s * s;
        -(6.0 * self.c3 + 20.0 * self.c5 * s2) / self.denom(s)
    }

    /// (1 − φ′²)/φ² from the expansion.
    pub fn k_spherical(&self, s: f64) -> f64 {
        let (c3, c5) = (self.c3, self.c5);
        let s2 = s * s;
        let num = 6.0 * c3
            + s2 * ((10.0 * c5 + 9.0 * c3 * c3) + s2 * (30.0 * c3 * c5 + 25.0 * c5 * c5 * s2));
        let d = self.denom(s);
        -num / (d * d)
    }

    /// s φ′/φ − 1 from the expansion.
    pub fn log_slope_excess(&self, s: f64) -> f64 {
        let s2 = s * s;
        s2 * (2.0 * self.c3 + 4.0 * self.c5 * s2) / self.denom(s)
    }
}

/// Band around a pole inside which series replace direct division.
pub const POLE_BAND: f64 = 1e-3;

#[derive(Clone)]
pub struct WarpProfile {
    domain: Domain,
    warp: Arc<dyn WarpFunction>,
    label: String,
    caps: Vec<CapSeries>,
}

impl fmt::Debug for WarpProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WarpProfile")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("warp", &self.warp)
            .finish()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol.max(tol * a.abs().max(b.abs()))
}

const PROFILE_TOL: f64 = 1e-9;

impl WarpProfile {
    pub fn new(
        domain: Domain,
        warp: Arc<dyn WarpFunction>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mut profile = WarpProfile {
            domain,
            warp,
            label: label.into(),
            caps: Vec::new(),
        };
        profile.check_domain()?;
        profile.caps = profile.build_caps()?;
        profile.check_positive()?;
        Ok(profile)
    }

    fn check_domain(&self) -> Result<()> {
        match self.domain {
            Domain::Interval {
                start,
                end,
                start_condition,
                end_condition,
            } => {
                if !start.is_finite() || end.is_nan() || !(end > start) {
                    return Err(Error::Domain(format!("invalid interval [{start}, {end}]")));
                }
                if start_condition == EndCondition::Periodic
                    || end_condition == EndCondition::Periodic
                {
                    return Err(Error::Domain(
                        "periodic ends belong to circle domains".into(),
                    ));
                }
                if end.is_infinite() && end_condition != EndCondition::Boundary {
                    return Err(Error::Domain(
                        "an infinite end must carry a boundary condition".into(),
                    ));
                }
                Ok(())
            }
            Domain::Circle { start, period } => {
                if !start.is_finite() || !(period > 0.0 && period.is_finite()) {
                    return Err(Error::Domain(format!("invalid circle period {period}")));
                }
                let source = self.warp.source();
                let (a, b) = (self.warp.jet(start), self.warp.jet(start + period));
                let mut pairs = vec![
                    ("phi", a.value, b.value),
                    ("phi'", a.d1, b.d1),
                    ("phi''", a.d2, b.d2),
                ];
                if source != DerivativeSource::Interpolated {
                    pairs.push(("phi'''", a.d3, b.d3));
                }
                let tol = if source == DerivativeSource::FiniteDifference {
                    1e-7
                } else {
                    PROFILE_TOL
                };
                for (name, x, y) in pairs {
                    if !close(x, y, tol) {
                        return Err(Error::Profile(format!(
                            "{name} is not periodic: {x} vs {y}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn build_caps(&self) -> Result<Vec<CapSeries>> {
        let Domain::Interval {
            start,
            end,
            start_condition,
            end_condition,
        } = self.domain
        else {
            return Ok(Vec::new());
        };
        let mut caps = Vec::new();
        let length = end - start;
        let mut candidates = Vec::new();
        if start_condition == EndCondition::Pole {
            candidates.push((start, 1.0));
        }
        if end_condition == EndCondition::Pole {
            candidates.push((end, -1.0));
        }
        for (pole, orientation) in candidates {
            let jet = self.warp.jet(pole);
            if !close(jet.value, 0.0, PROFILE_TOL) {
                return Err(Error::Profile(format!(
                    "phi({pole}) = {} at a pole",
                    jet.value
                )));
            }
            if !close(orientation * jet.d1, 1.0, PROFILE_TOL) {
                return Err(Error::Profile(format!(
                    "phi'({pole}) = {} at a pole; expected {orientation}",
                    jet.d1
                )));
            }
            let tol = match self.warp.source() {
                DerivativeSource::Analytic => PROFILE_TOL,
                DerivativeSource::FiniteDifference => 1e-7,
                DerivativeSource::Interpolated => f64::INFINITY,
            };
            if jet.d2.abs() > tol {
                return Err(Error::Profile(format!(
                    "phi''({pole}) = {} breaks the smooth cap condition",
                    jet.d2
                )));
            }
            let (c3, c5) = match self.warp.cap_series(pole) {
                Some(c) => c,
                None => self.richardson_cap(pole, orientation, length),
            };
            caps.push(CapSeries {
                pole,
                orientation,
                c3,
                c5,
            });
        }
        Ok(caps)
    }

    fn richardson_cap(&self, pole: f64, orientation: f64, length: f64) -> (f64, f64) {
        let h = 0.05f64.min(0.1 * length);
        let v0 = self.warp.jet(pole).value;
        let q = |s: f64| {
            let x = pole + orientation * s;
            // distance actually realized after rounding the coordinate
            let s = (x - pole).abs();
            let v = self.warp.jet(x).value - v0;
            (v - s) / (s * s * s)
        };
        let (q1, q2, q3) = (q(h), q(0.5 * h), q(0.25 * h));
        let a1 = (4.0 * q2 - q1) / 3.0;
        let a2 = (4.0 * q3 - q2) / 3.0;
        let c3 = (16.0 * a2 - a1) / 15.0;
        let d1 = (q1 - q2) / (0.75 * h * h);
        let d2 = (q2 - q3) / (0.1875 * h * h);
        let c5 = (4.0 * d2 - d1) / 3.0;
        (c3, c5)
    }

    fn check_positive(&self) -> Result<()> {
        let (a, b) = self.domain.bounds();
        let b = if b.is_finite() { b } else { a + 50.0 };
        let m = 512;
        for i in 1..m {
            let r = a + (b - a) * i as f64 / m as f64;
            let v = self.warp.jet(r).value;
            if !(v > 0.0) {
                return Err(Error::Profile(format!("phi({r}) = {v} is not positive")));
            }
        }
        Ok(())
    }

    /// Flat ℝⁿ in polar coordinates about the origin.
    pub fn euclidean() -> Self {
        Self::space_form(0.0).expect("flat model is valid")
    }

    /// Unit round sphere, r ∈ [0, π].
    pub fn sphere() -> Self {
        Self::space_form(1.0).expect("round model is valid")
    }

    /// Hyperbolic space of curvature −1 about a point.
    pub fn hyperbolic() -> Self {
        Self::space_form(-1.0).expect("hyperbolic model is valid")
    }

    /// Complete simply connected space form of constant curvature `k`.
    pub fn space_form(k: f64) -> Result<Self> {
        if !k.is_finite() {
            return Err(Error::Domain(format!("curvature {k} must be finite")));
        }
        let domain = if k > 0.0 {
            Domain::Interval {
                start: 0.0,
                end: PI / k.sqrt(),
                start_condition: EndCondition::Pole,
                end_condition: EndCondition::Pole,
            }
        } else {
            Domain::Interval {
                start: 0.0,
                end: f64::INFINITY,
                start_condition: EndCondition::Pole,
                end_condition: EndCondition::Boundary,
            }
        };
        Self::new(
            domain,
            Arc::new(SpaceForm { curvature: k }),
            format!("space-form(K={k})"),
        )
    }

    /// Geodesic ball of radius `radius` in the space form of curvature `k`.
    pub fn space_form_ball(k: f64, radius: f64) -> Result<Self> {
        if k > 0.0 && radius >= PI / k.sqrt() {
            return Err(Error::Domain(format!(
                "radius {radius} reaches the antipode"
            )));
        }
        let domain = Domain::Interval {
            start: 0.0,
            end: radius,
            start_condition: EndCondition::Pole,
            end_condition: EndCondition::Boundary,
        };
        Self::new(
            domain,
            Arc::new(SpaceForm { curvature: k }),
            format!("ball(K={k}, R={radius})"),
        )
    }

    /// Round cylinder S^{n−1} × circle of length `period`.
    pub fn cylinder(period: f64) -> Result<Self> {
        Self::new(
            Domain::Circle { start: 0.0, period },
            Arc::new(ConstantWarp { value: 1.0 }),
            format!("cylinder(L={period})"),
        )
    }

    /// Circle of length `period` with φ = 1 + amplitude·cos(2πr/period).
    pub fn warped_circle(period: f64, amplitude: f64) -> Result<Self> {
        if !(amplitude.abs() < 1.0) {
            return Err(Error::Domain(format!(
                "amplitude {amplitude} must stay below 1"
            )));
        }
        Self::new(
            Domain::Circle { start: 0.0, period },
            Arc::new(CosineWarp {
                base: 1.0,
                amplitude,
                period,
            }),
            format!("warped-circle(L={period}, a={amplitude})"),
        )
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn warp(&self) -> &Arc<dyn WarpFunction> {
        &self.warp
    }

    pub fn source(&self) -> DerivativeSource {
        self.warp.source()
    }

    pub fn caps(&self) -> &[CapSeries] {
        &self.caps
    }

    pub fn poles(&self) -> Vec<f64> {
        self.caps.iter().map(|c| c.pole).collect()
    }

    pub fn cap_at(&self, pole: f64) -> Option<&CapSeries> {
        self.caps
            .iter()
            .find(|c| (c.pole - pole).abs() <= 1e-12 * pole.abs().max(1.0))
    }

    pub fn is_closed(&self) -> bool {
        self.domain.is_closed()
    }

    /// Reduces a circle coordinate to [start, start + period).
    pub fn wrap(&self, r: f64) -> f64 {
        match self.domain {
            Domain::Circle { start, period } => start + (r - start).rem_euclid(period),
            Domain::Interval { .. } => r,
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        match self.domain {
            Domain::Interval { start, end, .. } => r >= start && r <= end,
            Domain::Circle { .. } => r.is_finite(),
        }
    }

    fn locate(&self, r: f64) -> Result<f64> {
        if !self.contains(r) {
            return Err(Error::Domain(format!(
                "r = {r} lies outside {:?}",
                self.domain
            )));
        }
        Ok(self.wrap(r))
    }

    pub fn jet(&self, r: f64) -> Result<Jet> {
        let r = self.locate(r)?;
        Ok(self.warp.jet(r))
    }

    pub fn phi(&self, r: f64) -> Result<f64> {
        Ok(self.jet(r)?.value)
    }

    /// Nearest cap and the distance to it.
    pub fn nearest_cap(&self, r: f64) -> Option<(&CapSeries, f64)> {
        self.caps
            .iter()
            .map(|c| (c, (r - c.pole).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Polar chart about one of the profile's poles.
    pub fn chart(&self, pole: f64) -> Result<PoleChart> {
        let cap = *self
            .cap_at(pole)
            .ok_or_else(|| Error::Domain(format!("{pole} is not a pole of {}", self.label)))?;
        let (a, b) = self.domain.bounds();
        let reach = if cap.orientation > 0.0 {
            b - a
        } else {
            cap.pole - a
        };
        Ok(PoleChart {
            profile: self.clone(),
            cap,
            reach,
        })
    }
}

/// The warp seen as a function of the distance s from a pole.
#[derive(Clone, Debug)]
pub struct PoleChart {
    profile: WarpProfile,
    cap: CapSeries,
    reach: f64,
}

impl PoleChart {
    pub fn cap(&self) -> &CapSeries {
        &self.cap
    }

    /// Distance from the pole to the far end of the domain.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn profile(&self) -> &WarpProfile {
        &self.profile
    }

    /// Ambient coordinate at distance s.
    pub fn coordinate(&self, s: f64) -> f64 {
        self.cap.pole + self.cap.orientation * s
    }

    pub fn jet(&self, s: f64) -> Jet {
        let j = self.profile.warp.jet(self.coordinate(s));
        if self.cap.orientation > 0.0 {
            j
        } else {
            j.reflect()
        }
    }

    /// s φ′/φ − 1, by series inside the pole band.
    pub fn log_slope_excess(&self, s: f64) -> f64 {
        if s < POLE_BAND {
            return self.cap.log_slope_excess(s);
        }
        let j = self.jet(s);
        s * j.d1 / j.value - 1.0
    }
}

/// Ricci data at one radius. Mixed components vanish in this symmetry class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureSample {
    pub r: f64,
    pub ric_rr: f64,
    pub ric_ee: f64,
    pub ric_mixed: f64,
    pub ric_min: f64,
}

impl CurvatureSample {
    pub fn from_components(r: f64, ric_rr: f64, ric_ee: f64) -> Self {
        CurvatureSample {
            r,
            ric_rr,
            ric_ee,
            ric_mixed: 0.0,
            ric_min: ric_rr.min(ric_ee),
        }
    }
}

/// (n−1)-volume of the unit round sphere S^{n−1}.
pub fn sphere_area(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("sphere_area needs n >= 2, got {n}")));
    }
    let mut area = if n.is_multiple_of(2) { 2.0 * PI } else { 4.0 * PI };
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k < n {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    Ok(area)
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension {n} must be at least 2")));
    }
    Ok(())
}

/// Radial and spherical sectional curvatures (K_rad, K_sph) = (−φ″/φ, (1−φ′²)/φ²).
pub fn sectional_curvatures(w: &WarpProfile, r: f64) -> Result<(f64, f64)> {
    let r = w.locate(r)?;
    let jet = w.warp.jet(r);
    let exact = w.warp.slope_defect(r);
    if let Some((cap, s)) = w.nearest_cap(r) {
        let underflow = jet.value.abs() < f64::MIN_POSITIVE.sqrt();
        if (s < POLE_BAND && exact.is_none()) || underflow {
            return Ok((cap.k_radial(s), cap.k_spherical(s)));
        }
    }
    if !(jet.value > 0.0) {
        return Err(Error::Singularity { r });
    }
    let defect = exact.unwrap_or((1.0 - jet.d1) * (1.0 + jet.d1));
    Ok((-jet.d2 / jet.value, defect / (jet.value * jet.value)))
}

/// Ricci components of a warped metric from a jet of φ.
pub fn curvature_from_jet(
    n: usize,
    r: f64,
    jet: Jet,
    slope_defect: Option<f64>,
) -> Result<CurvatureSample> {
    check_dim(n)?;
    if !(jet.value > 0.0) {
        return Err(Error::Singularity { r });
    }
    let defect = slope_defect.unwrap_or((1.0 - jet.d1) * (1.0 + jet.d1));
    let k_rad = -jet.d2 / jet.value;
    let k_sph = defect / (jet.value * jet.value);
    let nf = n as f64;
    Ok(CurvatureSample::from_components(
        r,
        (nf - 1.0) * k_rad,
        k_rad + (nf - 2.0) * k_sph,
    ))
}

/// Ric(∂_r, ∂_r) = −(n−1)φ″/φ.
pub fn ricci_radial(w: &WarpProfile, n: usize, r: f64) -> Result<f64> {
    check_dim(n)?;
    let (k_rad, _) = sectional_curvatures(w, r)?;
    Ok((n as f64 - 1.0) * k_rad)
}

/// Ric(e, e) for a unit fiber direction: −φ″/φ + (n−2)(1−φ′²)/φ².
pub fn ricci_tangential(w: &WarpProfile, n: usize, r: f64) -> Result<f64> {
    check_dim(n)?;
    let (k_rad, k_sph) = sectional_curvatures(w, r)?;
    Ok(k_rad + (n as f64 - 2.0) * k_sph)
}

pub fn ricci_min(w: &WarpProfile, n: usize, r: f64) -> Result<CurvatureSample> {
    check_dim(n)?;
    let (k_rad, k_sph) = sectional_curvatures(w, r)?;
    let nf = n as f64;
    Ok(CurvatureSample::from_components(
        r,
        (nf - 1.0) * k_rad,
        k_rad + (nf - 2.0) * k_sph,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoleLimit {
    /// Evaluation at a pole is an error.
    Reject,
    /// At a pole assume u′ → 0 and use the limit n·u″.
    Regular,
}

/// Δu = u″ + (n−1)(φ′/φ)u′ for a radial function with jet `u` at r.
pub fn laplacian_radial(
    w: &WarpProfile,
    n: usize,
    u: Jet,
    r: f64,
    limit: PoleLimit,
) -> Result<f64> {
    check_dim(n)?;
    let r = w.locate(r)?;
    let jet = w.warp.jet(r);
    let at_pole = w.caps.iter().any(|c| c.pole == r) || jet.value == 0.0;
    if at_pole {
        return match limit {
            PoleLimit::Regular => Ok(n as f64 * u.d2),
            PoleLimit::Reject => Err(Error::Singularity { r }),
        };
    }
    if !(jet.value > 0.0) {
        return Err(Error::Singularity { r });
    }
    Ok(u.d2 + (n as f64 - 1.0) * jet.d1 / jet.value * u.d1)
}

/// a(s) = (φ/s)² and its first two s-derivatives in the polar chart of a pole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberFactor {
    pub a: f64,
    pub da: f64,
    pub dda: f64,
}

impl PoleChart {
    pub fn fiber_factor(&self, s: f64) -> Result<FiberFactor> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("fiber factor needs s > 0, got {s}")));
        }
        if s > self.reach {
            return Err(Error::Domain(format!(
                "s = {s} leaves the chart (reach {})",
                self.reach
            )));
        }
        let j = self.jet(s);
        let ratio = j.value / s;
        // G = sφ′ − φ and s²φ″ − 2G, both O(s³) near the pole
        let (g_over, h_over) = if s < POLE_BAND {
            let (c3, c5) = (self.cap.c3, self.cap.c5);
            let s2 = s * s;
            (s * (2.0 * c3 + 4.0 * c5 * s2), 2.0 * c3 + 12.0 * c5 * s2)
        } else {
            let g = s * j.d1 - j.value;
            (g / (s * s), (s * s * j.d2 - 2.0 * g) / (s * s * s))
        };
        Ok(FiberFactor {
            a: ratio * ratio,
            da: 2.0 * ratio * g_over,
            dda: 2.0 * (g_over * g_over + ratio * h_over),
        })
    }
}

/// Fiber factor at distance s from `pole`.
pub fn fiber_factor(w: &WarpProfile, pole: f64, s: f64) -> Result<FiberFactor> {
    w.chart(pole)?.fiber_factor(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum RateClaim {
    /// q = o(1)
    Bounded,
    /// q = o(r⁻¹)
    InverseLinear,
    /// q = o(r⁻²)
    InverseQuadratic,
}

impl RateClaim {
    pub fn power(self) -> i32 {
        match self {
            RateClaim::Bounded => 0,
            RateClaim::InverseLinear => 1,
            RateClaim::InverseQuadratic => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RateClaim::Bounded => "o(1)",
            RateClaim::InverseLinear => "o(r^-1)",
            RateClaim::InverseQuadratic => "o(r^-2)",
        }
    }
}

pub const RATE_MARGIN: f64 = 0.5;
pub const MIN_RATE_LEVELS: usize = 6;
/// Scaled samples at or below this are treated as numerically zero.
pub const RATE_NOISE_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RateReport {
    pub claim: RateClaim,
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub passed: bool,
}

/// Fits the log-log slope of |q|·r^k against r over a decreasing radius
/// sequence; the claim holds when the slope is at least `RATE_MARGIN`.
pub fn rate_check(samples: &[(f64, f64)], claim: RateClaim) -> Result<RateReport> {
    if samples.len() < MIN_RATE_LEVELS {
        return Err(Error::InsufficientData {
            needed: MIN_RATE_LEVELS,
            got: samples.len(),
        });
    }
    if samples
        .iter()
        .any(|&(r, q)| !(r > 0.0) || !r.is_finite() || q.is_nan())
    {
        return Err(Error::Domain(
            "rate samples need positive radii and finite values".into(),
        ));
    }
    if samples.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::Domain(
            "rate samples must have strictly decreasing radii".into(),
        ));
    }
    let k = claim.power();
    let scaled: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(r, q)| (r, q.abs() * r.powi(k)))
        .collect();
    let slope = if scaled.iter().all(|&(_, v)| v <= RATE_NOISE_FLOOR) {
        f64::INFINITY
    } else if scaled.iter().any(|&(_, v)| v.is_infinite()) {
        f64::NEG_INFINITY
    } else {
        let pts: Vec<(f64, f64)> = scaled
            .iter()
            .map(|&(r, v)| (r.ln(), v.max(RATE_NOISE_FLOOR).ln()))
            .collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    Ok(RateReport {
        claim,
        samples: samples.to_vec(),
        slope,
        passed: slope >= RATE_MARGIN,
    })
}

/// Radii r_top·2^{−j} for j = 0..levels.
pub fn dyadic_radii(r_top: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|j| r_top * 0.5f64.powi(j as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sphere_area_closed_forms() {
        assert_relative_eq!(sphere_area(2).unwrap(), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(3).unwrap(), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(4).unwrap(), 2.0 * PI * PI, max_relative = 1e-15);
        // |S⁴| = 8π²/3, |S⁵| = π³
        assert_relative_eq!(
            sphere_area(5).unwrap(),
            8.0 * PI * PI / 3.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(sphere_area(6).unwrap(), PI.powi(3), max_relative = 1e-15);
        assert!(sphere_area(1).is_err());
    }

    #[test]
    fn space_form_examples() {
        let e = WarpProfile::euclidean();
        let s = WarpProfile::sphere();
        let h = WarpProfile::hyperbolic();
        assert_eq!(ricci_radial(&e, 3, 0.7).unwrap(), 0.0);
        assert_relative_eq!(
            ricci_radial(&s, 3, PI / 4.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            ricci_radial(&h, 3, 1.0).unwrap(),
            -2.0,
            max_relative = 1e-14
        );
        assert_eq!(ricci_tangential(&e, 4, 2.0).unwrap(), 0.0);
        assert_relative_eq!(
            ricci_tangential(&s, 3, PI / 3.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        let c = WarpProfile::cylinder(5.0).unwrap();
        assert_eq!(ricci_tangential(&c, 3, 1.3).unwrap(), 1.0);
        let sample = ricci_min(&c, 3, 0.2).unwrap();
        assert_eq!(sample.ric_min, 0.0);
        assert_eq!(sample.ric_mixed, 0.0);
    }

    #[test]
    fn pole_evaluation_uses_cap_series() {
        let s = WarpProfile::sphere();
        for r in [0.0, 1e-200, 1e-8, PI] {
            assert_relative_eq!(ricci_radial(&s, 4, r).unwrap(), 3.0, max_relative = 1e-12);
            assert_relative_eq!(
                ricci_tangential(&s, 4, r).unwrap(),
                3.0,
                max_relative = 1e-12
            );
        }
        // a closure-backed sphere has no exact slope defect: series inside the band
        let warp = AnalyticWarp::new(|r| Jet::new(r.sin(), r.cos(), -r.sin(), -r.cos()));
        let domain = WarpProfile::sphere().domain();
        let p = WarpProfile::new(domain, Arc::new(warp), "closure-sphere").unwrap();
        let cap = p.caps()[0];
        assert_relative_eq!(cap.c3, -1.0 / 6.0, max_relative = 1e-10);
        assert_relative_eq!(cap.c5, 1.0 / 120.0, max_relative = 1e-5);
        for r in [1e-9, 1e-5, 5e-4] {
            assert_relative_eq!(
                ricci_tangential(&p, 3, r).unwrap(),
                2.0,
                max_relative = 1e-10
            );
            assert_relative_eq!(
                ricci_radial(&p, 3, PI - r).unwrap(),
                2.0,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn invalid_profiles_rejected() {
        let dom = Domain::Interval {
            start: 0.0,
            end: 1.0,
            start_condition: EndCondition::Pole,
            end_condition: EndCondition::Boundary,
        };
        let shifted = AnalyticWarp::new(|r| Jet::new(r + 0.1, 1.0, 0.0, 0.0));
        assert!(WarpProfile::new(dom, Arc::new(shifted), "shifted").is_err());
        let steep = AnalyticWarp::new(|r| Jet::new(2.0 * r, 2.0, 0.0, 0.0));
        assert!(WarpProfile::new(dom, Arc::new(steep), "steep").is_err());
        let kinked = AnalyticWarp::new(|r| Jet::new(r + r * r, 1.0 + 2.0 * r, 2.0, 0.0));
        assert!(WarpProfile::new(dom, Arc::new(kinked), "kinked").is_err());
        let circle = Domain::Circle {
            start: 0.0,
            period: 1.0,
        };
        let aperiodic = AnalyticWarp::new(|r| Jet::new(1.0 + 0.1 * r, 0.1, 0.0, 0.0));
        assert!(WarpProfile::new(circle, Arc::new(aperiodic), "aperiodic").is_err());
        assert!(WarpProfile::warped_circle(1.0, 1.5).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let e = WarpProfile::euclidean();
        let r = 0.8;
        let inv = Jet::new(1.0 / r, -1.0 / (r * r), 2.0 / (r * r * r), 0.0);
        assert!(
            laplacian_radial(&e, 3, inv, r, PoleLimit::Reject)
                .unwrap()
                .abs()
                < 1e-14
        );
        let sq = Jet::new(r * r, 2.0 * r, 2.0, 0.0);
        assert_relative_eq!(
            laplacian_radial(&e, 5, sq, r, PoleLimit::Reject).unwrap(),
            10.0,
            max_relative = 1e-14
        );
        let at0 = Jet::new(0.0, 0.0, 2.0, 0.0);
        assert!(laplacian_radial(&e, 5, at0, 0.0, PoleLimit::Reject).is_err());
        assert_eq!(
            laplacian_radial(&e, 5, at0, 0.0, PoleLimit::Regular).unwrap(),
            10.0
        );
    }

    #[test]
    fn fiber_factor_examples() {
        let e = WarpProfile::euclidean();
        let ff = fiber_factor(&e, 0.0, 0.3).unwrap();
        assert_eq!((ff.a, ff.da, ff.dda), (1.0, 0.0, 0.0));
        let s = WarpProfile::sphere();
        let ff = fiber_factor(&s, 0.0, 1.0).unwrap();
        assert_relative_eq!(ff.a, 1f64.sin().powi(2), max_relative = 1e-15);
        // same from the south pole by symmetry
        let south = fiber_factor(&s, PI, 1.0).unwrap();
        assert_relative_eq!(south.a, ff.a, max_relative = 1e-14);
        assert_relative_eq!(south.da, ff.da, max_relative = 1e-12);
        let h = WarpProfile::hyperbolic();
        assert_relative_eq!(
            fiber_factor(&h, 0.0, 1e-6).unwrap().a,
            1.0,
            max_relative = 1e-11
        );
        assert!(fiber_factor(&s, 0.0, 0.0).is_err());
        assert!(fiber_factor(&s, 0.0, 4.0).is_err());
        assert!(fiber_factor(&s, 1.0, 0.5).is_err());
    }

    #[test]
    fn fiber_factor_derivatives_match_differences() {
        // Oracle: centered differences of a(s) = (sin s / s)² computed here.
        let s = WarpProfile::sphere();
        let chart = s.chart(0.0).unwrap();
        let a = |x: f64| if x == 0.0 { 1.0 } else { (x.sin() / x).powi(2) };
        for x in [5e-4, 2e-3, 0.1, 1.0, 2.5] {
            let ff = chart.fiber_factor(x).unwrap();
            let d = centered_jet(&a, x);
            assert!(
                (ff.da - d.d1).abs() < 1e-9,
                "da at {x}: {} vs {}",
                ff.da,
                d.d1
            );
            assert!(
                (ff.dda - d.d2).abs() < 1e-7,
                "dda at {x}: {} vs {}",
                ff.dda,
                d.d2
            );
        }
    }

    #[test]
    fn fiber_rates_on_the_sphere() {
        let chart = WarpProfile::sphere().chart(0.0).unwrap();
        let radii = dyadic_radii(0.25, 8);
        let collect = |pick: fn(&FiberFactor) -> f64| -> Vec<(f64, f64)> {
            radii
                .iter()
                .map(|&r| (r, pick(&chart.fiber_factor(r).unwrap())))
                .collect()
        };
        let r0 = rate_check(&collect(|f| f.a - 1.0), RateClaim::Bounded).unwrap();
        let r1 = rate_check(&collect(|f| f.da), RateClaim::InverseLinear).unwrap();
        let r2 = rate_check(&collect(|f| f.dda), RateClaim::InverseQuadratic).unwrap();
        assert!(r0.passed && r1.passed && r2.passed);
        assert!((r0.slope - 2.0).abs() < 0.05);
    }

    #[test]
    fn rate_check_examples() {
        let radii = dyadic_radii(1.0, 8);
        let linear: Vec<_> = radii.iter().map(|&r| (r, r)).collect();
        let report = rate_check(&linear, RateClaim::Bounded).unwrap();
        assert!(report.passed);
        assert_relative_eq!(report.slope, 1.0, max_relative = 1e-12);
        let flat: Vec<_> = radii.iter().map(|&r| (r, 1.0)).collect();
        assert!(!rate_check(&flat, RateClaim::Bounded).unwrap().passed);
        let zero: Vec<_> = radii.iter().map(|&r| (r, 0.0)).collect();
        assert_eq!(
            rate_check(&zero, RateClaim::InverseQuadratic)
                .unwrap()
                .slope,
            f64::INFINITY
        );
        assert!(matches!(
            rate_check(&linear[..5], RateClaim::Bounded),
            Err(Error::InsufficientData { needed: 6, got: 5 })
        ));
        let mut increasing = linear.clone();
        increasing.reverse();
        assert!(rate_check(&increasing, RateClaim::Bounded).is_err());
    }

    #[test]
    fn differenced_warp_tracks_analytic() {
        let fd = DifferencedWarp::new(|r: f64| r.sin());
        let dom = WarpProfile::sphere().domain();
        let p = WarpProfile::new(dom, Arc::new(fd), "fd-sphere").unwrap();
        for r in [0.3, 1.0, 2.0] {
            let j = p.jet(r).unwrap();
            assert!((j.d1 - r.cos()).abs() < 1e-11);
            assert!((j.d2 + r.sin()).abs() < 1e-9);
            assert!((j.d3 + r.cos()).abs() < 1e-6);
            assert!((ricci_tangential(&p, 3, r).unwrap() - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn circle_wraps_coordinates() {
        let c = WarpProfile::warped_circle(2.0, 0.3).unwrap();
        assert_relative_eq!(
            c.phi(-0.5).unwrap(),
            c.phi(1.5).unwrap(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            c.phi(4.25).unwrap(),
            c.phi(0.25).unwrap(),
            max_relative = 1e-14
        );
        assert!(c.is_closed());
        assert!(c.poles().is_empty());
    }

    proptest! {
        #[test]
        fn components_agree_with_sectional_form(r in 0.01f64..3.1, n in 2usize..9) {
            let s = WarpProfile::space_form(0.7).unwrap();
            prop_assume!(s.contains(r));
            let (kr, ks) = sectional_curvatures(&s, r).unwrap();
            let nf = n as f64;
            let rr = ricci_radial(&s, n, r).unwrap();
            let ee = ricci_tangential(&s, n, r).unwrap();
            prop_assert!((rr - (nf - 1.0) * kr).abs() <= 1e-12 * rr.abs().max(1e-300));
            prop_assert!((ee - (kr + (nf - 2.0) * ks)).abs() <= 1e-12 * ee.abs().max(1e-300));
            let m = ricci_min(&s, n, r).unwrap();
            prop_assert_eq!(m.ric_min, rr.min(ee));
        }

        #[test]
        fn space_forms_exact(r in 1e-6f64..3.1, n in 3usize..8) {
            let nf = n as f64;
            for (k, expect) in [(0.0, 0.0), (1.0, nf - 1.0), (-1.0, 1.0 - nf)] {
                let w = WarpProfile::space_form(k).unwrap();
                let rr = ricci_radial(&w, n, r).unwrap();
                let ee = ricci_tangential(&w, n, r).unwrap();
                prop_assert!((rr - expect).abs() <= 1e-12 * expect.abs());
                prop_assert!((ee - expect).abs() <= 1e-12 * expect.abs());
            }
        }

        #[test]
        fn fiber_factor_positive_and_tends_to_one(s in 1e-7f64..3.0) {
            let chart = WarpProfile::sphere().chart(0.0).unwrap();
            let ff = chart.fiber_factor(s).unwrap();
            prop_assert!(ff.a > 0.0);
            prop_assert!((ff.a - 1.0).abs() <= s * s / 3.0 + 1e-15);
        }
    }
}
