//! Tunnel surgery between two pole basepoints: blended fiber and Green
//! profiles, the glued warp Φ = r₀f(r/r₀)√β and function
//! ũ = b(r₀f)^{2−n}w̃, pointwise defects, and the search for admissible r₀.
//!
//! Tunnel coordinate r ∈ [−r₀, r₀]; r < 0 is the chart of the first
//! basepoint with r ↦ −r reversed, r > 0 the chart of the second.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::green_radial::GreenSolution;
use crate::neck_profile::{CutoffEta, NeckProfile};
use crate::params::Params;
use crate::spectral::{
    supersolution_defect, DefectPoint, DefectProfile, EndKind, SlDomain, SturmLiouville,
};
use crate::warped_geometry::{
    curvature_from_jet, dyadic_radii, laplacian_radial, rate_check, ricci_min, CurvatureSample,
    Domain, EndCondition, FiberFactor, Jet, PoleChart, PoleLimit, RateClaim, RateReport,
};

/// Relative tolerance of value/derivative matching at |r| = r₀.
pub const INTERFACE_TOL: f64 = 1e-8;
/// r₀ may not exceed this fraction of min{1, d(x₁, x₂), ε}.
pub const R0_FRACTION: f64 = 0.1;
/// Smallest r₀ tried by the search.
pub const MIN_R0: f64 = 1e-4;
/// Default tunnel grid of the defect scan.
pub const DEFAULT_SCAN_GRID: usize = 2001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Topology {
    ConnectedSum,
    Handle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    /// 2r₀/3 ≤ |r| ≤ r₀
    RegionI,
    /// |r| < 2r₀/3
    RegionII,
    Ambient,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::RegionI => "I",
            Region::RegionII => "II",
            Region::Ambient => "ambient",
        }
    }
}

/// One basepoint seen from the tunnel.
#[derive(Clone)]
struct Side {
    sol: Arc<GreenSolution>,
    basepoint: f64,
    chart: PoleChart,
}

impl Side {
    fn new(sol: Arc<GreenSolution>, basepoint: f64) -> Result<Self> {
        let chart = sol.model().warp().chart(basepoint)?;
        Ok(Side {
            sol,
            basepoint,
            chart,
        })
    }

    fn n(&self) -> usize {
        self.sol.model().params().n
    }

    fn fiber(&self, s: f64) -> Result<FiberFactor> {
        self.chart.fiber_factor(s)
    }

    /// φ, φ_s, φ_ss at distance s.
    fn warp(&self, s: f64) -> [f64; 3] {
        let j = self.chart.jet(s);
        [j.value, j.d1, j.d2]
    }

    /// u, u_s, u_ss at distance s.
    fn u(&self, s: f64) -> Result<[f64; 3]> {
        let o = self.chart.cap().orientation;
        let [u, du, ddu] = self.sol.u_jet(self.chart.coordinate(s))?;
        Ok([u, o * du, ddu])
    }

    fn curvature(&self, s: f64) -> Result<CurvatureSample> {
        ricci_min(self.sol.model().warp(), self.n(), self.chart.coordinate(s))
    }

    fn laplacian(&self, s: f64) -> Result<(f64, [f64; 3])> {
        let x = self.chart.coordinate(s);
        let [u, du, ddu] = self.sol.u_jet(x)?;
        let lap = laplacian_radial(
            self.sol.model().warp(),
            self.n(),
            Jet::new(u, du, ddu, 0.0),
            x,
            PoleLimit::Regular,
        )?;
        Ok((lap, [u, du, ddu]))
    }

    /// Condition at the end of the ambient away from the basepoint.
    fn far_end(&self) -> Option<EndKind> {
        let reach = self.chart.reach();
        if !reach.is_finite() {
            return None;
        }
        let cond = match self.sol.model().warp().domain() {
            Domain::Interval {
                start_condition,
                end_condition,
                ..
            } => {
                if self.chart.cap().orientation > 0.0 {
                    end_condition
                } else {
                    start_condition
                }
            }
            Domain::Circle { .. } => EndCondition::Periodic,
        };
        Some(if cond == EndCondition::Pole {
            EndKind::Pole
        } else {
            EndKind::Dirichlet
        })
    }
}

/// The ambient data a tunnel is built from.
#[derive(Clone)]
pub enum Ambient {
    /// Two models, one basepoint each.
    ConnectedSum([Arc<GreenSolution>; 2]),
    /// One model with both basepoints.
    Handle(Arc<GreenSolution>),
}

impl fmt::Debug for Ambient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ambient::ConnectedSum(s) => f
                .debug_tuple("ConnectedSum")
                .field(&s[0])
                .field(&s[1])
                .finish(),
            Ambient::Handle(s) => f.debug_tuple("Handle").field(s).finish(),
        }
    }
}

impl Ambient {
    pub fn connected_sum(first: GreenSolution, second: GreenSolution) -> Result<Self> {
        for sol in [&first, &second] {
            if sol.model().basepoints().len() != 1 {
                return Err(Error::Precondition(
                    "each component of a connected sum carries exactly one basepoint".into(),
                ));
            }
        }
        if first.model().params() != second.model().params() {
            return Err(Error::Precondition(
                "components use different parameters".into(),
            ));
        }
        Ok(Ambient::ConnectedSum([Arc::new(first), Arc::new(second)]))
    }

    pub fn handle(sol: GreenSolution) -> Result<Self> {
        if sol.model().basepoints().len() != 2 {
            return Err(Error::Precondition(
                "a handle needs two basepoints on one model".into(),
            ));
        }
        Ok(Ambient::Handle(Arc::new(sol)))
    }

    pub fn params(&self) -> Params {
        match self {
            Ambient::ConnectedSum(s) => *s[0].model().params(),
            Ambient::Handle(s) => *s.model().params(),
        }
    }

    pub fn topology(&self) -> Topology {
        match self {
            Ambient::ConnectedSum(_) => Topology::ConnectedSum,
            Ambient::Handle(_) => Topology::Handle,
        }
    }

    /// d(x₁, x₂); infinite across components.
    pub fn basepoint_distance(&self) -> f64 {
        match self {
            Ambient::ConnectedSum(_) => f64::INFINITY,
            Ambient::Handle(s) => {
                let b = s.model().basepoints();
                (b[1] - b[0]).abs()
            }
        }
    }

    /// Largest r₀ the construction accepts: 0.1·min{1, d(x₁, x₂), ε}.
    pub fn max_r0(&self) -> f64 {
        R0_FRACTION
            * 1f64
                .min(self.basepoint_distance())
                .min(self.params().epsilon)
    }

    fn sides(&self) -> Result<[Side; 2]> {
        match self {
            Ambient::ConnectedSum(s) => Ok([
                Side::new(s[0].clone(), s[0].model().basepoints()[0])?,
                Side::new(s[1].clone(), s[1].model().basepoints()[0])?,
            ]),
            Ambient::Handle(s) => {
                let b = s.model().basepoints();
                Ok([Side::new(s.clone(), b[0])?, Side::new(s.clone(), b[1])?])
            }
        }
    }
}

/// β = η(r/r₀)a + 1 − η and w̃ = η(r/r₀)w + 1 − η on the tunnel.
#[derive(Clone)]
pub struct BlendedData {
    r0: f64,
    eta: CutoffEta,
    sides: [Side; 2],
}

impl fmt::Debug for BlendedData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlendedData").field("r0", &self.r0).finish()
    }
}

pub fn blend_profiles(ambient: &Ambient, r0: f64, eta: CutoffEta) -> Result<BlendedData> {
    let max = ambient.max_r0();
    if !(r0 > 0.0 && r0 <= max * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!(
            "r0 = {r0} must lie in (0, {max}] = (0, 0.1 min{{1, d(x1,x2), epsilon}}]"
        )));
    }
    Ok(BlendedData {
        r0,
        eta,
        sides: ambient.sides()?,
    })
}

fn blend(eta: [f64; 3], r0: f64, sign: f64, g: [f64; 3]) -> [f64; 3] {
    let [e, de, dde] = eta;
    let (er, err) = (de / r0, dde / (r0 * r0));
    let (v, vr, vrr) = (g[0] - 1.0, sign * g[1], g[2]);
    [
        1.0 + e * v,
        er * v + e * vr,
        err * v + 2.0 * er * vr + e * vrr,
    ]
}

impl BlendedData {
    pub fn r0(&self) -> f64 {
        self.r0
    }

    fn locate(&self, r: f64) -> Result<(&Side, f64, f64, [f64; 3])> {
        if !(r.abs() <= self.r0 * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "r = {r} lies outside the tunnel [-{0}, {0}]",
                self.r0
            )));
        }
        let eta = self.eta.jet(r / self.r0);
        let (side, sign) = if r < 0.0 {
            (&self.sides[0], -1.0)
        } else {
            (&self.sides[1], 1.0)
        };
        Ok((side, r.abs().min(self.r0), sign, eta))
    }

    /// β, β_r, β_rr.
    pub fn beta(&self, r: f64) -> Result<[f64; 3]> {
        let (side, s, sign, eta) = self.locate(r)?;
        if eta == [0.0; 3] {
            return Ok([1.0, 0.0, 0.0]);
        }
        let ff = side.fiber(s)?;
        Ok(blend(eta, self.r0, sign, [ff.a, ff.da, ff.dda]))
    }

    /// w̃, w̃_r, w̃_rr.
    pub fn wtilde(&self, r: f64) -> Result<[f64; 3]> {
        let (side, s, sign, eta) = self.locate(r)?;
        if eta == [0.0; 3] {
            return Ok([1.0, 0.0, 0.0]);
        }
        let w = side.sol.w(side.basepoint, s)?;
        Ok(blend(eta, self.r0, sign, [w.w, w.dw, w.ddw]))
    }
}

/// Everything known at one tunnel point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunnelPoint {
    pub r: f64,
    pub f: Jet,
    pub excess: f64,
    pub slope_gap: f64,
    pub beta: [f64; 3],
    pub wtilde: [f64; 3],
    pub phi: [f64; 3],
    pub u: [f64; 3],
}

/// Relative mismatch |inside − outside|/max(1, |outside|) per derivative order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterfaceReport {
    pub phi: [f64; 3],
    pub u: [f64; 3],
    pub max: f64,
    pub passed: bool,
}

/// The glued model: tunnel on [−r₀, r₀] continued by the ambient.
#[derive(Clone)]
pub struct TunnelAssembly {
    params: Params,
    b: f64,
    r0: f64,
    neck: NeckProfile,
    blend: BlendedData,
    topology: Topology,
    interface: InterfaceReport,
}

impl fmt::Debug for TunnelAssembly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TunnelAssembly")
            .field("r0", &self.r0)
            .field("topology", &self.topology)
            .field("interface", &self.interface)
            .finish()
    }
}

pub fn assemble_tunnel(ambient: &Ambient, r0: f64, f: &NeckProfile) -> Result<TunnelAssembly> {
    let params = ambient.params();
    let blend = blend_profiles(ambient, r0, CutoffEta)?;
    let mut asm = TunnelAssembly {
        params,
        b: params.green_coefficient(),
        r0,
        neck: f.clone(),
        blend,
        topology: ambient.topology(),
        interface: InterfaceReport {
            phi: [0.0; 3],
            u: [0.0; 3],
            max: 0.0,
            passed: true,
        },
    };
    let mut phi = [0.0f64; 3];
    let mut u = [0.0f64; 3];
    for (idx, sign) in [(0usize, -1.0), (1, 1.0)] {
        let inside = asm.tunnel_point(sign * r0)?;
        let side = &asm.blend.sides[idx];
        let wp = side.warp(r0);
        let up = side.u(r0)?;
        let outside_phi = [wp[0], sign * wp[1], wp[2]];
        let outside_u = [up[0], sign * up[1], up[2]];
        for k in 0..3 {
            phi[k] =
                phi[k].max((inside.phi[k] - outside_phi[k]).abs() / outside_phi[k].abs().max(1.0));
            u[k] = u[k].max((inside.u[k] - outside_u[k]).abs() / outside_u[k].abs().max(1.0));
        }
    }
    let max = phi.iter().chain(u.iter()).fold(0.0f64, |a, b| a.max(*b));
    asm.interface = InterfaceReport {
        phi,
        u,
        max,
        passed: max <= INTERFACE_TOL,
    };
    if !asm.interface.passed {
        return Err(Error::Assembly(format!(
            "interface mismatch at |r| = r0: Phi (k=0,1,2) = {:.3e}, {:.3e}, {:.3e}; u = {:.3e}, {:.3e}, {:.3e}",
            phi[0], phi[1], phi[2], u[0], u[1], u[2]
        )));
    }
    for r in tunnel_grid(r0, 401) {
        let p = asm.tunnel_point(r)?;
        if !(p.phi[0] > 0.0 && p.u[0] > 0.0 && p.beta[0] > 0.0) {
            return Err(Error::Assembly(format!(
                "Phi or u-tilde is not positive at r = {r}"
            )));
        }
    }
    Ok(asm)
}

/// Uniform grid on [−r₀, r₀].
pub fn tunnel_grid(r0: f64, points: usize) -> Vec<f64> {
    let m = points.max(2) - 1;
    (0..=m)
        .map(|i| -r0 + 2.0 * r0 * i as f64 / m as f64)
        .collect()
}

impl TunnelAssembly {
    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn interface(&self) -> &InterfaceReport {
        &self.interface
    }

    pub fn blend(&self) -> &BlendedData {
        &self.blend
    }

    pub fn neck(&self) -> &NeckProfile {
        &self.neck
    }

    pub fn region(&self, t: f64) -> Region {
        if self.ambient_at(t).is_some() {
            Region::Ambient
        } else if t.abs() >= 2.0 * self.r0 / 3.0 {
            Region::RegionI
        } else {
            Region::RegionII
        }
    }

    pub fn tunnel_point(&self, r: f64) -> Result<TunnelPoint> {
        let r0 = self.r0;
        let x = r / r0;
        let f = self.neck.jet(x);
        let beta = self.blend.beta(r)?;
        let wt = self.blend.wtilde(r)?;
        let n = self.params.n as f64;
        // log-derivatives of Φ = r₀ f √β and ũ = b (r₀ f)^{2−n} w̃
        let p = f.d1 / (r0 * f.value);
        let fpp = f.d2 / (r0 * r0 * f.value);
        let q = beta[1] / beta[0];
        let l1 = p + 0.5 * q;
        let l2 = fpp - p * p + 0.5 * (beta[2] / beta[0] - q * q);
        let phi0 = r0 * f.value * beta[0].sqrt();
        let v1 = (2.0 - n) * p + wt[1] / wt[0];
        let v2 = (2.0 - n) * (fpp - p * p) + wt[2] / wt[0] - (wt[1] / wt[0]).powi(2);
        let u0 = self.b * (r0 * f.value).powf(2.0 - n) * wt[0];
        Ok(TunnelPoint {
            r,
            f,
            excess: self.neck.excess(x),
            slope_gap: self.neck.slope_gap(x),
            beta,
            wtilde: wt,
            phi: [phi0, phi0 * l1, phi0 * (l2 + l1 * l1)],
            u: [u0, u0 * v1, u0 * (v2 + v1 * v1)],
        })
    }

    /// Ricci data from the second fundamental form of the level spheres and
    /// the Gauss equation, with h̃ = β h₀.
    pub fn decomposed_curvature(&self, r: f64) -> Result<CurvatureSample> {
        let pt = self.tunnel_point(r)?;
        Ok(self.decomposed_from(&pt))
    }

    fn decomposed_from(&self, pt: &TunnelPoint) -> CurvatureSample {
        let r0 = self.r0;
        let n = self.params.n as f64;
        let f = pt.f;
        let p = f.d1 / (r0 * f.value);
        let fpp = f.d2 / (r0 * r0 * f.value);
        let [b0, b1, b2] = pt.beta;
        let q = b1 / b0;
        // tr_h̃(∂_r h̃) = (n−1)q, |∂_r h̃|² = (n−1)q², ∂_r(tr) = (n−1)(β_rr/β − q²)
        let tr = (n - 1.0) * q;
        let ric_rr = -(n - 1.0) * fpp
            - p * tr
            - 0.25 * (n - 1.0) * q * q
            - 0.5 * (n - 1.0) * (b2 / b0 - q * q);
        // 1/β − f′² = (1 − f′²) + (1 − β)/β, both cancellation-free
        let gap = pt.slope_gap;
        let inv_defect = gap * (2.0 - gap) + (1.0 - b0) / b0;
        let ric_ee = -fpp + (n - 2.0) * inv_defect / (r0 * r0 * f.value * f.value)
            - (n - 1.0) * p * q
            - 0.5 * b2 / b0
            + 0.5 * q * q
            - 0.25 * (n - 1.0) * q * q;
        let mut c = CurvatureSample::from_components(pt.r, ric_rr, ric_ee);
        c.ric_mixed = mixed_term(q);
        c
    }

    /// Ricci data from the warped-product formulas applied to Φ.
    pub fn direct_curvature(&self, r: f64) -> Result<CurvatureSample> {
        let pt = self.tunnel_point(r)?;
        curvature_from_jet(
            self.params.n,
            r,
            Jet::new(pt.phi[0], pt.phi[1], pt.phi[2], 0.0),
            None,
        )
    }

    /// Ambient side, distance and d/dt sign for a composite coordinate
    /// outside the tunnel; `None` inside.
    fn ambient_at(&self, t: f64) -> Option<(usize, f64, f64)> {
        let r0 = self.r0;
        match self.topology {
            Topology::ConnectedSum => {
                if t < -r0 {
                    Some((0, -t, -1.0))
                } else if t > r0 {
                    Some((1, t, 1.0))
                } else {
                    None
                }
            }
            Topology::Handle => {
                let l = self.handle_period();
                let t = -r0 + (t + r0).rem_euclid(l);
                if t <= r0 {
                    None
                } else if t <= 0.5 * l {
                    Some((1, t, 1.0))
                } else {
                    Some((0, l - t, -1.0))
                }
            }
        }
    }

    fn handle_period(&self) -> f64 {
        (self.blend.sides[1].basepoint - self.blend.sides[0].basepoint).abs()
    }

    fn wrap(&self, t: f64) -> f64 {
        match self.topology {
            Topology::ConnectedSum => t,
            Topology::Handle => -self.r0 + (t + self.r0).rem_euclid(self.handle_period()),
        }
    }

    /// Composite Φ and its t-derivatives.
    pub fn phi(&self, t: f64) -> Result<[f64; 3]> {
        match self.ambient_at(t) {
            Some((i, s, sign)) => {
                self.check_reach(i, s)?;
                let w = self.blend.sides[i].warp(s);
                Ok([w[0], sign * w[1], w[2]])
            }
            None => Ok(self.tunnel_point(self.wrap(t))?.phi),
        }
    }

    /// Composite ũ and its t-derivatives.
    pub fn u(&self, t: f64) -> Result<[f64; 3]> {
        match self.ambient_at(t) {
            Some((i, s, sign)) => {
                self.check_reach(i, s)?;
                let u = self.blend.sides[i].u(s)?;
                Ok([u[0], sign * u[1], u[2]])
            }
            None => Ok(self.tunnel_point(self.wrap(t))?.u),
        }
    }

    fn check_reach(&self, i: usize, s: f64) -> Result<()> {
        let reach = self.blend.sides[i].chart.reach();
        if s > reach * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "composite coordinate beyond the ambient (distance {s} > {reach})"
            )));
        }
        Ok(())
    }

    /// Ricci data of the glued metric at t.
    pub fn curvature(&self, t: f64) -> Result<CurvatureSample> {
        match self.ambient_at(t) {
            Some((i, s, _)) => {
                self.check_reach(i, s)?;
                let mut c = self.blend.sides[i].curvature(s)?;
                c.r = t;
                Ok(c)
            }
            None => self.decomposed_curvature(self.wrap(t)),
        }
    }

    /// ũ, Δ̃ũ and Ric_min at t.
    pub fn defect_point(&self, t: f64) -> Result<DefectPoint> {
        match self.ambient_at(t) {
            Some((i, s, _)) => {
                self.check_reach(i, s)?;
                let side = &self.blend.sides[i];
                let (lap, u) = side.laplacian(s)?;
                Ok(DefectPoint {
                    r: t,
                    u: u[0],
                    laplacian: lap,
                    ric_min: side.curvature(s)?.ric_min,
                })
            }
            None => {
                let pt = self.tunnel_point(self.wrap(t))?;
                Ok(self.tunnel_defect_point(&pt))
            }
        }
    }

    fn tunnel_defect_point(&self, pt: &TunnelPoint) -> DefectPoint {
        let n = self.params.n as f64;
        let lap = pt.u[2] + (n - 1.0) * pt.phi[1] / pt.phi[0] * pt.u[1];
        DefectPoint {
            r: pt.r,
            u: pt.u[0],
            laplacian: lap,
            ric_min: self.decomposed_from(pt).ric_min,
        }
    }

    /// Composite domain in the tunnel coordinate, or `None` when an ambient
    /// end is noncompact.
    pub fn composite_domain(&self) -> Option<SlDomain> {
        match self.topology {
            Topology::Handle => Some(SlDomain::Circle {
                start: -self.r0,
                period: self.handle_period(),
            }),
            Topology::ConnectedSum => {
                let [a, b] = &self.blend.sides;
                Some(SlDomain::Interval {
                    start: -a.chart.reach(),
                    end: b.chart.reach(),
                    start_kind: a.far_end()?,
                    end_kind: b.far_end()?,
                })
            }
        }
    }

    /// −γΔ + Ric_min on the glued closed model.
    pub fn assembled_operator(self: &Arc<Self>) -> Result<SturmLiouville> {
        let domain = self.composite_domain().ok_or_else(|| {
            Error::Precondition(
                "the assembled model is noncompact; no eigenvalue is computed".into(),
            )
        })?;
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        let op = SturmLiouville::new(
            self.params.n,
            self.params.gamma,
            domain,
            move |t| a.phi(t).map(|p| p[0]).unwrap_or(f64::NAN),
            move |t| b.curvature(t).map(|c| c.ric_min).unwrap_or(f64::NAN),
        )?;
        let r0 = self.r0;
        let bands = [-1.0, -2.0 / 3.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].map(|x| x * r0);
        Ok(op
            .with_kink(move |t| c.curvature(t).map(|k| k.ric_rr - k.ric_ee).unwrap_or(0.0))
            .with_breakpoints(bands.to_vec())
            .with_refinement(vec![(-r0, r0)]))
    }

    /// Rows (r, Φ, ũ, D, region) on a grid of the composite coordinate.
    pub fn table(&self, grid: &[f64]) -> Result<Vec<AssemblyRow>> {
        let target = self.params.target();
        grid.iter()
            .map(|&t| {
                let d = self.defect_point(t)?;
                Ok(AssemblyRow {
                    r: t,
                    phi: self.phi(t)?[0],
                    u: d.u,
                    defect: -self.params.gamma * d.laplacian + d.ric_min * d.u - target * d.u,
                    region: self.region(t).label(),
                })
            })
            .collect()
    }
}

/// The Lemma-type mixed term Σᵢ[∇_e(∂_r h̃)(eᵢ,eᵢ) − ∇_{eᵢ}(∂_r h̃)(e,eᵢ)]/(2r₀f)
/// for h̃ = β(r)h₀: ∂_r h̃ = (β_r/β)h̃ is parallel on each level sphere, so
/// both covariant derivatives vanish.
fn mixed_term(q: f64) -> f64 {
    let angular_gradient = 0.0;
    angular_gradient * q
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssemblyRow {
    pub r: f64,
    pub phi: f64,
    pub u: f64,
    pub defect: f64,
    pub region: &'static str,
}

/// −((n−1)/(n−2))Δu + Ric_rr·u for u = f^{2−n} on dr² + f²g_S, at x.
pub fn toy_identity_defect(f: &NeckProfile, n: usize, x: f64) -> Result<f64> {
    toy_identity_defect_gamma(f, n, crate::params::critical_gamma(n), x)
}

/// −γΔu + Ric_rr·u for u = f^{2−n}; equals (γ − (n−1)/(n−2))(n−2)(f″/f)u.
pub fn toy_identity_defect_gamma(f: &NeckProfile, n: usize, gamma: f64, x: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!("dimension {n} must be at least 3")));
    }
    let j = f.jet(x);
    if !(j.value > 0.0) {
        return Err(Error::Domain(format!(
            "f({x}) = {} is not positive",
            j.value
        )));
    }
    let nf = n as f64;
    let u = j.value.powf(2.0 - nf);
    let du = (2.0 - nf) * u * j.d1 / j.value;
    let ddu = (2.0 - nf) * u * (j.d2 / j.value + (1.0 - nf) * (j.d1 / j.value).powi(2));
    let lap = ddu + (nf - 1.0) * j.d1 / j.value * du;
    let ric = curvature_from_jet(n, x, j, None)?;
    Ok(-gamma * lap + ric.ric_rr * u)
}

/// The toy identity residual divided by u, with every derivative of f and
/// u replaced by a centered difference of step h.
pub fn toy_identity_fd_residual(f: &NeckProfile, n: usize, x: f64, h: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!("dimension {n} must be at least 3")));
    }
    let nf = n as f64;
    let fv = |x: f64| f.value(x);
    let uv = |x: f64| f.value(x).powf(2.0 - nf);
    let (f0, fm, fp) = (fv(x), fv(x - h), fv(x + h));
    let (u0, um, up) = (uv(x), uv(x - h), uv(x + h));
    let df = (fp - fm) / (2.0 * h);
    let ddf = (fp - 2.0 * f0 + fm) / (h * h);
    let du = (up - um) / (2.0 * h);
    let ddu = (up - 2.0 * u0 + um) / (h * h);
    let lap = ddu + (nf - 1.0) * df / f0 * du;
    let ric_rr = -(nf - 1.0) * ddf / f0;
    Ok((-crate::params::critical_gamma(n) * lap + ric_rr * u0) / u0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSummary {
    pub min_defect: f64,
    pub argmin: f64,
    /// min D/ũ
    pub min_relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralSummary {
    /// min and max of [γ(n−2) − (n−1)]f″/(r₀²f)
    pub coefficient_min: f64,
    pub coefficient_max: f64,
    /// max |rf′/(r₀f) − 1| and |r/(r₀f) − 1| over Region I
    pub slope_mismatch: f64,
    pub radius_mismatch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectReport {
    pub r0: f64,
    pub grid_size: usize,
    pub region_i: RegionSummary,
    pub region_ii: RegionSummary,
    pub tunnel_min: f64,
    pub structural: StructuralSummary,
    /// max two-route Ricci discrepancy relative to max(|Ric|, 1/Φ²)
    pub curvature_agreement: f64,
    pub mixed_max: f64,
    #[serde(skip)]
    pub profile: DefectProfile,
}

impl DefectReport {
    pub fn nonnegative(&self) -> bool {
        self.tunnel_min >= 0.0
    }
}

fn summarize(points: &[(f64, f64, f64)]) -> RegionSummary {
    let mut s = RegionSummary {
        min_defect: f64::INFINITY,
        argmin: f64::NAN,
        min_relative: f64::INFINITY,
    };
    for &(r, d, u) in points {
        if d < s.min_defect {
            s.min_defect = d;
            s.argmin = r;
        }
        s.min_relative = s.min_relative.min(d / u);
    }
    s
}

pub fn region_defect_scan(asm: &TunnelAssembly, grid_size: usize) -> Result<DefectReport> {
    if grid_size < 11 {
        return Err(Error::Domain(format!(
            "defect scan needs at least 11 points, got {grid_size}"
        )));
    }
    let params = asm.params;
    let r0 = asm.r0;
    let n = params.n as f64;
    let coef = params.gamma * (n - 2.0) - (n - 1.0);
    let grid = tunnel_grid(r0, grid_size);
    let pts: Vec<TunnelPoint> = grid
        .iter()
        .map(|&r| asm.tunnel_point(r))
        .collect::<Result<_>>()?;
    let dps: Vec<DefectPoint> = pts.iter().map(|p| asm.tunnel_defect_point(p)).collect();
    let profile = supersolution_defect(&dps, params.gamma, params.lambda, params.epsilon)?;
    let mut one = Vec::new();
    let mut two = Vec::new();
    let mut structural = StructuralSummary {
        coefficient_min: f64::INFINITY,
        coefficient_max: f64::NEG_INFINITY,
        slope_mismatch: 0.0,
        radius_mismatch: 0.0,
    };
    let mut agreement: f64 = 0.0;
    let mut mixed: f64 = 0.0;
    for ((p, d), dp) in pts.iter().zip(&profile.defect).zip(&dps) {
        let region = asm.region(p.r);
        let entry = (p.r, *d, dp.u);
        let c = coef * p.f.d2 / (r0 * r0 * p.f.value);
        structural.coefficient_min = structural.coefficient_min.min(c);
        structural.coefficient_max = structural.coefficient_max.max(c);
        if region == Region::RegionI {
            one.push(entry);
            let x = p.r / r0;
            // r f′/(r₀f) − 1 = (|x| − f − |x|(1 − |f′|))/f and r/(r₀f) − 1 = −excess/f
            let slope = (-p.excess - x.abs() * p.slope_gap) / p.f.value;
            structural.slope_mismatch = structural.slope_mismatch.max(slope.abs());
            structural.radius_mismatch =
                structural.radius_mismatch.max((p.excess / p.f.value).abs());
        } else {
            two.push(entry);
        }
        let dec = asm.decomposed_from(p);
        let dir = curvature_from_jet(
            params.n,
            p.r,
            Jet::new(p.phi[0], p.phi[1], p.phi[2], 0.0),
            None,
        )?;
        let scale = dec
            .ric_rr
            .abs()
            .max(dec.ric_ee.abs())
            .max(1.0 / (p.phi[0] * p.phi[0]));
        agreement = agreement
            .max((dec.ric_rr - dir.ric_rr).abs() / scale)
            .max((dec.ric_ee - dir.ric_ee).abs() / scale);
        mixed = mixed.max(dec.ric_mixed.abs());
    }
    let region_i = summarize(&one);
    let region_ii = summarize(&two);
    Ok(DefectReport {
        r0,
        grid_size,
        tunnel_min: region_i.min_defect.min(region_ii.min_defect),
        region_i,
        region_ii,
        structural,
        curvature_agreement: agreement,
        mixed_max: mixed,
        profile,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchOptions {
    pub grid_size: usize,
    pub min_r0: f64,
    pub bisection_steps: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            grid_size: DEFAULT_SCAN_GRID,
            min_r0: MIN_R0,
            bisection_steps: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub r0: f64,
    pub admissible: bool,
    /// min D over the tunnel, or NaN when the assembly failed
    pub min_defect: f64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchReport {
    pub r0_star: f64,
    pub max_r0: f64,
    /// dyadic grid candidates, largest first
    pub grid: Vec<Candidate>,
    pub bisection: Vec<Candidate>,
}

impl SearchReport {
    /// Admissible values found on the dyadic grid.
    pub fn admissible_set(&self) -> Vec<f64> {
        self.grid
            .iter()
            .filter(|c| c.admissible)
            .map(|c| c.r0)
            .collect()
    }
}

/// Assembles and scans one candidate.
pub fn evaluate_r0(ambient: &Ambient, f: &NeckProfile, r0: f64, grid_size: usize) -> Candidate {
    match assemble_tunnel(ambient, r0, f).and_then(|a| region_defect_scan(&a, grid_size)) {
        Ok(rep) => Candidate {
            r0,
            admissible: rep.nonnegative(),
            min_defect: rep.tunnel_min,
            note: None,
        },
        Err(e) => Candidate {
            r0,
            admissible: false,
            min_defect: f64::NAN,
            note: Some(e.to_string()),
        },
    }
}

/// Largest admissible r₀ in (0, 0.1·min{1, d(x₁, x₂), ε}]: a dyadic scan
/// down to `min_r0`, then bisection above the largest admissible grid value.
pub fn r0_search(ambient: &Ambient, f: &NeckProfile, opts: &SearchOptions) -> Result<SearchReport> {
    let max_r0 = ambient.max_r0();
    let mut levels = 1;
    while max_r0 * 0.5f64.powi(levels) >= opts.min_r0 * (1.0 - 1e-12) {
        levels += 1;
    }
    let radii = dyadic_radii(max_r0, levels as usize);
    let grid: Vec<Candidate> = radii
        .par_iter()
        .map(|&r0| evaluate_r0(ambient, f, r0, opts.grid_size))
        .collect();
    let Some(best) = grid.iter().position(|c| c.admissible) else {
        return Err(Error::NotAdmissible {
            smallest_tested: *radii.last().expect("at least one level"),
            tested: grid.len(),
        });
    };
    let mut lo = grid[best].r0;
    let mut bisection = Vec::new();
    if best > 0 {
        let mut hi = grid[best - 1].r0;
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (lo + hi);
            let c = evaluate_r0(ambient, f, mid, opts.grid_size);
            if c.admissible {
                lo = mid;
            } else {
                hi = mid;
            }
            bisection.push(c);
        }
    }
    Ok(SearchReport {
        r0_star: lo,
        max_r0,
        grid,
        bisection,
    })
}

/// Sup norms of β − 1, β_r, β_rr, w̃ − 1, w̃_r, w̃_rr over the tunnel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlendNorms {
    pub r0: f64,
    pub beta: [f64; 3],
    pub wtilde: [f64; 3],
}

pub fn blend_norms(ambient: &Ambient, r0: f64, points: usize) -> Result<BlendNorms> {
    let blend = blend_profiles(ambient, r0, CutoffEta)?;
    let mut out = BlendNorms {
        r0,
        beta: [0.0; 3],
        wtilde: [0.0; 3],
    };
    for r in tunnel_grid(r0, points) {
        let b = blend.beta(r)?;
        let w = blend.wtilde(r)?;
        let vals = [(b[0] - 1.0).abs(), b[1].abs(), b[2].abs()];
        let wvals = [(w[0] - 1.0).abs(), w[1].abs(), w[2].abs()];
        for k in 0..3 {
            out.beta[k] = out.beta[k].max(vals[k]);
            out.wtilde[k] = out.wtilde[k].max(wvals[k]);
        }
    }
    Ok(out)
}

/// Rate checks of the blended profiles over a decreasing r₀ sequence:
/// claims o(1), o(r₀⁻¹), o(r₀⁻²) for β and w̃, in that order.
pub fn blend_asymptotics(ambient: &Ambient, radii: &[f64]) -> Result<Vec<RateReport>> {
    let norms: Vec<BlendNorms> = radii
        .par_iter()
        .map(|&r0| blend_norms(ambient, r0, 401))
        .collect::<Result<_>>()?;
    let claims = [
        RateClaim::Bounded,
        RateClaim::InverseLinear,
        RateClaim::InverseQuadratic,
    ];
    let mut out = Vec::new();
    for pick in [|n: &BlendNorms| n.beta, |n: &BlendNorms| n.wtilde] {
        for (k, claim) in claims.iter().enumerate() {
            let samples: Vec<(f64, f64)> = norms.iter().map(|n| (n.r0, pick(n)[k])).collect();
            out.push(rate_check(&samples, *claim)?);
        }
    }
    Ok(out)
}
