//! Radial Green's functions of −γΔ + Ric_min − μ on warped models, with
//! unit delta mass at pole basepoints.
//!
//! Near a pole the solution is written u = b·s^{2−n}·y(s) and integrated in
//! t = ln s from a Frobenius start, so the singular behaviour is carried by
//! the prefactor and never differenced.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{dopri_step, integrate, Rhs, StepControl, Trajectory};
use crate::params::Params;
use crate::spectral::{lambda1_value, SturmLiouville};
use crate::warped_geometry::{
    dyadic_radii, rate_check, ricci_min, sphere_area, Domain, EndCondition, PoleChart, RateClaim,
    RateReport, WarpProfile,
};

/// Radius down to which the Frobenius start is used.
pub const DEFAULT_R_INNER: f64 = 1e-5;
/// Stand-in for infinity on noncompact ends.
pub const FAR_RADIUS: f64 = 1e12;
/// Levels used by the asymptotic rate checks.
pub const ASYMPTOTIC_LEVELS: usize = 10;

/// A warped model with its parameters and the poles carrying delta masses.
#[derive(Clone, Debug)]
pub struct ModelManifold {
    params: Params,
    warp: WarpProfile,
    basepoints: Vec<f64>,
}

impl ModelManifold {
    pub fn new(params: Params, warp: WarpProfile, basepoints: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if basepoints.is_empty() || basepoints.len() > 2 {
            return Err(Error::Domain(format!(
                "a radial model carries one or two basepoints, got {}",
                basepoints.len()
            )));
        }
        for &p in &basepoints {
            if warp.cap_at(p).is_none() {
                return Err(Error::Domain(format!(
                    "basepoint {p} is not a pole of {}",
                    warp.label()
                )));
            }
        }
        if basepoints.len() == 2 && (basepoints[0] - basepoints[1]).abs() < 1e-12 {
            return Err(Error::Domain("basepoints must be distinct".into()));
        }
        Ok(ModelManifold {
            params,
            warp,
            basepoints,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn warp(&self) -> &WarpProfile {
        &self.warp
    }

    pub fn basepoints(&self) -> &[f64] {
        &self.basepoints
    }

    /// V = Ric_min.
    pub fn potential(&self, r: f64) -> Result<f64> {
        Ok(ricci_min(&self.warp, self.params.n, r)?.ric_min)
    }

    /// The radial operator −γΔ + Ric_min on this model.
    pub fn operator(&self) -> Result<SturmLiouville> {
        SturmLiouville::from_warp(&self.warp, self.params.n, self.params.gamma)
    }

    fn is_bounded(&self) -> bool {
        let (a, b) = self.warp.domain().bounds();
        a.is_finite() && b.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenOptions {
    pub r_inner: f64,
    pub rtol: f64,
    pub atol: f64,
    pub far_radius: f64,
    /// Cells of the eigenvalue precondition check.
    pub precondition_cells: usize,
    /// Fixed step in ln s; adaptive when `None`.
    pub fixed_step: Option<f64>,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            r_inner: DEFAULT_R_INNER,
            rtol: 1e-10,
            atol: 1e-10,
            far_radius: FAR_RADIUS,
            precondition_cells: 2048,
            fixed_step: None,
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The y-equation in t = ln s,
/// y_tt = (m − (m+1)ρ) y_t + (m(m+1)ρ − s²Q) y, ρ = sφ′/φ − 1, m = n − 2,
/// for the singular solution, and for the regular one rescaled as
/// Yr = s^m·R so that both start at size one.
#[derive(Clone)]
struct PieceRhs {
    chart: PoleChart,
    m: f64,
    q: ScalarFn,
}

impl PieceRhs {
    fn coefficients(&self, s: f64) -> (f64, f64, f64) {
        let rho = self.chart.log_slope_excess(s);
        let m = self.m;
        let q = (self.q)(s);
        (m - (m + 1.0) * rho, m * (m + 1.0) * rho - s * s * q, rho)
    }
}

impl PieceRhs {
    /// Coefficients of the R-equation R_tt = c1 R_t + c0 R.
    fn rescaled(&self, a1: f64, a0: f64) -> (f64, f64) {
        let m = self.m;
        (a1 - 2.0 * m, a0 + m * a1 - m * m)
    }

    /// (Ys, Ys_t, Yr, Yr_t) from the integrated state.
    fn split(&self, st: &[f64; 4], s: f64) -> [f64; 4] {
        let sm = s.powf(self.m);
        [st[0], st[1], sm * st[2], sm * (self.m * st[2] + st[3])]
    }
}

impl Rhs<4> for PieceRhs {
    fn eval(&self, t: f64, y: &[f64; 4]) -> [f64; 4] {
        let s = t.exp();
        let (a1, a0, _) = self.coefficients(s);
        let (c1, c0) = self.rescaled(a1, a0);
        [y[1], a1 * y[1] + a0 * y[0], y[3], c1 * y[3] + c0 * y[2]]
    }
}

/// Frobenius data at a pole: singular y = 1 + c₂s² (n ≠ 4) or
/// 1 + αs² ln s (n = 4), regular R = 1 + d s².
#[derive(Clone, Copy, Debug)]
struct Start {
    m: usize,
    c2: f64,
    alpha: f64,
    d: f64,
}

impl Start {
    fn new(m: usize, p1: f64, q0: f64) -> Self {
        let mf = m as f64;
        let (c2, alpha) = if m == 2 {
            (0.0, (2.0 * p1 - q0) / 2.0)
        } else {
            ((mf * p1 - q0) / (2.0 * (2.0 - mf)), 0.0)
        };
        Start {
            m,
            c2,
            alpha,
            d: -q0 / (2.0 * (mf + 2.0)),
        }
    }

    fn state(&self, s: f64) -> [f64; 4] {
        let s2 = s * s;
        let (ys, zs) = if self.m == 2 {
            let l = s.ln();
            (1.0 + self.alpha * s2 * l, self.alpha * (2.0 * s2 * l + s2))
        } else {
            (1.0 + self.c2 * s2, 2.0 * self.c2 * s2)
        };
        [ys, zs, 1.0 + self.d * s2, 2.0 * self.d * s2]
    }
}

/// How a piece ends away from its pole.
#[derive(Clone, Copy, Debug, PartialEq)]
enum PieceEnd {
    Matched,
    Dirichlet,
    Decay,
}

#[derive(Clone)]
struct Piece {
    rhs: PieceRhs,
    start: Start,
    traj: Trajectory<4>,
    s_inner: f64,
    /// Largest s this piece answers for.
    s_outer: f64,
    end: PieceEnd,
    coef_s: f64,
    coef_r: f64,
}

impl Piece {
    fn build(
        chart: PoleChart,
        n: usize,
        q: ScalarFn,
        s_outer: f64,
        end: PieceEnd,
        opts: &GreenOptions,
    ) -> Result<Piece> {
        let m = n - 2;
        let cap = *chart.cap();
        let p1 = (m as f64 + 1.0) * 2.0 * cap.c3;
        let q0 = q(0.0);
        if !q0.is_finite() {
            return Err(Error::Singularity { r: cap.pole });
        }
        let start = Start::new(m, p1, q0);
        let rhs = PieceRhs {
            chart,
            m: m as f64,
            q,
        };
        let s_inner = opts.r_inner.min(0.5 * s_outer);
        let t0 = s_inner.ln();
        let t1 = s_outer.ln();
        let ctl = StepControl {
            rtol: opts.rtol,
            atol: opts.atol,
            max_step: 0.05,
            fixed_step: opts.fixed_step,
            ..Default::default()
        };
        let mut crossed = None;
        let mut prev_b = f64::NAN;
        let traj = integrate(&rhs, t0, start.state(s_inner), t1, &ctl, |t, y| {
            if y[2] <= 0.0 {
                crossed = Some(t.exp());
                return true;
            }
            if end != PieceEnd::Decay {
                return false;
            }
            if y.iter().any(|v| v.abs() > 1e280) {
                return true;
            }
            let b = -y[0] / (y[2] * t.exp().powf(m as f64));
            let settled = (b - prev_b).abs() <= 1e-15 * b.abs();
            prev_b = b;
            settled
        })?;
        if let Some(s) = crossed {
            return Err(Error::NoPositiveSolution(format!(
                "regular solution from the pole at {} changes sign at distance {s:.6}",
                cap.pole
            )));
        }
        let reached = traj.end().0.exp();
        Ok(Piece {
            rhs,
            start,
            traj,
            s_inner,
            s_outer: if end == PieceEnd::Decay {
                reached
            } else {
                s_outer
            },
            end,
            coef_s: 0.0,
            coef_r: 0.0,
        })
    }

    fn pole(&self) -> f64 {
        self.rhs.chart.cap().pole
    }

    fn orientation(&self) -> f64 {
        self.rhs.chart.cap().orientation
    }

    fn m(&self) -> f64 {
        self.rhs.m
    }

    fn state(&self, s: f64) -> Result<[f64; 4]> {
        if !(s > 0.0) {
            return Err(Error::Singularity { r: self.pole() });
        }
        if s > self.s_outer * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "distance {s} exceeds the resolved range {} of the pole at {}",
                self.s_outer,
                self.pole()
            )));
        }
        if s < self.s_inner {
            return Ok(self.start.state(s));
        }
        Ok(self.traj.eval(&self.rhs, s.ln().min(self.traj.end().0)))
    }

    /// (Ys, Ys_t, Yr, Yr_t) at s.
    fn solutions(&self, s: f64) -> Result<[f64; 4]> {
        Ok(self.rhs.split(&self.state(s)?, s))
    }

    /// Combined (Y, Y_t, Y_tt) of coef_s·Ys + coef_r·Yr.
    fn combined(&self, s: f64) -> Result<[f64; 3]> {
        let st = self.solutions(s)?;
        let (a1, a0, _) = self.rhs.coefficients(s);
        let y = self.coef_s * st[0] + self.coef_r * st[2];
        let z = self.coef_s * st[1] + self.coef_r * st[3];
        Ok([y, z, a1 * z + a0 * y])
    }

    /// u and its first two derivatives in s.
    fn u_parts(&self, s: f64) -> Result<[f64; 3]> {
        let [y, z, _] = self.combined(s)?;
        let m = self.m();
        let u = s.powf(-m) * y;
        let us = s.powf(-m - 1.0) * (z - m * y);
        let (_, _, rho) = self.rhs.coefficients(s);
        let q = (self.rhs.q)(s);
        let uss = -(m + 1.0) * (1.0 + rho) / s * us - q * u;
        Ok([u, us, uss])
    }

    fn u_node(&self, k: usize) -> f64 {
        let st = self.rhs.split(&self.traj.y[k], self.traj.t[k].exp());
        self.coef_s * st[0] + self.coef_r * st[2]
    }

    /// Defect |dY/dt − F(t, Y)| of the dense solution at step midpoints,
    /// relative to the size of each solution pair; dY/dt is a centered
    /// difference of the one-step map.
    fn residual(&self) -> f64 {
        let nodes = self.traj.t.len();
        if nodes < 2 {
            return 0.0;
        }
        let stride = (nodes / 400).max(1);
        let mut worst: f64 = 0.0;
        for k in (0..nodes - 1).step_by(stride) {
            let (t0, h) = (self.traj.t[k], self.traj.t[k + 1] - self.traj.t[k]);
            let delta = (0.02 * h).max(2e-3);
            let at = |j: f64| dopri_step(&self.rhs, t0, &self.traj.y[k], 0.5 * h + j * delta).0;
            let p = [at(-2.0), at(-1.0), at(0.0), at(1.0), at(2.0)];
            let f = self.rhs.eval(t0 + 0.5 * h, &p[2]);
            for pair in [0usize, 2] {
                let mut scale: f64 = 0.0;
                let mut defect: f64 = 0.0;
                for c in pair..pair + 2 {
                    let d = (-p[4][c] + 8.0 * p[3][c] - 8.0 * p[1][c] + p[0][c]) / (12.0 * delta);
                    defect = defect.max((d - f[c]).abs());
                    scale = scale.max(p[2][c].abs()).max(f[c].abs());
                }
                if scale > 0.0 {
                    worst = worst.max(defect / scale);
                }
            }
        }
        worst
    }
}

/// Positive Green's function of a model with its normalized profiles.
#[derive(Clone)]
pub struct GreenSolution {
    model: ModelManifold,
    b: f64,
    mu: f64,
    pieces: Vec<Piece>,
    residual: f64,
    bound_constant: f64,
    lambda1: Option<f64>,
}

impl fmt::Debug for GreenSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GreenSolution")
            .field("b", &self.b)
            .field("mu", &self.mu)
            .field("admixtures", &self.admixtures())
            .field("residual", &self.residual)
            .finish()
    }
}

/// w and its first two radial derivatives at distance r from a basepoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WSample {
    pub r: f64,
    pub w: f64,
    pub dw: f64,
    pub ddw: f64,
}

/// One row of an exported Green table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreenRow {
    pub r: f64,
    pub u: f64,
    pub w: f64,
    pub dw: f64,
    pub ddw: f64,
}

fn potential_fn(model: &ModelManifold, chart: &PoleChart) -> ScalarFn {
    let warp = model.warp.clone();
    let n = model.params.n;
    let mu = model.params.green_shift();
    let gamma = model.params.gamma;
    let (pole, orient) = (chart.cap().pole, chart.cap().orientation);
    Arc::new(move |s| {
        let v = ricci_min(&warp, n, pole + orient * s)
            .map(|c| c.ric_min)
            .unwrap_or(f64::NAN);
        (mu - v) / gamma
    })
}

/// Solves −γΔu + Ric_min·u = (λ − ε/2)u + Σδ_{x_i} on a model.
pub fn green_solve(model: &ModelManifold) -> Result<GreenSolution> {
    green_solve_with(model, &GreenOptions::default())
}

pub fn green_solve_with(model: &ModelManifold, opts: &GreenOptions) -> Result<GreenSolution> {
    let params = model.params;
    let n = params.n;
    let mu = params.green_shift();
    let b = params.green_coefficient();
    if !(opts.r_inner > 0.0 && opts.r_inner < 1e-2) {
        return Err(Error::Domain(format!(
            "r_inner = {} must lie in (0, 1e-2)",
            opts.r_inner
        )));
    }
    let lambda1 = if model.is_bounded() {
        let l1 = lambda1_value(&model.operator()?, opts.precondition_cells)?;
        if !(mu < l1) {
            return Err(Error::NoPositiveSolution(format!(
                "lambda - epsilon/2 = {mu} is not below lambda_1 = {l1:.9}"
            )));
        }
        Some(l1)
    } else {
        None
    };
    let warp = &model.warp;
    let Domain::Interval {
        start,
        end,
        start_condition,
        end_condition,
    } = warp.domain()
    else {
        return Err(Error::Domain(
            "circle models have no poles to carry basepoints".into(),
        ));
    };
    let is_base = |p: f64| {
        model
            .basepoints
            .iter()
            .any(|&x| (x - p).abs() <= 1e-12 * p.abs().max(1.0))
    };
    let mut pieces = Vec::new();
    if start_condition == EndCondition::Pole && end_condition == EndCondition::Pole {
        let mid = 0.5 * (start + end);
        for (pole, reach) in [(start, mid - start), (end, end - mid)] {
            let chart = warp.chart(pole)?;
            let q = potential_fn(model, &chart);
            let mut piece = Piece::build(chart, n, q, reach, PieceEnd::Matched, opts)?;
            piece.coef_s = if is_base(pole) { b } else { 0.0 };
            pieces.push(piece);
        }
        solve_matching(&mut pieces)?;
    } else {
        let pole = model.basepoints[0];
        let chart = warp.chart(pole)?;
        let q = potential_fn(model, &chart);
        let (s_outer, kind) = if chart.reach().is_finite() {
            (chart.reach(), PieceEnd::Dirichlet)
        } else {
            (opts.far_radius, PieceEnd::Decay)
        };
        let mut piece = Piece::build(chart, n, q, s_outer, kind, opts)?;
        let (t, y) = piece.traj.end();
        let y = piece.rhs.split(&y, t.exp());
        piece.coef_s = b;
        piece.coef_r = b * decay_admixture(&y, n, kind);
        pieces.push(piece);
    }
    for piece in &pieces {
        let nodes = piece.traj.t.len();
        let last = if piece.end == PieceEnd::Matched {
            nodes
        } else {
            nodes - 1
        };
        for k in 0..last {
            let v = piece.u_node(k);
            if !(v > 0.0) {
                return Err(Error::NoPositiveSolution(format!(
                    "Green's function is not positive at distance {:.6} from {}",
                    piece.traj.t[k].exp(),
                    piece.pole()
                )));
            }
        }
    }
    let residual = pieces.iter().map(Piece::residual).fold(0.0, f64::max);
    let mut bound_constant: f64 = 1.0;
    for piece in pieces.iter().filter(|p| p.coef_s != 0.0) {
        for (k, t) in piece.traj.t.iter().enumerate() {
            if t.exp() <= piece.s_outer.min(1.0) {
                let w = piece.u_node(k) / b;
                bound_constant = bound_constant.max(w).max(1.0 / w);
            }
        }
    }
    Ok(GreenSolution {
        model: model.clone(),
        b,
        mu,
        pieces,
        residual,
        bound_constant,
        lambda1,
    })
}

/// Admixture that makes the combination vanish at the far end. On a decay
/// end the estimate −Ys/Yr still carries a tail c·s^{−m}, removed using its
/// logarithmic derivative.
fn decay_admixture(y: &[f64; 4], n: usize, kind: PieceEnd) -> f64 {
    let b = -y[0] / y[2];
    if kind != PieceEnd::Decay {
        return b;
    }
    let db = -(y[1] * y[2] - y[0] * y[3]) / (y[2] * y[2]);
    b + db / (n as f64 - 2.0)
}

/// Fixes the regular admixtures of two pieces meeting at the midpoint by
/// matching value and derivative; the problem is linear in the admixtures.
fn solve_matching(pieces: &mut [Piece]) -> Result<()> {
    let data: Vec<(f64, f64, f64, f64, f64)> = pieces
        .iter()
        .map(|p| {
            let s = p.s_outer;
            let st = p.solutions(s).expect("matching point lies in range");
            let m = p.m();
            let sm = s.powf(-m);
            let sd = s.powf(-m - 1.0);
            // value and s-derivative of the singular and regular parts
            (
                sm * st[0],
                sd * (st[1] - m * st[0]),
                sm * st[2],
                sd * (st[3] - m * st[2]),
                p.coef_s,
            )
        })
        .collect();
    let (us1, ds1, ur1, dr1, c1) = data[0];
    let (us2, ds2, ur2, dr2, c2) = data[1];
    // value: c1 us1 + x1 ur1 = c2 us2 + x2 ur2; slope: d/ds1 = −d/ds2
    let a = [[ur1, -ur2], [dr1, dr2]];
    let rhs = [c2 * us2 - c1 * us1, -(c1 * ds1 + c2 * ds2)];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .powi(2);
    if !(det.abs() > 1e-14 * scale) {
        return Err(Error::SolverDiverged {
            reason: format!("matching system is singular (det = {det:e})"),
            bracket: (pieces[0].pole(), pieces[1].pole()),
        });
    }
    pieces[0].coef_r = (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det;
    pieces[1].coef_r = (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det;
    Ok(())
}

impl GreenSolution {
    pub fn model(&self) -> &ModelManifold {
        &self.model
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// λ − ε/2.
    pub fn shift(&self) -> f64 {
        self.mu
    }

    /// λ₁ used by the precondition check (bounded models only).
    pub fn lambda1(&self) -> Option<f64> {
        self.lambda1
    }

    /// Regular-solution coefficient relative to b, per pole piece.
    pub fn admixtures(&self) -> Vec<(f64, f64)> {
        self.pieces
            .iter()
            .map(|p| (p.pole(), p.coef_r / self.b))
            .collect()
    }

    /// Worst relative ODE defect over the solve grid.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// C with C⁻¹ ≤ w ≤ C on the unit ball around each basepoint.
    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    pub fn r_inner(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.s_inner)
            .fold(f64::INFINITY, f64::min)
    }

    fn piece_for(&self, r: f64) -> Result<(&Piece, f64)> {
        for p in &self.pieces {
            let s = (r - p.pole()) * p.orientation();
            if s >= 0.0 && s <= p.s_outer * (1.0 + 1e-12) {
                if s == 0.0 {
                    return Err(Error::Singularity { r });
                }
                return Ok((p, s));
            }
        }
        Err(Error::Domain(format!(
            "r = {r} is outside the solved range"
        )))
    }

    pub fn u(&self, r: f64) -> Result<f64> {
        Ok(self.u_jet(r)?[0])
    }

    /// u, u′, u″ in the ambient coordinate.
    pub fn u_jet(&self, r: f64) -> Result<[f64; 3]> {
        let (p, s) = self.piece_for(r)?;
        let [u, us, uss] = p.u_parts(s)?;
        Ok([u, p.orientation() * us, uss])
    }

    fn basepoint_piece(&self, basepoint: f64) -> Result<&Piece> {
        self.pieces
            .iter()
            .find(|p| {
                p.coef_s != 0.0 && (p.pole() - basepoint).abs() <= 1e-12 * basepoint.abs().max(1.0)
            })
            .ok_or_else(|| {
                Error::Domain(format!("{basepoint} is not a basepoint of this solution"))
            })
    }

    /// w = s^{n−2}u/b and its s-derivatives at distance s from `basepoint`.
    pub fn w(&self, basepoint: f64, s: f64) -> Result<WSample> {
        let p = self.basepoint_piece(basepoint)?;
        let reach = p.rhs.chart.reach();
        if !(s > 0.0) || s > reach {
            return Err(Error::Domain(format!(
                "radius {s} is outside the polar chart (reach {reach})"
            )));
        }
        if s <= p.s_outer {
            let [y, z, ztt] = p.combined(s)?;
            return Ok(WSample {
                r: s,
                w: y / self.b,
                dw: z / (self.b * s),
                ddw: (ztt - z) / (self.b * s * s),
            });
        }
        let [u, du, ddu] = self.u_jet(p.pole() + p.orientation() * s)?;
        let us = p.orientation() * du;
        let m = p.m();
        Ok(WSample {
            r: s,
            w: s.powf(m) * u / self.b,
            dw: (m * s.powf(m - 1.0) * u + s.powf(m) * us) / self.b,
            ddw: (m * (m - 1.0) * s.powf(m - 2.0) * u
                + 2.0 * m * s.powf(m - 1.0) * us
                + s.powf(m) * ddu)
                / self.b,
        })
    }

    /// Outward flux −γ∫_{∂B(s)} ∂_s u through the sphere of radius s about
    /// the basepoint; tends to the unit delta mass as s → 0.
    pub fn flux(&self, basepoint: f64, s: f64) -> Result<f64> {
        let p = self.basepoint_piece(basepoint)?;
        let st = p.solutions(s)?;
        let y = (p.coef_s * st[0] + p.coef_r * st[2]) / self.b;
        let z = (p.coef_s * st[1] + p.coef_r * st[3]) / self.b;
        let ratio = p.rhs.chart.jet(s).value / s;
        let m = p.m();
        Ok(ratio.powf(m + 1.0) * (m * y - z) / m)
    }

    /// Rows (r, u, w, w′, w″) on a grid, w taken about the nearest basepoint.
    pub fn table(&self, grid: &[f64]) -> Result<Vec<GreenRow>> {
        grid.iter()
            .map(|&r| {
                let bp = self
                    .model
                    .basepoints
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - r).abs().total_cmp(&(b - r).abs()))
                    .expect("at least one basepoint");
                let ws = self.w(bp, (r - bp).abs())?;
                Ok(GreenRow {
                    r,
                    u: self.u(r)?,
                    w: ws.w,
                    dw: ws.dw,
                    ddw: ws.ddw,
                })
            })
            .collect()
    }
}

/// Samples of w at the given distances from a basepoint.
pub fn extract_w(sol: &GreenSolution, basepoint: f64, radii: &[f64]) -> Result<Vec<WSample>> {
    radii.iter().map(|&s| sol.w(basepoint, s)).collect()
}

/// Rate reports for |w − 1| = o(1), |w′| = o(r⁻¹), |w″| = o(r⁻²) at one basepoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub basepoint: f64,
    pub value: RateReport,
    pub slope: RateReport,
    pub curvature: RateReport,
}

impl AsymptoticsReport {
    pub fn passed(&self) -> bool {
        self.value.passed && self.slope.passed && self.curvature.passed
    }
}

pub fn green_asymptotics_check(sol: &GreenSolution) -> Result<Vec<AsymptoticsReport>> {
    let r_inner = sol.r_inner();
    let mut out = Vec::new();
    for &bp in &sol.model.basepoints {
        let p = sol.basepoint_piece(bp)?;
        let r_top = (p.s_outer * 0.5).min(1.0 / 16.0);
        let radii = dyadic_radii(r_top, ASYMPTOTIC_LEVELS);
        if r_inner > 1e-4 {
            let got = radii.iter().filter(|&&r| r >= r_inner).count();
            return Err(Error::InsufficientData {
                needed: ASYMPTOTIC_LEVELS,
                got,
            });
        }
        let samples = extract_w(sol, bp, &radii)?;
        let pick = |f: fn(&WSample) -> f64| samples.iter().map(|w| (w.r, f(w))).collect::<Vec<_>>();
        out.push(AsymptoticsReport {
            basepoint: bp,
            value: rate_check(&pick(|w| w.w - 1.0), RateClaim::Bounded)?,
            slope: rate_check(&pick(|w| w.dw), RateClaim::InverseLinear)?,
            curvature: rate_check(&pick(|w| w.ddw), RateClaim::InverseQuadratic)?,
        });
    }
    Ok(out)
}

/// Radial solution of ΔḠ = −FḠ − aδ on the curvature-K space form, with
/// no regular admixture, on (0, R].
#[derive(Clone)]
pub struct ModelGreen {
    piece: Piece,
    pub curvature: f64,
    pub potential: f64,
    pub mass: f64,
    pub radius: f64,
    pub n: usize,
}

impl fmt::Debug for ModelGreen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelGreen")
            .field("curvature", &self.curvature)
            .field("potential", &self.potential)
            .field("mass", &self.mass)
            .field("radius", &self.radius)
            .field("n", &self.n)
            .finish()
    }
}

pub fn model_green(k: f64, f: f64, a: f64, radius: f64, n: usize) -> Result<ModelGreen> {
    if n < 3 {
        return Err(Error::Domain(format!("dimension {n} must be at least 3")));
    }
    if !(a > 0.0 && a.is_finite() && f.is_finite() && k.is_finite()) {
        return Err(Error::Domain(
            "model Green data must be finite with positive mass".into(),
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!("radius {radius} must be positive")));
    }
    if k > 0.0 && radius * k.sqrt() >= std::f64::consts::PI {
        return Err(Error::RadiusTooLarge {
            radius,
            detail: "radius reaches the antipodal point of the space form".into(),
        });
    }
    let warp = WarpProfile::space_form(k)?;
    let chart = warp.chart(0.0)?;
    let opts = GreenOptions::default();
    let mut piece = Piece::build(
        chart,
        n,
        Arc::new(move |_| f),
        radius,
        PieceEnd::Matched,
        &opts,
    )
    .map_err(|e| match e {
        Error::NoPositiveSolution(detail) => Error::RadiusTooLarge { radius, detail },
        other => other,
    })?;
    piece.coef_s = a / ((n as f64 - 2.0) * sphere_area(n)?);
    let m = piece.m();
    for (t, y) in piece.traj.t.iter().zip(&piece.traj.y) {
        if !(y[0] > 0.0) {
            return Err(Error::RadiusTooLarge {
                radius,
                detail: format!("profile vanishes near r = {:.6}", t.exp()),
            });
        }
        if !(m * y[0] - y[1] > 0.0) {
            return Err(Error::RadiusTooLarge {
                radius,
                detail: format!("profile stops decreasing near r = {:.6}", t.exp()),
            });
        }
    }
    Ok(ModelGreen {
        piece,
        curvature: k,
        potential: f,
        mass: a,
        radius,
        n,
    })
}

impl ModelGreen {
    /// a/((n−2)|S^{n−1}|).
    pub fn coefficient(&self) -> f64 {
        self.piece.coef_s
    }

    /// Ḡ, Ḡ′, Ḡ″ at 0 < r ≤ R.
    pub fn eval(&self, r: f64) -> Result<[f64; 3]> {
        self.piece.u_parts(r)
    }

    /// Rate check of Ḡ·r^{n−2}/coefficient − 1 = o(1).
    pub fn asymptote_check(&self) -> Result<RateReport> {
        let radii = dyadic_radii((0.5 * self.radius).min(1.0 / 16.0), ASYMPTOTIC_LEVELS);
        let samples: Vec<(f64, f64)> = radii
            .iter()
            .map(|&r| Ok((r, self.piece.combined(r)?[0] / self.piece.coef_s - 1.0)))
            .collect::<Result<_>>()?;
        rate_check(&samples, RateClaim::Bounded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sphere_model(gamma: f64, lambda: f64, eps: f64, basepoints: Vec<f64>) -> ModelManifold {
        ModelManifold::new(
            Params::new(3, gamma, lambda, eps).unwrap(),
            WarpProfile::sphere(),
            basepoints,
        )
        .unwrap()
    }

    /// Exact S³ Green's function: u = b(cos ωr + B sin ωr)/sin r.
    fn sphere_exact(b: f64, omega: f64, coef: f64, r: f64) -> f64 {
        b * ((omega * r).cos() + coef * (omega * r).sin()) / r.sin()
    }

    #[test]
    fn euclidean_green_function() {
        let model = ModelManifold::new(
            Params::new(3, 1.0, 0.1, 0.2).unwrap(),
            WarpProfile::euclidean(),
            vec![0.0],
        )
        .unwrap();
        let sol = green_solve(&model).unwrap();
        for &r in &[1e-4, 1e-2, 0.5, 3.0, 100.0] {
            let exact = 1.0 / (4.0 * PI * r);
            assert!((sol.u(r).unwrap() / exact - 1.0).abs() < 1e-9, "r = {r}");
            let w = sol.w(0.0, r).unwrap();
            assert!((w.w - 1.0).abs() < 1e-9 && w.dw.abs() < 1e-9 && w.ddw.abs() < 1e-9);
        }
        for rep in green_asymptotics_check(&sol).unwrap() {
            assert!(rep.passed());
        }
    }

    #[test]
    fn sphere_single_basepoint_matches_closed_form() {
        let model = sphere_model(3.0, 2.0, 0.2, vec![0.0]);
        let sol = green_solve(&model).unwrap();
        let omega = (1.0 - (2.0 - 1.9) / 3.0f64).sqrt();
        let coef = -(omega * PI).cos() / (omega * PI).sin();
        for k in 1..40 {
            let r = PI * k as f64 / 40.0;
            let exact = sphere_exact(sol.b(), omega, coef, r);
            assert!((sol.u(r).unwrap() / exact - 1.0).abs() < 1e-8, "r = {r}");
        }
        assert!(sol.residual() <= 1e-8, "residual {}", sol.residual());
    }

    #[test]
    fn antipodal_sphere_is_symmetric() {
        let model = sphere_model(3.0, 2.0, 0.2, vec![0.0, PI]);
        let sol = green_solve(&model).unwrap();
        let omega = (1.0 - (2.0 - 1.9) / 3.0f64).sqrt();
        let x = 0.5 * omega * PI;
        // u(π/2) = b / cos(ωπ/2)
        let mid = sol.u_jet(0.5 * PI).unwrap();
        assert!((mid[0] / (sol.b() / x.cos()) - 1.0).abs() < 1e-8);
        assert!(mid[1].abs() < 1e-8 * mid[0]);
        for k in 1..20 {
            let r = 0.5 * PI * k as f64 / 20.0;
            let (a, b) = (sol.u(r).unwrap(), sol.u(PI - r).unwrap());
            assert!((a - b).abs() <= 1e-9 * a, "r = {r}");
        }
        for &bp in &[0.0, PI] {
            assert!((sol.flux(bp, 1e-4).unwrap() - 1.0).abs() < 1e-6);
        }
        assert!(sol.residual() <= 1e-8, "residual {}", sol.residual());
        // near λ₁ the ground state dominates: w(1) = (cos ω + tan(ωπ/2) sin ω)/sin 1
        let w1 = (omega.cos() + x.tan() * omega.sin()) / 1f64.sin();
        assert!(sol.bound_constant() > 0.9 * w1 && sol.bound_constant() <= w1 * (1.0 + 1e-8));
        for rep in green_asymptotics_check(&sol).unwrap() {
            assert!(rep.passed(), "{rep:?}");
        }
    }

    #[test]
    fn reconstruction_identity() {
        let sol = green_solve(&sphere_model(2.0, 1.5, 0.4, vec![0.0])).unwrap();
        for &s in &[1e-6, 1e-3, 0.3, 1.4, 2.5] {
            let w = extract_w(&sol, 0.0, &[s]).unwrap()[0];
            let u = sol.u(s).unwrap();
            assert!((w.w * sol.b() / s - u).abs() <= 1e-12 * u);
        }
        assert!(sol.w(0.0, 4.0).is_err());
        assert!(sol.w(PI, 0.1).is_err());
    }

    #[test]
    fn w_derivatives_agree_with_differences() {
        let sol = green_solve(&sphere_model(3.0, 2.0, 0.2, vec![0.0])).unwrap();
        for &s in &[0.05, 0.8, 2.0, 2.9] {
            let h = 1e-4;
            let w = |x: f64| sol.w(0.0, x).unwrap().w;
            let d1 = (w(s + h) - w(s - h)) / (2.0 * h);
            let d2 = (w(s + h) - 2.0 * w(s) + w(s - h)) / (h * h);
            let ws = sol.w(0.0, s).unwrap();
            assert!((ws.dw - d1).abs() < 1e-7);
            assert!((ws.ddw - d2).abs() < 1e-4);
        }
    }

    #[test]
    fn precondition_violations_are_reported() {
        let model = sphere_model(1.0, 3.0, 0.2, vec![0.0]);
        assert!(matches!(
            green_solve(&model),
            Err(Error::NoPositiveSolution(_))
        ));
        // oscillatory Euclidean problem: μ − V = 1 > 0
        let model = ModelManifold::new(
            Params::new(3, 1.0, 1.1, 0.2).unwrap(),
            WarpProfile::euclidean(),
            vec![0.0],
        )
        .unwrap();
        assert!(matches!(
            green_solve(&model),
            Err(Error::NoPositiveSolution(_))
        ));
        let bad = ModelManifold::new(
            Params::new(3, 1.0, 1.0, 0.2).unwrap(),
            WarpProfile::sphere(),
            vec![1.0],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn model_green_closed_forms() {
        let g = model_green(0.0, 0.0, 1.0, 2.0, 3).unwrap();
        for &r in &[1e-3, 0.4, 2.0] {
            assert!((g.eval(r).unwrap()[0] * 4.0 * PI * r - 1.0).abs() < 1e-10);
        }
        // ΔḠ = −Ḡ in R³ away from 0 gives cos r/(4πr)
        let g = model_green(0.0, 1.0, 1.0, 1.2, 3).unwrap();
        for &r in &[1e-3, 0.4, 1.2] {
            let e = g.eval(r).unwrap();
            let exact = r.cos() / (4.0 * PI * r);
            let dexact = -(r * r.sin() + r.cos()) / (4.0 * PI * r * r);
            assert!((e[0] / exact - 1.0).abs() < 1e-8, "{r} {} {exact}", e[0]);
            assert!((e[1] / dexact - 1.0).abs() < 1e-8);
        }
        assert!(g.asymptote_check().unwrap().passed);
        assert!(matches!(
            model_green(0.0, 1.0, 1.0, 2.0, 3),
            Err(Error::RadiusTooLarge { .. })
        ));
        // K = 1, F = 2: Ḡ = a·cos(√3 r)/(4π sin r)
        let g = model_green(1.0, 2.0, 1.0, 0.5, 3).unwrap();
        assert!((g.coefficient() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let exact = |r: f64| (3f64.sqrt() * r).cos() / (4.0 * PI * r.sin());
        assert!((g.eval(0.45).unwrap()[0] / exact(0.45) - 1.0).abs() < 1e-9);
        assert!(g.asymptote_check().unwrap().passed);
        assert!(matches!(
            model_green(1.0, 0.0, 1.0, 3.5, 3),
            Err(Error::RadiusTooLarge { .. })
        ));
    }

    #[test]
    fn ball_solution_differs_from_model_green_by_regular_mode() {
        // curvature-1 ball of radius 1.2 in dimension 3: V = 2, γ = 1,
        // μ = 2.5 ⇒ F = 0.5; the regular solution is sin(ωr)/sin r
        let params = Params::new(3, 1.0, 2.6, 0.2).unwrap();
        let ball = WarpProfile::space_form_ball(1.0, 1.2).unwrap();
        let sol = green_solve(&ModelManifold::new(params, ball, vec![0.0]).unwrap()).unwrap();
        let g = model_green(1.0, 0.5, 1.0, 1.2, 3).unwrap();
        let omega = 1.5f64.sqrt();
        let ratios: Vec<f64> = [0.1, 0.4, 0.8, 1.1]
            .iter()
            .map(|&r| (sol.u(r).unwrap() - g.eval(r).unwrap()[0]) / ((omega * r).sin() / r.sin()))
            .collect();
        for c in &ratios {
            assert!((c / ratios[0] - 1.0).abs() < 1e-8, "{ratios:?}");
        }
        assert!(sol.u(1.2).unwrap().abs() < 1e-10);
    }

    #[test]
    fn dimension_four_and_five_have_unit_mass() {
        for n in [4usize, 5] {
            let params = Params::new(n, 2.0, 2.0, 0.5).unwrap();
            let model = ModelManifold::new(params, WarpProfile::sphere(), vec![0.0, PI]).unwrap();
            let sol = green_solve(&model).unwrap();
            assert!((sol.flux(0.0, 1e-4).unwrap() - 1.0).abs() < 1e-6);
            assert!(sol.residual() <= 1e-8, "n = {n}: {}", sol.residual());
            for rep in green_asymptotics_check(&sol).unwrap() {
                assert!(rep.passed(), "n = {n}: {rep:?}");
            }
        }
    }

    #[test]
    fn fixed_step_convergence_is_fifth_order() {
        // the singular piece alone reproduces s·cos(ωs)/sin s on S³
        let warp = WarpProfile::sphere();
        let q = 0.5;
        let omega = (1.0f64 + q).sqrt();
        let err = |h: f64| {
            let opts = GreenOptions {
                fixed_step: Some(h),
                ..Default::default()
            };
            let piece = Piece::build(
                warp.chart(0.0).unwrap(),
                3,
                Arc::new(move |_| q),
                2.0,
                PieceEnd::Matched,
                &opts,
            )
            .unwrap();
            let y = piece.traj.end().1[0];
            (y - 2.0 * (2.0 * omega).cos() / 2f64.sin()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 20.0 && ratio < 45.0, "ratio {ratio}");
    }

    #[test]
    fn corrupted_profile_fails_rate_check() {
        let radii = dyadic_radii(1.0 / 16.0, ASYMPTOTIC_LEVELS);
        let samples: Vec<(f64, f64)> = radii
            .iter()
            .enumerate()
            .map(|(k, &r)| (r, if k % 2 == 0 { 0.1 } else { -0.1 }))
            .collect();
        assert!(!rate_check(&samples, RateClaim::Bounded).unwrap().passed);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn sphere_green_positive_with_unit_mass(gamma in 1.2f64..5.0, lambda in 0.0f64..1.9, eps in 0.05f64..1.0) {
            let sol = green_solve(&sphere_model(gamma, lambda, eps, vec![0.0])).unwrap();
            for k in 1..30 {
                prop_assert!(sol.u(PI * k as f64 / 30.0).unwrap() > 0.0);
            }
            prop_assert!((sol.flux(0.0, 1e-4).unwrap() - 1.0).abs() < 1e-6);
        }
    }
}
