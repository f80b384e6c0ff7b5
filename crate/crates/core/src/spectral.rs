//! Lowest eigenvalue of −γΔ + V for radial functions on warped models,
//! Rayleigh quotients, and pointwise supersolution defects.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::warped_geometry::{
    laplacian_radial, ricci_min, sphere_area, Domain, EndCondition, Jet, PoleLimit, WarpProfile,
};

/// Default cell count of the eigensolver.
pub const DEFAULT_CELLS: usize = 8192;
/// Slack used when comparing eigenvalues with defect certificates.
pub const CONSISTENCY_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EndKind {
    /// Regular (no-flux) end at a pole where the warp vanishes.
    Pole,
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SlDomain {
    Interval {
        start: f64,
        end: f64,
        start_kind: EndKind,
        end_kind: EndKind,
    },
    Circle {
        start: f64,
        period: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundaryTag {
    Periodic,
    PoleRegular,
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    RadialEig,
    Rayleigh,
    Supersolution,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// ψ ↦ −γ w⁻¹(wψ′)′ + Vψ with w = |S^{n−1}|Φ^{n−1}.
#[derive(Clone)]
pub struct SturmLiouville {
    pub n: usize,
    pub gamma: f64,
    pub domain: SlDomain,
    warp: ScalarFn,
    potential: ScalarFn,
    /// Function whose sign changes mark kinks of the potential.
    kink: Option<ScalarFn>,
    /// Points where the coefficients change scale; quadrature splits there.
    breakpoints: Vec<f64>,
    /// Intervals the mesh resolves with a fixed share of the cells.
    zones: Vec<(f64, f64)>,
}

impl std::fmt::Debug for SturmLiouville {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SturmLiouville")
            .field("n", &self.n)
            .field("gamma", &self.gamma)
            .field("domain", &self.domain)
            .finish()
    }
}

impl SturmLiouville {
    pub fn new(
        n: usize,
        gamma: f64,
        domain: SlDomain,
        warp: impl Fn(f64) -> f64 + Send + Sync + 'static,
        potential: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("dimension {n} must be at least 2")));
        }
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!("gamma = {gamma} must be positive")));
        }
        match domain {
            SlDomain::Interval { start, end, .. } => {
                if !(start.is_finite() && end.is_finite() && end > start) {
                    return Err(Error::Domain(format!(
                        "eigensolver needs a bounded interval, got [{start}, {end}]"
                    )));
                }
            }
            SlDomain::Circle { period, .. } => {
                if !(period > 0.0 && period.is_finite()) {
                    return Err(Error::Domain(format!("invalid period {period}")));
                }
            }
        }
        Ok(SturmLiouville {
            n,
            gamma,
            domain,
            warp: Arc::new(warp),
            potential: Arc::new(potential),
            kink: None,
            breakpoints: Vec::new(),
            zones: Vec::new(),
        })
    }

    pub fn with_kink(mut self, kink: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.kink = Some(Arc::new(kink));
        self
    }

    pub fn with_breakpoints(mut self, mut points: Vec<f64>) -> Self {
        points.sort_by(f64::total_cmp);
        self.breakpoints = points;
        self
    }

    /// Intervals where the coefficients vary on a scale far below the
    /// domain length; meshes grade toward them.
    pub fn with_refinement(mut self, zones: Vec<(f64, f64)>) -> Self {
        self.zones = zones;
        self
    }

    /// Same warp and domain with the potential replaced.
    pub fn with_potential(&self, potential: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SturmLiouville {
            potential: Arc::new(potential),
            kink: None,
            ..self.clone()
        }
    }

    /// Operator of a closed warped model with potential Ric_min.
    pub fn from_warp(w: &WarpProfile, n: usize, gamma: f64) -> Result<Self> {
        let domain = match w.domain() {
            Domain::Circle { start, period } => SlDomain::Circle { start, period },
            Domain::Interval {
                start,
                end,
                start_condition,
                end_condition,
            } => {
                let kind = |c: EndCondition| match c {
                    EndCondition::Pole => EndKind::Pole,
                    _ => EndKind::Dirichlet,
                };
                SlDomain::Interval {
                    start,
                    end,
                    start_kind: kind(start_condition),
                    end_kind: kind(end_condition),
                }
            }
        };
        let (wa, wb, wc) = (w.clone(), w.clone(), w.clone());
        let op = SturmLiouville::new(
            n,
            gamma,
            domain,
            move |r| wa.phi(r).unwrap_or(f64::NAN),
            move |r| ricci_min(&wb, n, r).map(|c| c.ric_min).unwrap_or(f64::NAN),
        )?;
        Ok(op.with_kink(move |r| {
            ricci_min(&wc, n, r)
                .map(|c| c.ric_rr - c.ric_ee)
                .unwrap_or(0.0)
        }))
    }

    pub fn warp_at(&self, r: f64) -> f64 {
        (self.warp)(r)
    }

    pub fn potential_at(&self, r: f64) -> f64 {
        (self.potential)(r)
    }

    pub fn boundary_tag(&self) -> BoundaryTag {
        match self.domain {
            SlDomain::Circle { .. } => BoundaryTag::Periodic,
            SlDomain::Interval {
                start_kind,
                end_kind,
                ..
            } => {
                if start_kind == EndKind::Pole && end_kind == EndKind::Pole {
                    BoundaryTag::PoleRegular
                } else {
                    BoundaryTag::Dirichlet
                }
            }
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self.domain {
            SlDomain::Interval { start, end, .. } => (start, end),
            SlDomain::Circle { start, period } => (start, start + period),
        }
    }

    fn volume_weight(&self, r: f64) -> f64 {
        let area = sphere_area(self.n).expect("validated dimension");
        area * (self.warp)(r).max(0.0).powi(self.n as i32 - 1)
    }
}

/// Finite-volume discretization: K ψ = λ M ψ with K symmetric tridiagonal
/// (cyclic on circles) and M diagonal.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub centers: Vec<f64>,
    /// Largest cell width.
    pub h: f64,
    pub diag: Vec<f64>,
    /// K_{i,i+1}
    pub off: Vec<f64>,
    /// K_{0,N−1} on circles.
    pub corner: Option<f64>,
    pub mass: Vec<f64>,
    pub potential: Vec<f64>,
}

/// Share of the cells placed inside the refinement zones.
const ZONE_SHARE: f64 = 0.125;
/// Growth of the cell width per unit distance away from a zone.
const GRADING: f64 = 0.08;

/// Cell faces: uniform, or graded toward the operator's refinement zones.
pub fn mesh(op: &SturmLiouville, cells: usize) -> Result<Vec<f64>> {
    if cells < 3 {
        return Err(Error::Domain(format!("need at least 3 cells, got {cells}")));
    }
    let (a, b) = op.bounds();
    let len = b - a;
    let uniform = || {
        (0..=cells)
            .map(|i| {
                if i == cells {
                    b
                } else {
                    a + len * i as f64 / cells as f64
                }
            })
            .collect()
    };
    let zones: Vec<(f64, f64)> = op
        .zones
        .iter()
        .copied()
        .filter(|(lo, hi)| hi > lo)
        .collect();
    let zone_len: f64 = zones.iter().map(|(lo, hi)| hi - lo).sum();
    let coarse = len / cells as f64;
    let fine = zone_len / (ZONE_SHARE * cells as f64);
    if zones.is_empty() || fine >= coarse {
        return Ok(uniform());
    }
    let periodic = matches!(op.domain, SlDomain::Circle { .. });
    let dist = |x: f64| {
        zones
            .iter()
            .map(|&(lo, hi)| {
                let d = if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                };
                if periodic {
                    let w = (x - a).rem_euclid(len) + a;
                    let e = |y: f64| {
                        if y < lo {
                            lo - y
                        } else if y > hi {
                            y - hi
                        } else {
                            0.0
                        }
                    };
                    d.min(e(w - len)).min(e(w + len)).min(e(w))
                } else {
                    d
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    let width = |x: f64| coarse.min(fine + GRADING * dist(x));
    // march with the width function, then resample to exactly `cells` cells
    let mut marks = vec![a];
    let mut x = a;
    while x < b {
        x = (x + width(x)).min(b);
        marks.push(x);
    }
    let m = (marks.len() - 1) as f64;
    let faces = (0..=cells)
        .map(|i| {
            if i == cells {
                return b;
            }
            let t = m * i as f64 / cells as f64;
            let k = (t.floor() as usize).min(marks.len() - 2);
            marks[k] + (t - k as f64) * (marks[k + 1] - marks[k])
        })
        .collect();
    Ok(faces)
}

pub fn discretize(op: &SturmLiouville, cells: usize) -> Result<Discretization> {
    discretize_on(op, &mesh(op, cells)?)
}

/// Discretization on given faces spanning the whole domain.
pub fn discretize_on(op: &SturmLiouville, faces: &[f64]) -> Result<Discretization> {
    let periodic = matches!(op.domain, SlDomain::Circle { .. });
    let cells = faces.len().saturating_sub(1);
    if cells < 3 {
        return Err(Error::Domain(format!("need at least 3 cells, got {cells}")));
    }
    let widths: Vec<f64> = faces.windows(2).map(|w| w[1] - w[0]).collect();
    if widths.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("mesh faces must increase strictly".into()));
    }
    let centers: Vec<f64> = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let face_w: Vec<f64> = faces.iter().map(|&x| op.volume_weight(x)).collect();
    let center_w: Vec<f64> = centers.iter().map(|&x| op.volume_weight(x)).collect();
    let potential: Vec<f64> = centers.iter().map(|&x| op.potential_at(x)).collect();
    if potential
        .iter()
        .chain(center_w.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Solver(
            "potential or weight is not finite on the grid".into(),
        ));
    }
    let mass: Vec<f64> = (0..cells)
        .map(|i| widths[i] / 6.0 * (face_w[i] + 4.0 * center_w[i] + face_w[i + 1]))
        .collect();
    if mass.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Solver("degenerate cell mass".into()));
    }
    let g = op.gamma;
    let mut diag: Vec<f64> = potential.iter().zip(&mass).map(|(v, m)| v * m).collect();
    let mut off = vec![0.0; cells - 1];
    for i in 0..cells - 1 {
        let k = g * face_w[i + 1] / (centers[i + 1] - centers[i]);
        diag[i] += k;
        diag[i + 1] += k;
        off[i] = -k;
    }
    let mut corner = None;
    if periodic {
        let k = g * face_w[0] / (0.5 * (widths[0] + widths[cells - 1]));
        diag[0] += k;
        diag[cells - 1] += k;
        corner = Some(-k);
    } else if let SlDomain::Interval {
        start_kind,
        end_kind,
        ..
    } = op.domain
    {
        // antisymmetric ghost cell: flux 2wψ/h through a Dirichlet face
        if start_kind == EndKind::Dirichlet {
            diag[0] += 2.0 * g * face_w[0] / widths[0];
        }
        if end_kind == EndKind::Dirichlet {
            diag[cells - 1] += 2.0 * g * face_w[cells] / widths[cells - 1];
        }
    }
    Ok(Discretization {
        centers,
        h: widths.iter().copied().fold(0.0, f64::max),
        diag,
        off,
        corner,
        mass,
        potential,
    })
}

/// LDLᵀ pivots of a symmetric tridiagonal matrix (K − σM restricted to the
/// first `len` rows).
fn pivots(d: &Discretization, sigma: f64, len: usize) -> Vec<f64> {
    let mut piv = Vec::with_capacity(len);
    for i in 0..len {
        let mut p = d.diag[i] - sigma * d.mass[i];
        if i > 0 {
            p -= d.off[i - 1] * d.off[i - 1] / piv[i - 1];
        }
        if p == 0.0 {
            p = -f64::EPSILON * (d.diag[i].abs() + sigma.abs() * d.mass[i]).max(f64::MIN_POSITIVE);
        }
        piv.push(p);
    }
    piv
}

/// Solves the tridiagonal (non-cyclic) system with precomputed pivots.
fn tri_solve(d: &Discretization, piv: &[f64], rhs: &[f64]) -> Vec<f64> {
    let len = piv.len();
    let mut y = rhs.to_vec();
    for i in 1..len {
        y[i] -= d.off[i - 1] / piv[i - 1] * y[i - 1];
    }
    let mut x = vec![0.0; len];
    for i in (0..len).rev() {
        let mut v = y[i];
        if i + 1 < len {
            v -= d.off[i] * x[i + 1];
        }
        x[i] = v / piv[i];
    }
    x
}

struct Factor {
    piv: Vec<f64>,
    /// For circles: (T′ − σM′)⁻¹e and the Schur complement.
    cyclic: Option<(Vec<f64>, f64)>,
}

impl Discretization {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn factor(&self, sigma: f64) -> Factor {
        let n = self.len();
        match self.corner {
            None => Factor {
                piv: pivots(self, sigma, n),
                cyclic: None,
            },
            Some(c) => {
                let piv = pivots(self, sigma, n - 1);
                let mut e = vec![0.0; n - 1];
                e[0] += c;
                e[n - 2] += self.off[n - 2];
                let te = tri_solve(self, &piv, &e);
                let dot: f64 = e.iter().zip(&te).map(|(a, b)| a * b).sum();
                let schur = self.diag[n - 1] - sigma * self.mass[n - 1] - dot;
                Factor {
                    piv,
                    cyclic: Some((te, schur)),
                }
            }
        }
    }

    /// Number of eigenvalues of K ψ = λ M ψ below σ.
    pub fn count_below(&self, sigma: f64) -> usize {
        let f = self.factor(sigma);
        let mut count = f.piv.iter().filter(|p| **p < 0.0).count();
        if let Some((_, s)) = f.cyclic {
            if s < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn solve_shifted(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let f = self.factor(sigma);
        match f.cyclic {
            None => tri_solve(self, &f.piv, rhs),
            Some((te, schur)) => {
                let n = self.len();
                let tf = tri_solve(self, &f.piv, &rhs[..n - 1]);
                let c = self.corner.unwrap_or(0.0);
                let etf = c * tf[0] + self.off[n - 2] * tf[n - 2];
                let y = (rhs[n - 1] - etf) / schur;
                let mut x: Vec<f64> = tf.iter().zip(&te).map(|(a, b)| a - b * y).collect();
                x.push(y);
                x
            }
        }
    }

    /// K ψ.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * psi[i];
            if i > 0 {
                v += self.off[i - 1] * psi[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * psi[i + 1];
            }
            out[i] = v;
        }
        if let Some(c) = self.corner {
            out[0] += c * psi[n - 1];
            out[n - 1] += c * psi[0];
        }
        out
    }

    /// ψᵀKψ / ψᵀMψ.
    pub fn rayleigh(&self, psi: &[f64]) -> Result<f64> {
        let num: f64 = self.apply(psi).iter().zip(psi).map(|(a, b)| a * b).sum();
        let den: f64 = psi.iter().zip(&self.mass).map(|(p, m)| p * p * m).sum();
        if !(den > 0.0) {
            return Err(Error::Domain("test function vanishes on the grid".into()));
        }
        Ok(num / den)
    }

    /// Gershgorin enclosure of the spectrum of M^{−1/2} K M^{−1/2}.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let a = self.diag[i] / self.mass[i];
            let mut radius = 0.0;
            if i > 0 {
                radius += self.off[i - 1].abs() / (self.mass[i] * self.mass[i - 1]).sqrt();
            }
            if i + 1 < n {
                radius += self.off[i].abs() / (self.mass[i] * self.mass[i + 1]).sqrt();
            }
            if let Some(c) = self.corner {
                if i == 0 || i == n - 1 {
                    radius += c.abs() / (self.mass[0] * self.mass[n - 1]).sqrt();
                }
            }
            lo = lo.min(a - radius);
            hi = hi.max(a + radius);
        }
        (lo, hi)
    }

    /// Smallest eigenvalue by Sturm-count bisection, with its eigenvector.
    pub fn ground_state(&self) -> Result<(f64, Vec<f64>)> {
        let (mut lo, mut hi) = self.gershgorin();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Solver("non-finite Gershgorin bounds".into()));
        }
        lo -= 1e-9 * lo.abs().max(1.0);
        hi += 1e-9 * hi.abs().max(1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        let shift = lambda - 1e-9 * lambda.abs().max(1.0);
        let n = self.len();
        let mut psi = vec![1.0; n];
        for _ in 0..8 {
            let rhs: Vec<f64> = psi.iter().zip(&self.mass).map(|(p, m)| p * m).collect();
            let mut next = self.solve_shifted(shift, &rhs);
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Solver("inverse iteration broke down".into()));
            }
            let sign = if next.iter().sum::<f64>() < 0.0 {
                -1.0
            } else {
                1.0
            };
            next.iter_mut().for_each(|v| *v *= sign / norm);
            psi = next;
        }
        Ok((lambda, psi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralResult {
    pub lambda1: f64,
    pub method: Method,
    pub cells: usize,
    pub boundary: BoundaryTag,
    /// λ₁ with the first fiber harmonic potential added, minus λ₁.
    pub fiber_mode_gap: f64,
    /// Richardson value from this grid and the half grid.
    pub extrapolated: f64,
    /// Rayleigh quotient of the computed eigenvector on the same grid.
    pub discrete_rayleigh: f64,
    /// min/max of the eigenvector; positive for a one-signed ground state.
    pub ground_state_ratio: f64,
    pub gershgorin: (f64, f64),
}

/// λ₁ of the radial operator with fiber gap, Richardson estimate and
/// ground-state diagnostics.
pub fn lambda1_radial(op: &SturmLiouville, cells: usize) -> Result<SpectralResult> {
    let faces = mesh(op, cells)?;
    let disc = discretize_on(op, &faces)?;
    let (lambda1, psi) = disc.ground_state()?;
    let discrete_rayleigh = disc.rayleigh(&psi)?;
    let (min, max) = psi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    let coarse_faces: Vec<f64> = if cells.is_multiple_of(2) {
        faces.iter().step_by(2).copied().collect()
    } else {
        mesh(op, cells / 2)?
    };
    let coarse = discretize_on(op, &coarse_faces)?.ground_state()?.0;
    let extrapolated = (4.0 * lambda1 - coarse) / 3.0;
    let fiber = fiber_operator(op);
    let fiber_lambda = discretize_on(&fiber, &faces)?.ground_state()?.0;
    Ok(SpectralResult {
        lambda1,
        method: Method::RadialEig,
        cells,
        boundary: op.boundary_tag(),
        fiber_mode_gap: fiber_lambda - lambda1,
        extrapolated,
        discrete_rayleigh,
        ground_state_ratio: min / max,
        gershgorin: disc.gershgorin(),
    })
}

/// The operator on the first fiber harmonic: potential V + γ(n−1)/Φ².
pub fn fiber_operator(op: &SturmLiouville) -> SturmLiouville {
    let base = op.clone();
    let mu1 = (op.n - 1) as f64;
    op.with_potential(move |r| {
        let phi = base.warp_at(r);
        base.potential_at(r) + base.gamma * mu1 / (phi * phi)
    })
}

/// λ₁ alone (no diagnostics).
pub fn lambda1_value(op: &SturmLiouville, cells: usize) -> Result<f64> {
    Ok(discretize(op, cells)?.ground_state()?.0)
}

/// Continuous Rayleigh quotient of a radial test function given as
/// r ↦ (ψ, ψ′), integrated over `support` (the whole domain when `None`).
pub fn rayleigh_quotient(
    op: &SturmLiouville,
    testfn: &(dyn Fn(f64) -> (f64, f64) + Sync),
    support: Option<(f64, f64)>,
) -> Result<f64> {
    let (a, b) = support.unwrap_or_else(|| op.bounds());
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(Error::Domain(format!("invalid support [{a}, {b}]")));
    }
    let mut segments = vec![a];
    segments.extend(op.breakpoints.iter().copied().filter(|&p| p > a && p < b));
    segments.push(b);
    let mut cuts = vec![a];
    for seg in segments.windows(2) {
        let (sa, sb) = (seg[0], seg[1]);
        let Some(kink) = &op.kink else { break };
        let m = 512;
        let xs: Vec<f64> = (0..=m)
            .map(|i| sa + (sb - sa) * i as f64 / m as f64)
            .collect();
        for w in xs.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            let (flo, fhi) = (kink(lo), kink(hi));
            if flo * fhi < 0.0 {
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if kink(mid) * flo > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
        }
        if sb < b {
            cuts.push(sb);
        }
    }
    if op.kink.is_none() {
        cuts.extend(op.breakpoints.iter().copied().filter(|&p| p > a && p < b));
    }
    cuts.push(b);
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_depth: 50,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for w in cuts.windows(2) {
        num += integrate(
            |r| {
                let (psi, dpsi) = testfn(r);
                (op.gamma * dpsi * dpsi + op.potential_at(r) * psi * psi) * op.volume_weight(r)
            },
            w[0],
            w[1],
            opts,
        )?
        .value;
        den += integrate(
            |r| {
                let (psi, _) = testfn(r);
                psi * psi * op.volume_weight(r)
            },
            w[0],
            w[1],
            opts,
        )?
        .value;
    }
    if !(den > 0.0) {
        return Err(Error::Domain("test function has zero L² norm".into()));
    }
    Ok(num / den)
}

/// One point of a defect evaluation: ũ, its Laplacian and Ric_min at r.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectPoint {
    pub r: f64,
    pub u: f64,
    pub laplacian: f64,
    pub ric_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectProfile {
    pub r: Vec<f64>,
    pub defect: Vec<f64>,
    pub min: f64,
    pub argmin: f64,
}

/// D = −γΔu + Ric_min·u − (λ − ε)u at each point.
pub fn supersolution_defect(
    points: &[DefectPoint],
    gamma: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<DefectProfile> {
    if points.is_empty() {
        return Err(Error::Domain("no defect points".into()));
    }
    let target = lambda - epsilon;
    let mut r = Vec::with_capacity(points.len());
    let mut defect = Vec::with_capacity(points.len());
    let mut min = f64::INFINITY;
    let mut argmin = f64::NAN;
    for p in points {
        if !(p.u > 0.0) {
            return Err(Error::Precondition(format!(
                "candidate u = {} is not positive at r = {}",
                p.u, p.r
            )));
        }
        let d = -gamma * p.laplacian + p.ric_min * p.u - target * p.u;
        if d < min || argmin.is_nan() {
            min = d;
            argmin = p.r;
        }
        r.push(p.r);
        defect.push(d);
    }
    Ok(DefectProfile {
        r,
        defect,
        min,
        argmin,
    })
}

/// Defect points of a radial candidate u on a warped model.
pub fn model_defect_points(
    w: &WarpProfile,
    n: usize,
    u: &dyn Fn(f64) -> Jet,
    grid: &[f64],
) -> Result<Vec<DefectPoint>> {
    grid.iter()
        .map(|&r| {
            let jet = u(r);
            Ok(DefectPoint {
                r,
                u: jet.value,
                laplacian: laplacian_radial(w, n, jet, r, PoleLimit::Regular)?,
                ric_min: ricci_min(w, n, r)?.ric_min,
            })
        })
        .collect()
}

/// Condition (ii) ⇒ (i) on one model: a nonnegative defect must come with
/// λ₁ ≥ λ − ε up to the slack.
pub fn eig_vs_defect_consistency(defect_min: f64, lambda1: f64, lambda: f64, epsilon: f64) -> bool {
    !(defect_min >= 0.0) || lambda1 >= lambda - epsilon - CONSISTENCY_SLACK
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sphere_op(gamma: f64) -> SturmLiouville {
        SturmLiouville::from_warp(&WarpProfile::sphere(), 3, gamma).unwrap()
    }

    #[test]
    fn constant_potential_ground_state_is_constant() {
        let res = lambda1_radial(&sphere_op(3.0), 2048).unwrap();
        assert!((res.lambda1 - 2.0).abs() < 1e-9, "{}", res.lambda1);
        assert!(res.ground_state_ratio > 0.999_999);
        assert!(res.fiber_mode_gap > 0.0);
        assert_eq!(res.boundary, BoundaryTag::PoleRegular);
        let c = SturmLiouville::new(
            3,
            1.0,
            SlDomain::Circle {
                start: 0.0,
                period: 3.0,
            },
            |_| 1.0,
            |_| 0.7,
        )
        .unwrap();
        let res = lambda1_radial(&c, 1024).unwrap();
        // rounding floor is about eps/h²
        assert!((res.lambda1 - 0.7).abs() < 1e-9, "{}", res.lambda1);
        assert_eq!(res.boundary, BoundaryTag::Periodic);
    }

    #[test]
    fn second_eigenvalue_of_sphere_laplacian() {
        // Radial spectrum of −Δ on S³: k(k+2); with V = 0 the count below 3.5
        // must be 2 (eigenvalues 0 and 3).
        let op = sphere_op(1.0).with_potential(|_| 0.0);
        let d = discretize(&op, 4096).unwrap();
        assert_eq!(d.count_below(-0.1), 0);
        assert_eq!(d.count_below(2.9), 1);
        assert_eq!(d.count_below(3.1), 2);
        assert_eq!(d.count_below(7.9), 2);
        assert_eq!(d.count_below(8.1), 3);
    }

    #[test]
    fn dirichlet_interval_matches_sine_mode() {
        // n = 2 with Φ ≡ 1 is the plain 1D operator: λ₁ = γ(π/L)².
        let op = SturmLiouville::new(
            2,
            2.0,
            SlDomain::Interval {
                start: 0.0,
                end: 2.0,
                start_kind: EndKind::Dirichlet,
                end_kind: EndKind::Dirichlet,
            },
            |_| 1.0,
            |_| 0.0,
        )
        .unwrap();
        let res = lambda1_radial(&op, 4096).unwrap();
        let exact = 2.0 * (PI / 2.0).powi(2);
        assert!((res.lambda1 - exact).abs() < 1e-6);
        assert!(
            (res.lambda1 - exact).abs() > 1e2 * (res.extrapolated - exact).abs(),
            "{} {} {}",
            res.lambda1,
            res.extrapolated,
            exact
        );
    }

    #[test]
    fn periodic_first_mode_and_rayleigh() {
        // flat circle: second eigenvalue γ(2π/L)², Rayleigh of cos gives the same
        let (gamma, l) = (1.5, 4.0);
        let op = SturmLiouville::new(
            3,
            gamma,
            SlDomain::Circle {
                start: 0.0,
                period: l,
            },
            |_| 1.0,
            |_| 0.0,
        )
        .unwrap();
        let k = 2.0 * PI / l;
        let rq = rayleigh_quotient(&op, &|r| ((k * r).cos(), -k * (k * r).sin()), None).unwrap();
        assert!((rq - gamma * k * k).abs() < 1e-10);
        let d = discretize(&op, 2048).unwrap();
        assert_eq!(d.count_below(gamma * k * k * 0.99), 1);
        assert_eq!(d.count_below(gamma * k * k * 1.01), 3);
    }

    #[test]
    fn rayleigh_constant_examples() {
        let rq = rayleigh_quotient(&sphere_op(7.0), &|_| (1.0, 0.0), None).unwrap();
        assert!((rq - 2.0).abs() < 1e-12);
        assert!(rayleigh_quotient(&sphere_op(1.0), &|_| (0.0, 0.0), None).is_err());
    }

    #[test]
    fn warped_circle_self_consistency() {
        let w = WarpProfile::warped_circle(2.0 * PI, 0.3).unwrap();
        let op = SturmLiouville::from_warp(&w, 3, 2.0).unwrap();
        let res = lambda1_radial(&op, 8192).unwrap();
        assert!((res.lambda1 - res.discrete_rayleigh).abs() < 1e-8);
        assert!(res.ground_state_ratio > 0.0);
        assert!(res.fiber_mode_gap >= 0.0);
    }

    #[test]
    fn random_test_functions_bound_lambda1() {
        let w = WarpProfile::warped_circle(5.0, 0.25).unwrap();
        let op = SturmLiouville::from_warp(&w, 4, 1.3).unwrap();
        let d = discretize(&op, 4096).unwrap();
        let (lambda, _) = d.ground_state().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let coeffs: Vec<(f64, f64)> = (0..6)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let psi: Vec<f64> = d
                .centers
                .iter()
                .map(|&x| {
                    1.0 + coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, (a, b))| {
                            let t = 2.0 * PI * (k + 1) as f64 * x / 5.0;
                            a * t.cos() + b * t.sin()
                        })
                        .sum::<f64>()
                })
                .collect();
            assert!(d.rayleigh(&psi).unwrap() >= lambda - 1e-8);
        }
    }

    #[test]
    fn defect_examples() {
        let s = WarpProfile::sphere();
        let grid: Vec<f64> = (0..=100).map(|i| PI * i as f64 / 100.0).collect();
        let pts = model_defect_points(&s, 3, &|_| Jet::new(1.0, 0.0, 0.0, 0.0), &grid).unwrap();
        let prof = supersolution_defect(&pts, 3.0, 2.0, 0.2).unwrap();
        for d in &prof.defect {
            assert!((d - 0.2).abs() < 1e-12);
        }
        assert!(eig_vs_defect_consistency(prof.min, 2.0, 2.0, 0.2));
        // raising λ above λ₁ + ε makes the defect negative; the implication is vacuous
        let neg = supersolution_defect(&pts, 3.0, 2.5, 0.2).unwrap();
        assert!(neg.min < 0.0);
        assert!(eig_vs_defect_consistency(neg.min, 2.0, 2.5, 0.2));
        let bad = [DefectPoint {
            r: 0.1,
            u: -1.0,
            laplacian: 0.0,
            ric_min: 0.0,
        }];
        assert!(matches!(
            supersolution_defect(&bad, 1.0, 0.0, 0.1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn mesh_convergence_is_second_order() {
        let w = WarpProfile::warped_circle(3.0, 0.3).unwrap();
        let op = SturmLiouville::from_warp(&w, 3, 1.0).unwrap();
        let l = |n| lambda1_value(&op, n).unwrap();
        let (a, b, c) = (l(512), l(1024), l(2048));
        let ratio = (a - b) / (b - c);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn fiber_gap_nonnegative(amp in 0.0f64..0.6, gamma in 0.5f64..4.0, n in 3usize..6) {
            let w = WarpProfile::warped_circle(4.0, amp).unwrap();
            let op = SturmLiouville::from_warp(&w, n, gamma).unwrap();
            let res = lambda1_radial(&op, 512).unwrap();
            prop_assert!(res.fiber_mode_gap >= 0.0);
            prop_assert!(res.ground_state_ratio > 0.0);
        }
    }
}
