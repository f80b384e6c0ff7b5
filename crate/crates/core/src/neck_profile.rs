//! Even convex neck profiles f with f = |x| outside [−1, 1], the cutoff η,
//! and the constraint checks a neck must pass before it is used in a tunnel.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::quad::{integrate, QuadOptions};
use crate::warped_geometry::{DerivativeSource, Jet};

const PANELS: usize = 64;

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-17,
        rel_tol: 1e-13,
        max_depth: 40,
    }
}

/// Shape of f″ on (−1, 1) up to normalization: (1 + κx²)·exp(−1/(1−x²)).
#[derive(Clone, Debug)]
struct BumpTables {
    kappa: f64,
    c: f64,
    f0: f64,
    /// ∫ g over panel j
    i0: [f64; PANELS],
    /// ∫ (s − a_j) g over panel j
    ia: [f64; PANELS],
}

fn bump(kappa: f64, x: f64) -> f64 {
    let x = x.abs();
    if x >= 1.0 {
        return 0.0;
    }
    (1.0 + kappa * x * x) * (-1.0 / ((1.0 - x) * (1.0 + x))).exp()
}

impl BumpTables {
    fn new(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Construction(format!(
                "bump weight kappa = {kappa} must be >= 0"
            )));
        }
        let mut i0 = [0.0; PANELS];
        let mut ia = [0.0; PANELS];
        let h = 1.0 / PANELS as f64;
        for j in 0..PANELS {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            i0[j] = integrate(|s| bump(kappa, s), a, b, quad_opts())?.value;
            ia[j] = integrate(|s| (s - a) * bump(kappa, s), a, b, quad_opts())?.value;
        }
        let total: f64 = i0.iter().sum();
        let c = 1.0 / total;
        let f0 = c
            * (0..PANELS)
                .map(|j| ia[j] + j as f64 * h * i0[j])
                .sum::<f64>();
        Ok(BumpTables {
            kappa,
            c,
            f0,
            i0,
            ia,
        })
    }

    fn panel(x: f64) -> (usize, f64, f64) {
        let h = 1.0 / PANELS as f64;
        let k = ((x * PANELS as f64).floor() as usize).min(PANELS - 1);
        (k, k as f64 * h, (k + 1) as f64 * h)
    }

    fn partial(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        // smooth integrand on a short panel; failure here would mean a bug
        integrate(f, a, b, quad_opts())
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    }

    /// (f(x) − x, 1 − f′(x)) for 0 ≤ x < 1, both free of cancellation.
    fn tail(&self, x: f64) -> (f64, f64) {
        let (k, _, b) = Self::panel(x);
        let kappa = self.kappa;
        let mut gap = self.partial(|s| bump(kappa, s), x, b);
        let mut excess = self.partial(|s| (s - x) * bump(kappa, s), x, b);
        for j in k + 1..PANELS {
            let aj = j as f64 / PANELS as f64;
            gap += self.i0[j];
            excess += self.ia[j] + (aj - x) * self.i0[j];
        }
        (self.c * excess, self.c * gap)
    }

    /// (f(x) − f(0), f′(x)) for 0 ≤ x ≤ 1/2.
    fn head(&self, x: f64) -> (f64, f64) {
        let (k, a, _) = Self::panel(x);
        let kappa = self.kappa;
        let mut slope = self.partial(|s| bump(kappa, s), a, x);
        let mut rise = self.partial(|s| (x - s) * bump(kappa, s), a, x);
        for j in 0..k {
            let aj = j as f64 / PANELS as f64;
            slope += self.i0[j];
            rise += (x - aj) * self.i0[j] - self.ia[j];
        }
        (self.c * rise, self.c * slope)
    }

    /// Returns (jet, f − |x|, 1 − |f′|) at x ≥ 0.
    fn eval(&self, x: f64) -> (Jet, f64, f64) {
        if x >= 1.0 {
            return (Jet::new(x, 1.0, 0.0, 0.0), 0.0, 0.0);
        }
        let d2 = self.c * bump(self.kappa, x);
        let d3 = d2 * self.log_derivative(x);
        if x <= 0.5 {
            let (rise, slope) = self.head(x);
            let f = self.f0 + rise;
            (Jet::new(f, slope, d2, d3), f - x, 1.0 - slope)
        } else {
            let (excess, gap) = self.tail(x);
            (Jet::new(x + excess, 1.0 - gap, d2, d3), excess, gap)
        }
    }

    /// f‴/f″ = 2κx/(1+κx²) − 2x/(1−x²)².
    fn log_derivative(&self, x: f64) -> f64 {
        let q = (1.0 - x) * (1.0 + x);
        2.0 * self.kappa * x / (1.0 + self.kappa * x * x) - 2.0 * x / (q * q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NeckFamily {
    /// f″ ∝ exp(−1/(1−x²)).
    Canonical,
    /// f″ ∝ (1 + κx²)·exp(−1/(1−x²)); for large κ f″ is not monotone on (0, 1).
    Shoulder { kappa: f64 },
    /// x·coth x.
    XCothX,
    /// √(x² + δ²).
    Hyperbola { delta: f64 },
    /// Tabulated f on [0, X], extended evenly and by |x| past X.
    Sampled,
}

#[derive(Clone, Debug)]
enum Kind {
    Bump(Arc<BumpTables>),
    XCothX,
    Hyperbola(f64),
    Sampled(Arc<MonotoneCubic>),
}

#[derive(Clone, Debug)]
pub struct NeckProfile {
    family: NeckFamily,
    kind: Kind,
}

static CANONICAL: OnceLock<Result<NeckProfile>> = OnceLock::new();

/// The canonical neck; quadrature constants are computed once per process.
pub fn build_neck_profile() -> Result<NeckProfile> {
    CANONICAL
        .get_or_init(|| {
            let tables = BumpTables::new(0.0)?;
            Ok(NeckProfile {
                family: NeckFamily::Canonical,
                kind: Kind::Bump(Arc::new(tables)),
            })
        })
        .clone()
}

fn xcothx(x: f64) -> Jet {
    let x = x.abs();
    if x < 0.1 {
        // Taylor series of x coth x = 1 + x²/3 − x⁴/45 + 2x⁶/945 − x⁸/4725 + 2x¹⁰/93555
        let c = [
            1.0,
            1.0 / 3.0,
            -1.0 / 45.0,
            2.0 / 945.0,
            -1.0 / 4725.0,
            2.0 / 93555.0,
        ];
        let mut jet = Jet::default();
        for (k, ck) in c.iter().enumerate() {
            let p = 2 * k as i32;
            let pf = p as f64;
            jet.value += ck * x.powi(p);
            if p >= 1 {
                jet.d1 += ck * pf * x.powi(p - 1);
            }
            if p >= 2 {
                jet.d2 += ck * pf * (pf - 1.0) * x.powi(p - 2);
            }
            if p >= 3 {
                jet.d3 += ck * pf * (pf - 1.0) * (pf - 2.0) * x.powi(p - 3);
            }
        }
        return jet;
    }
    let (s, c) = (x.sinh(), x.cosh());
    let n = x * c - s;
    Jet::new(
        x * c / s,
        c / s - x / (s * s),
        2.0 * n / (s * s * s),
        2.0 * (x * s * s - 3.0 * c * n) / (s * s * s * s),
    )
}

impl NeckProfile {
    /// Member of the shoulder family; κ = 0 is the canonical neck.
    pub fn shoulder(kappa: f64) -> Result<Self> {
        if kappa == 0.0 {
            return build_neck_profile();
        }
        Ok(NeckProfile {
            family: NeckFamily::Shoulder { kappa },
            kind: Kind::Bump(Arc::new(BumpTables::new(kappa)?)),
        })
    }

    pub fn xcothx() -> Self {
        NeckProfile {
            family: NeckFamily::XCothX,
            kind: Kind::XCothX,
        }
    }

    pub fn hyperbola(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Construction(format!(
                "delta = {delta} must be positive"
            )));
        }
        Ok(NeckProfile {
            family: NeckFamily::Hyperbola { delta },
            kind: Kind::Hyperbola(delta),
        })
    }

    /// Table of f at nonnegative abscissae starting at 0.
    pub fn sampled(x: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if x.first().copied() != Some(0.0) {
            return Err(Error::Profile(
                "sampled neck tables must start at x = 0".into(),
            ));
        }
        Ok(NeckProfile {
            family: NeckFamily::Sampled,
            kind: Kind::Sampled(Arc::new(MonotoneCubic::new(x, f)?)),
        })
    }

    pub fn family(&self) -> &NeckFamily {
        &self.family
    }

    pub fn source(&self) -> DerivativeSource {
        match self.kind {
            Kind::Sampled(_) => DerivativeSource::Interpolated,
            _ => DerivativeSource::Analytic,
        }
    }

    /// Normalization constant c of the bump families.
    pub fn normalization(&self) -> Option<f64> {
        match &self.kind {
            Kind::Bump(t) => Some(t.c),
            _ => None,
        }
    }

    /// (jet, f − |x|, 1 − |f′|) at |x|; the last two avoid cancellation.
    fn eval_abs(&self, x: f64) -> (Jet, f64, f64) {
        match &self.kind {
            Kind::Bump(t) => t.eval(x),
            Kind::XCothX => {
                let j = xcothx(x);
                (j, j.value - x, 1.0 - j.d1)
            }
            Kind::Hyperbola(d) => {
                let f = x.hypot(*d);
                let jet = Jet::new(f, x / f, d * d / (f * f * f), -3.0 * d * d * x / f.powi(5));
                (jet, d * d / (f + x), d * d / (f * (f + x)))
            }
            Kind::Sampled(t) => {
                let (_, end) = t.range();
                if x > end {
                    return (Jet::new(x, 1.0, 0.0, 0.0), 0.0, 0.0);
                }
                let [v, d1, d2, d3] = t.eval(x);
                (Jet::new(v, d1, d2, d3), v - x, 1.0 - d1.abs())
            }
        }
    }

    pub fn jet(&self, x: f64) -> Jet {
        let (j, _, _) = self.eval_abs(x.abs());
        if x < 0.0 {
            j.reflect()
        } else {
            j
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x).value
    }

    /// f(x) − |x| without cancellation.
    pub fn excess(&self, x: f64) -> f64 {
        self.eval_abs(x.abs()).1
    }

    /// 1 − |f′(x)| without cancellation.
    pub fn slope_gap(&self, x: f64) -> f64 {
        self.eval_abs(x.abs()).2
    }

    pub fn center_value(&self) -> f64 {
        self.value(0.0)
    }

    /// For the bump families and |x| < 1: (ln f″(x), f‴/f″). Lets sign checks
    /// survive where f″ underflows near ±1.
    pub fn curvature_log(&self, x: f64) -> Option<(f64, f64)> {
        match &self.kind {
            Kind::Bump(t) if x.abs() < 1.0 => {
                let a = x.abs();
                let ln = t.c.ln() + (t.kappa * a * a).ln_1p() - 1.0 / ((1.0 - a) * (1.0 + a));
                Some((ln, x.signum() * t.log_derivative(a)))
            }
            _ => None,
        }
    }
}

/// η(x) = S(3|x| − 1) with S the exp(−1/t) smooth step.
#[derive(Clone, Copy, Debug, Default)]
pub struct CutoffEta;

pub fn build_cutoff() -> CutoffEta {
    CutoffEta
}

/// Smooth step on [0, 1] and its first two derivatives.
pub fn smooth_step(t: f64) -> [f64; 3] {
    if !(t > 0.0) {
        return [0.0, 0.0, 0.0];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let u = 1.0 - t;
    let h = 1.0 / t - 1.0 / u;
    let e = (-h.abs()).exp();
    let s = if h > 0.0 {
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + e)
    };
    let p = e / ((1.0 + e) * (1.0 + e));
    let dh = -1.0 / (t * t) - 1.0 / (u * u);
    let ddh = 2.0 / (t * t * t) - 2.0 / (u * u * u);
    let ds = -dh * p;
    let dds = -ddh * p - dh * ds * (1.0 - 2.0 * s);
    [s, ds, dds]
}

impl CutoffEta {
    pub fn eval(&self, x: f64) -> f64 {
        smooth_step(3.0 * x.abs() - 1.0)[0]
    }

    /// (η, η′, η″) at x.
    pub fn jet(&self, x: f64) -> [f64; 3] {
        let [s, ds, dds] = smooth_step(3.0 * x.abs() - 1.0);
        [s, 3.0 * x.signum() * ds, 9.0 * dds]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The check cannot be carried out for this profile source.
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Signed slack: nonnegative (positive for strict constraints) when satisfied.
    pub worst_margin: f64,
    pub location: f64,
    /// Grid points where the quantity underflows and the sign follows from the
    /// family's closed form.
    pub underflow_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeckReport {
    pub grid_size: usize,
    pub checks: Vec<ConstraintCheck>,
}

impl NeckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const OUTSIDE_TOL: f64 = 1e-12;

struct Worst {
    margin: f64,
    location: f64,
    underflow: usize,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            location: f64::NAN,
            underflow: 0,
        }
    }

    fn push(&mut self, margin: f64, x: f64) {
        if margin < self.margin || self.location.is_nan() {
            self.margin = margin;
            self.location = x;
        }
    }

    fn finish(self, name: &'static str, ok: bool) -> ConstraintCheck {
        ConstraintCheck {
            name,
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            worst_margin: self.margin,
            location: self.location,
            underflow_points: self.underflow,
        }
    }
}

pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Evaluates every neck constraint on a uniform grid over [−2, 2].
pub fn validate_neck(f: &NeckProfile, grid_size: usize) -> Result<NeckReport> {
    if grid_size < 1000 {
        return Err(Error::Domain(format!(
            "grid_size {grid_size} must be at least 1000"
        )));
    }
    let grid = uniform_grid(-2.0, 2.0, grid_size);
    let jets: Vec<Jet> = grid.iter().map(|&x| f.jet(x)).collect();
    let inside = |x: f64| x.abs() < 1.0;
    let mut checks = Vec::new();

    let mut w = Worst::new();
    for (&x, j) in grid.iter().zip(&jets) {
        let m = f.jet(-x);
        let diff = (j.value - m.value)
            .abs()
            .max((j.d1 + m.d1).abs())
            .max((j.d2 - m.d2).abs());
        w.push(SYMMETRY_TOL - diff, x);
    }
    let ok = w.margin >= 0.0;
    checks.push(w.finish("even", ok));

    let mut w = Worst::new();
    for (&x, j) in grid.iter().zip(&jets) {
        w.push(j.value, x);
    }
    let ok = w.margin > 0.0;
    checks.push(w.finish("positive", ok));

    let mut w = Worst::new();
    for (&x, j) in grid.iter().zip(&jets).filter(|(x, _)| !inside(**x)) {
        let diff = (j.value - x.abs()).abs().max((j.d1 - x.signum()).abs());
        w.push(OUTSIDE_TOL * x.abs().max(1.0) - diff, x);
    }
    let ok = w.margin >= 0.0;
    checks.push(w.finish("abs_outside", ok));

    let mut w = Worst::new();
    let mut ok = true;
    for &x in grid.iter().filter(|x| inside(**x)) {
        let gap = f.slope_gap(x);
        w.push(gap, x);
        if !(gap > 0.0) {
            if gap == 0.0 && f.curvature_log(x).is_some_and(|(ln, _)| ln.is_finite()) {
                w.underflow += 1;
            } else {
                ok = false;
            }
        }
    }
    checks.push(w.finish("slope_below_one", ok));

    let mut w = Worst::new();
    let mut ok = true;
    for (&x, j) in grid.iter().zip(&jets).filter(|(x, _)| inside(**x)) {
        w.push(j.d2, x);
        if !(j.d2 > 0.0) {
            if j.d2 == 0.0 && f.curvature_log(x).is_some_and(|(ln, _)| ln.is_finite()) {
                w.underflow += 1;
            } else {
                ok = false;
            }
        }
    }
    checks.push(w.finish("convex", ok));

    if f.source() == DerivativeSource::Interpolated {
        checks.push(ConstraintCheck {
            name: "third_derivative_negative",
            status: CheckStatus::Rejected,
            worst_margin: f64::NAN,
            location: f64::NAN,
            underflow_points: 0,
        });
    } else {
        let mut w = Worst::new();
        let mut ok = true;
        for (&x, j) in grid
            .iter()
            .zip(&jets)
            .filter(|(x, _)| **x > 0.0 && **x < 1.0)
        {
            w.push(-j.d3, x);
            if !(j.d3 < 0.0) {
                let structural = f
                    .curvature_log(x)
                    .is_some_and(|(ln, ratio)| ln.is_finite() && ratio < 0.0);
                if j.d3 == 0.0 && structural {
                    w.underflow += 1;
                } else {
                    ok = false;
                }
            }
        }
        checks.push(w.finish("third_derivative_negative", ok));
    }

    let mut w = Worst::new();
    let mut ok = true;
    for &x in &grid {
        let e = f.excess(x);
        w.push(e, x);
        // strictly above |x| well inside, never below anywhere
        if e < 0.0 || (x.abs() <= 0.9 && !(e > 0.0)) {
            ok = false;
        }
    }
    checks.push(w.finish("above_abs", ok));

    let contact = flat_contact(f)?;
    let mut w = Worst::new();
    w.push(contact.slope - crate::warped_geometry::RATE_MARGIN, 1.0);
    checks.push(w.finish("flat_contact", contact.passed));

    Ok(NeckReport { grid_size, checks })
}

/// Rate fit of |f(1−t) − (1−t)|/t⁴ over dyadic t; passes when it decays.
pub fn flat_contact(f: &NeckProfile) -> Result<crate::warped_geometry::RateReport> {
    use crate::warped_geometry::{dyadic_radii, rate_check, RateClaim};
    let samples: Vec<(f64, f64)> = dyadic_radii(0.25, 8)
        .into_iter()
        .map(|t| (t, f.excess(1.0 - t).abs() / t.powi(4)))
        .collect();
    rate_check(&samples, RateClaim::Bounded)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaMargin {
    pub grid_size: usize,
    pub min_margin: f64,
    pub argmin: f64,
    /// Minimum over the grid points with x ≤ 0.9.
    pub interior_min: f64,
    pub at_half: f64,
    pub at_one: f64,
}

/// f″/f − ½|xf′/f − 1| − ½|x/f − 1| at x, from cancellation-free pieces.
pub fn lemma_margin_at(f: &NeckProfile, x: f64) -> f64 {
    let j = f.jet(x);
    let excess = f.excess(x);
    let gap = f.slope_gap(x);
    // x f′ − f = −(x·gap + excess) for 0 < x ≤ 1
    let first = (x * gap + excess).abs() / j.value;
    let second = excess.abs() / j.value;
    j.d2 / j.value - 0.5 * first - 0.5 * second
}

/// Minimum of the Lemma margin over a uniform grid on [1/2, 1].
pub fn property_of_f_check(f: &NeckProfile, grid_size: usize) -> Result<LemmaMargin> {
    if grid_size < 2 {
        return Err(Error::Domain("lemma grid needs at least 2 points".into()));
    }
    let grid = uniform_grid(0.5, 1.0, grid_size);
    let mut min_margin = f64::INFINITY;
    let mut argmin = f64::NAN;
    let mut interior_min = f64::INFINITY;
    for &x in &grid {
        let m = lemma_margin_at(f, x);
        if m < min_margin || argmin.is_nan() {
            min_margin = m;
            argmin = x;
        }
        if x <= 0.9 {
            interior_min = interior_min.min(m);
        }
    }
    Ok(LemmaMargin {
        grid_size,
        min_margin,
        argmin,
        interior_min,
        at_half: lemma_margin_at(f, 0.5),
        at_one: lemma_margin_at(f, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn normalization_and_boundary_values() {
        let f = build_neck_profile().unwrap();
        let one = f.jet(1.0);
        assert_eq!((one.value, one.d1), (1.0, 1.0));
        // approach from inside
        let near = f.jet(1.0 - 1e-9);
        assert!((near.value - (1.0 - 1e-9)).abs() < 1e-15);
        assert!((near.d1 - 1.0).abs() < 1e-15);
        assert_eq!(f.value(2.0), 2.0);
        assert_eq!(f.value(-2.0), 2.0);
    }

    #[test]
    fn center_value_matches_simpson_oracle() {
        // Oracle: f(0) = 1 − ∫₀¹ f′ with f′(t) = c ∫₀^t exp(−1/(1−s²)) ds, by
        // nested composite Simpson, with c from Simpson as well.
        let g = |s: f64| {
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        };
        let n = 4000;
        let c = 1.0 / simpson(g, 0.0, 1.0, n);
        let h = 1.0 / n as f64;
        // cumulative trapezoid-corrected integral of g on the grid
        let mut cum = vec![0.0; n + 1];
        for i in 0..n {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            cum[i + 1] = cum[i] + simpson(g, a, b, 8);
        }
        let slopes: Vec<f64> = cum.iter().map(|v| c * v).collect();
        let mut integral = slopes[0] + slopes[n];
        for (i, s) in slopes.iter().enumerate().take(n).skip(1) {
            integral += s * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        integral *= h / 3.0;
        let oracle = 1.0 - integral;
        let f = build_neck_profile().unwrap();
        assert!(
            (f.center_value() - oracle).abs() < 1e-9,
            "{} vs {}",
            f.center_value(),
            oracle
        );
        assert!(f.center_value() > 0.0 && f.center_value() < 1.0);
        assert!((f.normalization().unwrap() - c).abs() < 1e-9 * c);
    }

    #[test]
    fn derivatives_match_differences() {
        let f = build_neck_profile().unwrap();
        let h = 1e-4;
        for x in [-0.8, -0.3, 0.0, 0.2, 0.49, 0.51, 0.7, 0.95] {
            let j = f.jet(x);
            let fd1 = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            let fd2 = (f.jet(x + h).d1 - f.jet(x - h).d1) / (2.0 * h);
            let fd3 = (f.jet(x + h).d2 - f.jet(x - h).d2) / (2.0 * h);
            assert!((j.d1 - fd1).abs() < 1e-7, "f' at {x}");
            assert!((j.d2 - fd2).abs() < 1e-7, "f'' at {x}");
            assert!(
                (j.d3 - fd3).abs() < 1e-5 * j.d3.abs().max(1.0),
                "f''' at {x}"
            );
        }
    }

    #[test]
    fn canonical_passes_everything() {
        let f = build_neck_profile().unwrap();
        let report = validate_neck(&f, 4096).unwrap();
        for c in &report.checks {
            assert_eq!(c.status, CheckStatus::Pass, "{c:?}");
        }
        assert!(validate_neck(&f, 999).is_err());
    }

    #[test]
    fn negative_controls() {
        let h = NeckProfile::hyperbola(0.1).unwrap();
        let report = validate_neck(&h, 4096).unwrap();
        assert_eq!(
            report.check("abs_outside").unwrap().status,
            CheckStatus::Fail
        );
        assert_eq!(
            report.check("flat_contact").unwrap().status,
            CheckStatus::Fail
        );
        let s = NeckProfile::shoulder(20.0).unwrap();
        let report = validate_neck(&s, 4096).unwrap();
        assert_eq!(
            report.check("third_derivative_negative").unwrap().status,
            CheckStatus::Fail
        );
        assert_eq!(report.check("convex").unwrap().status, CheckStatus::Pass);
        let x = NeckProfile::xcothx();
        let report = validate_neck(&x, 4096).unwrap();
        assert_eq!(
            report.check("abs_outside").unwrap().status,
            CheckStatus::Fail
        );
    }

    #[test]
    fn sampled_neck_rejects_third_derivative() {
        let canonical = build_neck_profile().unwrap();
        let xs = uniform_grid(0.0, 2.0, 401);
        let fs: Vec<f64> = xs.iter().map(|&x| canonical.value(x)).collect();
        let s = NeckProfile::sampled(xs, fs).unwrap();
        let report = validate_neck(&s, 2000).unwrap();
        assert_eq!(
            report.check("third_derivative_negative").unwrap().status,
            CheckStatus::Rejected
        );
        assert!(!report.all_passed());
        assert!((s.value(0.3) - canonical.value(0.3)).abs() < 1e-6);
    }

    #[test]
    fn lemma_margin_nonnegative() {
        let f = build_neck_profile().unwrap();
        let m = property_of_f_check(&f, 4096).unwrap();
        assert!(m.min_margin >= -1e-12);
        assert_eq!(m.at_one, 0.0);
        assert!(m.interior_min > 0.0);
        assert!(m.at_half > 0.0);
    }

    #[test]
    fn cutoff_values() {
        let eta = build_cutoff();
        assert_eq!(eta.eval(0.0), 0.0);
        assert_eq!(eta.eval(1.0), 1.0);
        assert_eq!(eta.eval(-0.7), 1.0);
        let mid = eta.eval(0.5);
        assert!(mid > 0.0 && mid < 1.0);
        assert!((mid - 0.5).abs() < 1e-15);
        assert_eq!(eta.jet(1.0 / 3.0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn cutoff_derivatives_match_differences() {
        let eta = build_cutoff();
        let h = 1e-5;
        for x in [-0.6, -0.45, 0.36, 0.4, 0.5, 0.6, 0.65] {
            let [_, d1, d2] = eta.jet(x);
            let fd1 = (eta.eval(x + h) - eta.eval(x - h)) / (2.0 * h);
            let fd2 = (eta.jet(x + h)[1] - eta.jet(x - h)[1]) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-7, "eta' at {x}: {d1} vs {fd1}");
            assert!((d2 - fd2).abs() < 1e-5 * d2.abs().max(1.0), "eta'' at {x}");
        }
    }

    proptest! {
        #[test]
        fn neck_symmetric_and_bounded(x in -1.5f64..1.5) {
            let f = build_neck_profile().unwrap();
            let (a, b) = (f.jet(x), f.jet(-x));
            prop_assert_eq!(a.value, b.value);
            prop_assert_eq!(a.d1, -b.d1);
            prop_assert_eq!(a.d2, b.d2);
            prop_assert!(a.value >= x.abs());
            prop_assert!(a.d1.abs() <= 1.0);
            prop_assert!(f.excess(x) >= 0.0);
        }

        #[test]
        fn cutoff_in_unit_interval(x in -2.0f64..2.0) {
            let v = build_cutoff().eval(x);
            prop_assert!((0.0..=1.0).contains(&v));
            if x.abs() <= 1.0 / 3.0 { prop_assert_eq!(v, 0.0); }
            if x.abs() >= 2.0 / 3.0 { prop_assert_eq!(v, 1.0); }
        }
    }
}
