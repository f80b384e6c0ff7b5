//! One runner per experiment kind. Each fills a [`RunReport`] and writes its
//! CSV files into the output directory when one is given.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ricci_tunnel::green_radial::{
    green_asymptotics_check, green_solve, GreenSolution, ModelManifold,
};
use ricci_tunnel::neck_profile::{
    property_of_f_check, uniform_grid, validate_neck, CheckStatus, NeckProfile,
};
use ricci_tunnel::spectral::{
    eig_vs_defect_consistency, lambda1_radial, rayleigh_quotient, EndKind, SlDomain,
    SpectralResult, SturmLiouville,
};
use ricci_tunnel::tunnel::{
    assemble_tunnel, blend_asymptotics, blend_norms, r0_search, region_defect_scan,
    toy_identity_defect, toy_identity_fd_residual, Ambient, SearchOptions, TunnelAssembly,
    INTERFACE_TOL,
};
use ricci_tunnel::warped_geometry::{dyadic_radii, WarpProfile};
use ricci_tunnel::{Error, Params};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, TopologyChoice};
use crate::error::CliError;
use crate::report::{Check, RunReport};

pub const TOY_TOL: f64 = 1e-10;
pub const TOY_REFINEMENT_GAIN: f64 = 10.0;
pub const LEMMA_FLOOR: f64 = -1e-12;
pub const GREEN_RESIDUAL_TOL: f64 = 1e-8;
pub const FLUX_TOL: f64 = 1e-6;
pub const EUCLIDEAN_TOL: f64 = 1e-9;
pub const CURVATURE_ROUTE_TOL: f64 = 1e-10;
pub const MIXED_TOL: f64 = 1e-12;
pub const CERTIFICATE_SLACK: f64 = 1e-5;
pub const RAYLEIGH_SLACK: f64 = 1e-8;

struct Sink<'a> {
    dir: Option<&'a Path>,
    artifacts: Vec<String>,
}

impl Sink<'_> {
    fn write<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let Some(dir) = self.dir else { return Ok(()) };
        let path: PathBuf = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.artifacts.push(path.display().to_string());
        Ok(())
    }
}

/// Runs one experiment; report and CSV files go to `out` when given.
pub fn run(
    kind: ExperimentKind,
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<RunReport, CliError> {
    if let Some(k) = config.kind {
        if k != kind {
            return Err(CliError::Config(format!(
                "config is for '{}' but the command is '{}'",
                k.name(),
                kind.name()
            )));
        }
    }
    config.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let start = Instant::now();
    let mut report = RunReport::new(kind.name(), config.clone());
    let mut sink = Sink {
        dir: out,
        artifacts: Vec::new(),
    };
    match kind {
        ExperimentKind::ToyIdentity => toy_identity(config, &mut report, &mut sink)?,
        ExperimentKind::NeckCheck => neck_check(config, &mut report, &mut sink)?,
        ExperimentKind::GreenSolve => green(config, &mut report, &mut sink)?,
        ExperimentKind::TunnelBuild => tunnel_build(config, &mut report, &mut sink)?,
        ExperimentKind::DefectScan => defect_scan(config, &mut report, &mut sink)?,
        ExperimentKind::Lambda1 => lambda1(config, &mut report, &mut sink)?,
        ExperimentKind::ThresholdScan => threshold_scan(config, &mut report, &mut sink)?,
        ExperimentKind::Asymptotics => asymptotics(config, &mut report, &mut sink)?,
    }
    report.artifacts = sink.artifacts;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    if let Some(dir) = out {
        let path = dir.join("report.json");
        report.artifacts.push(path.display().to_string());
        report.save(&path)?;
    }
    Ok(report)
}

fn neck(config: &ExperimentConfig) -> Result<NeckProfile, CliError> {
    Ok(config.resolved_specs()?.1.build()?)
}

fn warps(config: &ExperimentConfig) -> Result<(WarpProfile, WarpProfile), CliError> {
    let (spec, _) = config.resolved_specs()?;
    let first = spec.build()?;
    let second = match &config.model.second {
        Some(s) => s.build()?,
        None => first.clone(),
    };
    Ok((first, second))
}

fn ambient(config: &ExperimentConfig, params: Params) -> Result<Ambient, CliError> {
    let (w1, w2) = warps(config)?;
    let bp = &config.model.basepoints;
    let amb = match config.model.topology {
        TopologyChoice::Handle => {
            Ambient::handle(green_solve(&ModelManifold::new(params, w1, bp.clone())?)?)?
        }
        _ => {
            let second_bp = if config.model.second.is_some() {
                w2.poles()[0]
            } else {
                bp[0]
            };
            let a = green_solve(&ModelManifold::new(params, w1, vec![bp[0]])?)?;
            let b = green_solve(&ModelManifold::new(params, w2, vec![second_bp])?)?;
            Ambient::connected_sum(a, b)?
        }
    };
    Ok(amb)
}

fn green_solutions(amb: &Ambient) -> Vec<&GreenSolution> {
    match amb {
        Ambient::ConnectedSum(s) => vec![&*s[0], &*s[1]],
        Ambient::Handle(s) => vec![&**s],
    }
}

fn search_options(config: &ExperimentConfig) -> SearchOptions {
    SearchOptions {
        grid_size: config.numerics.scan_grid,
        min_r0: config.numerics.r0_min,
        bisection_steps: config.numerics.bisection_steps,
    }
}

#[derive(Serialize)]
struct ToyRow {
    x: f64,
    f: f64,
    u: f64,
    residual: f64,
    fd_residual: f64,
    fd_residual_refined: f64,
}

fn toy_identity(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let f = neck(config)?;
    let n = config.params.n;
    let grid = uniform_grid(-2.0, 2.0, config.numerics.grid);
    let h = 4.0 / (config.numerics.grid - 1) as f64;
    let rows: Vec<ToyRow> = grid
        .par_iter()
        .map(|&x| {
            let u = f.value(x).powf(2.0 - n as f64);
            Ok(ToyRow {
                x,
                f: f.value(x),
                u,
                residual: toy_identity_defect(&f, n, x)? / u,
                fd_residual: toy_identity_fd_residual(&f, n, x, h)?,
                fd_residual_refined: toy_identity_fd_residual(&f, n, x, h / 4.0)?,
            })
        })
        .collect::<Result<_, Error>>()?;
    let worst = |g: fn(&ToyRow) -> f64| rows.iter().map(|r| g(r).abs()).fold(0.0f64, f64::max);
    let residual = worst(|r| r.residual);
    let (coarse, fine) = (worst(|r| r.fd_residual), worst(|r| r.fd_residual_refined));
    report.set("max_relative_residual", residual);
    report.set("fd_residual", coarse);
    report.set("fd_residual_refined", fine);
    report.push(Check::at_most("toy_identity_residual", residual, TOY_TOL));
    report.push(Check::at_least(
        "fd_refinement_gain",
        coarse / fine,
        TOY_REFINEMENT_GAIN,
    ));
    sink.write("toy_identity.csv", &rows)
}

#[derive(Serialize)]
struct NeckRow {
    x: f64,
    f: f64,
    df: f64,
    ddf: f64,
    dddf: f64,
    excess: f64,
}

fn neck_check(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let f = neck(config)?;
    let grid = config.numerics.grid;
    let rep = validate_neck(&f, grid)?;
    for c in &rep.checks {
        let check = Check {
            name: c.name.to_string(),
            passed: c.status == CheckStatus::Pass,
            value: c.worst_margin,
            threshold: 0.0,
            margin: c.worst_margin,
            note: Some(format!("{:?} at x = {}", c.status, c.location)),
        };
        report.push(check);
    }
    let lemma = property_of_f_check(&f, grid)?;
    report.set("lemma_min_margin", lemma.min_margin);
    report.set("lemma_argmin", lemma.argmin);
    report.set("lemma_interior_min", lemma.interior_min);
    report.push(Check::at_least(
        "lemma_margin",
        lemma.min_margin,
        LEMMA_FLOOR,
    ));
    let rows: Vec<NeckRow> = uniform_grid(-2.0, 2.0, grid)
        .into_iter()
        .map(|x| {
            let j = f.jet(x);
            NeckRow {
                x,
                f: j.value,
                df: j.d1,
                ddf: j.d2,
                dddf: j.d3,
                excess: f.excess(x),
            }
        })
        .collect();
    sink.write("neck.csv", &rows)
}

#[derive(Serialize)]
struct GreenCsvRow {
    r: f64,
    u: f64,
    w: f64,
    dw: f64,
    ddw: f64,
}

/// Interior sample points of the model's domain (noncompact ends cut at 10).
fn domain_grid(w: &WarpProfile, points: usize) -> Vec<f64> {
    let (a, b) = w.domain().bounds();
    let b = if b.is_finite() { b } else { a + 10.0 };
    (0..points)
        .map(|i| a + (b - a) * (i as f64 + 0.5) / points as f64)
        .collect()
}

fn green(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let (warp, _) = warps(config)?;
    let model = ModelManifold::new(config.params, warp.clone(), config.model.basepoints.clone())?;
    let sol = green_solve(&model)?;
    report.set("b", sol.b());
    report.set("residual", sol.residual());
    report.set("bound_constant", sol.bound_constant());
    if let Some(l) = sol.lambda1() {
        report.set("lambda1", l);
    }
    report.push(Check::at_most(
        "ode_residual",
        sol.residual(),
        GREEN_RESIDUAL_TOL,
    ));
    for &bp in model.basepoints() {
        let flux = sol.flux(bp, 1e-4)?;
        report.set(&format!("flux@{bp}"), flux);
        report.push(Check::at_most(
            format!("unit_mass@{bp}"),
            (flux - 1.0).abs(),
            FLUX_TOL,
        ));
    }
    if sol.r_inner() <= 1e-4 {
        for a in green_asymptotics_check(&sol)? {
            for (label, r) in [
                ("value", &a.value),
                ("slope", &a.slope),
                ("curvature", &a.curvature),
            ] {
                report.set(&format!("w_{label}_rate@{}", a.basepoint), r.slope);
                report.push(Check::flag(
                    format!("w_{label}_rate@{}", a.basepoint),
                    r.passed,
                ));
            }
        }
    }
    let grid = domain_grid(&warp, config.numerics.grid);
    let rows = sol.table(&grid)?;
    let euclidean = matches!(
        config.resolved_specs()?.0,
        ricci_tunnel::profile_file::WarpSpec::Euclidean {}
    );
    if euclidean && config.params.green_shift() == 0.0 {
        let n = config.params.n as f64;
        let worst = rows
            .iter()
            .map(|row| {
                (row.u / (sol.b() * row.r.powf(2.0 - n)) - 1.0)
                    .abs()
                    .max((row.w - 1.0).abs())
            })
            .fold(0.0f64, f64::max);
        report.set("euclidean_deviation", worst);
        report.push(Check::at_most("euclidean_exactness", worst, EUCLIDEAN_TOL));
    }
    let rows: Vec<GreenCsvRow> = rows
        .iter()
        .map(|r| GreenCsvRow {
            r: r.r,
            u: r.u,
            w: r.w,
            dw: r.dw,
            ddw: r.ddw,
        })
        .collect();
    sink.write("green.csv", &rows)
}

/// Smallest of RQ(ψ) − λ₁ over seeded random smooth test functions
/// compatible with the boundary conditions of `op`.
pub fn random_rayleigh_gap(
    op: &SturmLiouville,
    lambda1: f64,
    count: usize,
    seed: u64,
) -> Result<f64, CliError> {
    const MODES: usize = 6;
    let (a, b) = op.bounds();
    let len = b - a;
    // frequency and phase per mode index
    let basis: Box<dyn Fn(usize) -> (f64, f64) + Sync> = match op.domain {
        SlDomain::Circle { .. } => Box::new(move |k| {
            (
                2.0 * PI * k.div_ceil(2) as f64 / len,
                if k % 2 == 0 { 0.0 } else { -0.5 * PI },
            )
        }),
        SlDomain::Interval {
            start_kind,
            end_kind,
            ..
        } => {
            let (shift, phase) = match (start_kind, end_kind) {
                (EndKind::Pole, EndKind::Pole) => (0.0, 0.0),
                (EndKind::Dirichlet, EndKind::Dirichlet) => (1.0, -0.5 * PI),
                (EndKind::Pole, EndKind::Dirichlet) => (0.5, 0.0),
                (EndKind::Dirichlet, EndKind::Pole) => (0.5, -0.5 * PI),
            };
            Box::new(move |k| (PI * (k as f64 + shift) / len, phase))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefs: Vec<[f64; MODES]> = (0..count)
        .map(|_| {
            let mut c = [0.0; MODES];
            for (k, ck) in c.iter_mut().enumerate() {
                *ck = rng.gen_range(-1.0..1.0) / (1.0 + k as f64).powi(2);
            }
            c
        })
        .collect();
    let gaps: Vec<f64> = coefs
        .par_iter()
        .map(|c| {
            let test = |r: f64| {
                let mut psi = 0.0;
                let mut dpsi = 0.0;
                for (k, ck) in c.iter().enumerate() {
                    let (w, ph) = basis(k);
                    psi += ck * (w * (r - a) + ph).cos();
                    dpsi -= ck * w * (w * (r - a) + ph).sin();
                }
                (psi, dpsi)
            };
            rayleigh_quotient(op, &test, None).map(|q| q - lambda1)
        })
        .collect::<Result<_, Error>>()?;
    Ok(gaps.into_iter().fold(f64::INFINITY, f64::min))
}

fn spectral_checks(
    config: &ExperimentConfig,
    op: &SturmLiouville,
    res: &SpectralResult,
    report: &mut RunReport,
) -> Result<(), CliError> {
    report.set("lambda1", res.lambda1);
    report.set("lambda1_extrapolated", res.extrapolated);
    report.set("fiber_mode_gap", res.fiber_mode_gap);
    report.set("ground_state_ratio", res.ground_state_ratio);
    report.push(Check::at_least("fiber_mode_gap", res.fiber_mode_gap, 0.0));
    report.push(Check::flag(
        "ground_state_positive",
        res.ground_state_ratio > 0.0,
    ));
    if config.numerics.random_tests > 0 {
        let gap = random_rayleigh_gap(op, res.lambda1, config.numerics.random_tests, config.seed)?;
        report.set("rayleigh_min_gap", gap);
        report.push(Check::at_least(
            "rayleigh_upper_bound",
            gap,
            -RAYLEIGH_SLACK,
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct SearchRow {
    r0: f64,
    admissible: bool,
    min_defect: f64,
    stage: &'static str,
}

#[derive(Serialize)]
struct TunnelDefectRow {
    r: f64,
    defect: f64,
    region: &'static str,
}

/// Neck radius from the config, or from the search; `None` when the search
/// finds nothing (recorded as a failed check).
fn choose_r0(
    config: &ExperimentConfig,
    amb: &Ambient,
    f: &NeckProfile,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<Option<f64>, CliError> {
    report.set("r0_max", amb.max_r0());
    if let Some(r0) = config.numerics.r0 {
        report.set("r0", r0);
        return Ok(Some(r0));
    }
    match r0_search(amb, f, &search_options(config)) {
        Ok(s) => {
            let mut rows: Vec<SearchRow> = s
                .grid
                .iter()
                .map(|c| SearchRow {
                    r0: c.r0,
                    admissible: c.admissible,
                    min_defect: c.min_defect,
                    stage: "grid",
                })
                .collect();
            rows.extend(s.bisection.iter().map(|c| SearchRow {
                r0: c.r0,
                admissible: c.admissible,
                min_defect: c.min_defect,
                stage: "bisection",
            }));
            sink.write("r0_search.csv", &rows)?;
            report.set("r0", s.r0_star);
            report.push(Check::at_least(
                "r0_star_positive",
                s.r0_star,
                f64::MIN_POSITIVE,
            ));
            Ok(Some(s.r0_star))
        }
        Err(Error::NotAdmissible {
            smallest_tested,
            tested,
        }) => {
            report.push(Check::flag("r0_star_positive", false).with_note(format!(
                "no admissible r0 among {tested} candidates down to {smallest_tested}"
            )));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn tunnel_checks(
    config: &ExperimentConfig,
    amb: &Ambient,
    asm: &TunnelAssembly,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let residual = green_solutions(amb)
        .iter()
        .map(|s| s.residual())
        .fold(0.0f64, f64::max);
    report.set("green_residual", residual);
    report.push(Check::at_most(
        "ambient_green_residual",
        residual,
        GREEN_RESIDUAL_TOL,
    ));
    report.set("interface_mismatch", asm.interface().max);
    report.push(Check::at_most(
        "interface_matching",
        asm.interface().max,
        INTERFACE_TOL,
    ));
    let scan = region_defect_scan(asm, config.numerics.scan_grid)?;
    report.set("region_i_min_defect", scan.region_i.min_defect);
    report.set("region_ii_min_defect", scan.region_ii.min_defect);
    report.set("region_i_min_relative", scan.region_i.min_relative);
    report.set("region_ii_min_relative", scan.region_ii.min_relative);
    report.set("coefficient_min", scan.structural.coefficient_min);
    report.set("slope_mismatch", scan.structural.slope_mismatch);
    report.set("radius_mismatch", scan.structural.radius_mismatch);
    report.set("curvature_route_gap", scan.curvature_agreement);
    report.set("mixed_max", scan.mixed_max);
    report.push(Check::at_least(
        "tunnel_defect_nonnegative",
        scan.tunnel_min,
        0.0,
    ));
    report.push(Check::at_most(
        "curvature_two_route",
        scan.curvature_agreement,
        CURVATURE_ROUTE_TOL,
    ));
    report.push(Check::at_most("mixed_ricci", scan.mixed_max, MIXED_TOL));
    let rows: Vec<TunnelDefectRow> = scan
        .profile
        .r
        .iter()
        .zip(&scan.profile.defect)
        .map(|(&r, &d)| TunnelDefectRow {
            r,
            defect: d,
            region: asm.region(r).label(),
        })
        .collect();
    sink.write("tunnel_defect.csv", &rows)?;
    Ok(())
}

fn assembled_spectrum(
    config: &ExperimentConfig,
    asm: Arc<TunnelAssembly>,
    report: &mut RunReport,
    sink: &mut Sink,
    defect_min: Option<f64>,
) -> Result<(), CliError> {
    let p = config.params;
    if let Some(domain) = asm.composite_domain() {
        let op = asm.assembled_operator()?;
        let res = lambda1_radial(&op, config.numerics.cells)?;
        spectral_checks(config, &op, &res, report)?;
        report.push(Check::at_least(
            "lambda1_certificate",
            res.lambda1,
            p.target() - CERTIFICATE_SLACK,
        ));
        if let Some(d) = defect_min {
            report.push(Check::flag(
                "defect_eigen_consistency",
                eig_vs_defect_consistency(d, res.lambda1, p.lambda, p.epsilon),
            ));
        }
        let (a, b) = match domain {
            SlDomain::Interval { start, end, .. } => (start, end),
            SlDomain::Circle { start, period } => (start, start + period),
        };
        let m = config.numerics.grid;
        let grid: Vec<f64> = (0..m)
            .map(|i| a + (b - a) * (i as f64 + 0.5) / m as f64)
            .collect();
        sink.write("assembly.csv", &asm.table(&grid)?)?;
    } else {
        report.notes.push(
            "noncompact assembly: certified by the defect only, no eigenvalue computed".into(),
        );
        let m = config.numerics.grid;
        let grid: Vec<f64> = (0..m)
            .map(|i| -10.0 + 20.0 * (i as f64 + 0.5) / m as f64)
            .collect();
        sink.write("assembly.csv", &asm.table(&grid)?)?;
    }
    Ok(())
}

fn tunnel_build(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    if config.model.topology == TopologyChoice::None {
        return Err(CliError::Config(
            "tunnel-build needs model.topology = connected-sum or handle".into(),
        ));
    }
    let f = neck(config)?;
    let amb = ambient(config, config.params)?;
    let Some(r0) = choose_r0(config, &amb, &f, report, sink)? else {
        return Ok(());
    };
    let asm = Arc::new(assemble_tunnel(&amb, r0, &f)?);
    tunnel_checks(config, &amb, &asm, report, sink)?;
    let d = report
        .scalar("region_i_min_defect")
        .unwrap_or(f64::NAN)
        .min(report.scalar("region_ii_min_defect").unwrap_or(f64::NAN));
    assembled_spectrum(config, asm, report, sink, Some(d))
}

#[derive(Serialize)]
struct DefectScanRow {
    r0: f64,
    admissible: bool,
    region_i_min: f64,
    region_ii_min: f64,
    center_defect: f64,
    coefficient_min: f64,
}

fn defect_scan(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    if config.model.topology == TopologyChoice::None {
        return Err(CliError::Config(
            "defect-scan needs model.topology = connected-sum or handle".into(),
        ));
    }
    let f = neck(config)?;
    let p = config.params;
    let amb = ambient(config, p)?;
    let radii = match config.numerics.r0 {
        Some(r0) => vec![r0],
        None => {
            let max = amb.max_r0();
            let levels = ((max / config.numerics.r0_min).log2().floor() as usize + 1).max(1);
            dyadic_radii(max, levels)
        }
    };
    let rows: Vec<(DefectScanRow, f64, f64)> = radii
        .par_iter()
        .map(|&r0| {
            let asm = assemble_tunnel(&amb, r0, &f)?;
            let scan = region_defect_scan(&asm, config.numerics.scan_grid)?;
            let c = asm.defect_point(0.0)?;
            let center = -p.gamma * c.laplacian + c.ric_min * c.u - p.target() * c.u;
            Ok((
                DefectScanRow {
                    r0,
                    admissible: scan.nonnegative(),
                    region_i_min: scan.region_i.min_defect,
                    region_ii_min: scan.region_ii.min_defect,
                    center_defect: center,
                    coefficient_min: scan.structural.coefficient_min,
                },
                scan.curvature_agreement,
                scan.mixed_max,
            ))
        })
        .collect::<Result<_, Error>>()?;
    let levels = rows.len() as f64;
    let negative_centers = rows.iter().filter(|r| r.0.center_defect < 0.0).count() as f64;
    let route = rows.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let mixed = rows.iter().map(|r| r.2).fold(0.0f64, f64::max);
    report.set("levels", levels);
    report.set("smallest_r0", *radii.last().expect("nonempty"));
    report.set("negative_center_count", negative_centers);
    report.set("curvature_route_gap", route);
    report.set("mixed_max", mixed);
    if let Some(best) = rows.iter().find(|r| r.0.admissible) {
        report.set("largest_admissible_r0", best.0.r0);
    }
    report.push(Check::flag(
        "admissible_r0_found",
        rows.iter().any(|r| r.0.admissible),
    ));
    report.push(Check::at_most(
        "curvature_two_route",
        route,
        CURVATURE_ROUTE_TOL,
    ));
    report.push(Check::at_most("mixed_ricci", mixed, MIXED_TOL));
    let rows: Vec<DefectScanRow> = rows.into_iter().map(|r| r.0).collect();
    sink.write("defect_scan.csv", &rows)
}

fn lambda1(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    if config.model.topology == TopologyChoice::None {
        let (warp, _) = warps(config)?;
        let op = SturmLiouville::from_warp(&warp, config.params.n, config.params.gamma)?;
        let res = lambda1_radial(&op, config.numerics.cells)?;
        return spectral_checks(config, &op, &res, report);
    }
    let f = neck(config)?;
    let amb = ambient(config, config.params)?;
    let Some(r0) = choose_r0(config, &amb, &f, report, sink)? else {
        return Ok(());
    };
    let asm = Arc::new(assemble_tunnel(&amb, r0, &f)?);
    assembled_spectrum(config, asm, report, sink, None)
}

#[derive(Serialize)]
struct ThresholdRow {
    gamma: f64,
    admissible: bool,
    r0_star: f64,
}

fn threshold_scan(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("threshold-scan needs a [sweep] table".into()))?;
    if config.model.topology == TopologyChoice::None {
        return Err(CliError::Config(
            "threshold-scan needs model.topology = connected-sum or handle".into(),
        ));
    }
    let f = neck(config)?;
    let opts = search_options(config);
    let mut rows: Vec<ThresholdRow> = sweep
        .gammas()
        .par_iter()
        .map(|&gamma| {
            let amb = ambient(config, config.params.with_gamma(gamma))?;
            Ok(match r0_search(&amb, &f, &opts) {
                Ok(s) => ThresholdRow {
                    gamma,
                    admissible: true,
                    r0_star: s.r0_star,
                },
                Err(Error::NotAdmissible { .. }) => ThresholdRow {
                    gamma,
                    admissible: false,
                    r0_star: 0.0,
                },
                Err(e) => return Err(CliError::from(e)),
            })
        })
        .collect::<Result<_, CliError>>()?;
    rows.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let critical = config.params.critical_gamma();
    report.set("critical_gamma", critical);
    // γ̂: the smallest sweep value from which every larger value is admissible
    let tail = rows.iter().rev().take_while(|r| r.admissible).count();
    let flip = rows.len() - tail;
    let found = tail > 0 && flip > 0;
    if found {
        report.set("gamma_hat", rows[flip].gamma);
        report.set("gamma_hat_lower", rows[flip - 1].gamma);
    }
    report.push(Check::flag("admissibility_flip_found", found));
    let sub_ok = rows
        .iter()
        .filter(|r| r.gamma <= critical)
        .all(|r| !r.admissible);
    report.push(Check::flag("subcritical_not_admissible", sub_ok));
    if found {
        report.push(Check::at_least(
            "gamma_hat_above_critical",
            rows[flip].gamma - critical,
            f64::MIN_POSITIVE,
        ));
    }
    sink.write("threshold_scan.csv", &rows)
}

#[derive(Serialize)]
struct BlendRow {
    r0: f64,
    beta_minus_one: f64,
    beta_r: f64,
    beta_rr: f64,
    wtilde_minus_one: f64,
    wtilde_r: f64,
    wtilde_rr: f64,
}

#[derive(Serialize)]
struct RateRow {
    quantity: String,
    r: f64,
    value: f64,
}

fn asymptotics(
    config: &ExperimentConfig,
    report: &mut RunReport,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let (warp, _) = warps(config)?;
    let p = config.params;
    let bps = if config.model.topology == TopologyChoice::Handle {
        config.model.basepoints.clone()
    } else {
        vec![config.model.basepoints[0]]
    };
    let sol = green_solve(&ModelManifold::new(p, warp.clone(), bps)?)?;
    let mut rate_rows = Vec::new();
    for a in green_asymptotics_check(&sol)? {
        for (label, r) in [
            ("w_value", &a.value),
            ("w_slope", &a.slope),
            ("w_curvature", &a.curvature),
        ] {
            let key = format!("{label}_rate@{}", a.basepoint);
            report.set(&key, r.slope);
            report.push(Check::flag(key.clone(), r.passed));
            rate_rows.extend(r.samples.iter().map(|&(r, v)| RateRow {
                quantity: key.clone(),
                r,
                value: v,
            }));
        }
    }
    // the blends need r₀ ≤ 0.1·min{1, d, ε}; ε = 1 admits r₀ = 2⁻⁴
    let blend_params = Params { epsilon: 1.0, ..p };
    let amb = ambient(config, blend_params)?;
    report
        .notes
        .push("blend rates use epsilon = 1 so that r0 = 2^-4 is admissible".into());
    let radii: Vec<f64> = config
        .numerics
        .blend_levels
        .iter()
        .map(|&k| 0.5f64.powi(k))
        .collect();
    let names = [
        "beta_value",
        "beta_slope",
        "beta_curvature",
        "wtilde_value",
        "wtilde_slope",
        "wtilde_curvature",
    ];
    for (name, r) in names.iter().zip(blend_asymptotics(&amb, &radii)?) {
        let key = format!("{name}_rate");
        report.set(&key, r.slope);
        report.push(Check::flag(key.clone(), r.passed));
        rate_rows.extend(r.samples.iter().map(|&(r, v)| RateRow {
            quantity: key.clone(),
            r,
            value: v,
        }));
    }
    let blend_rows: Vec<BlendRow> = radii
        .iter()
        .map(|&r0| {
            let b = blend_norms(&amb, r0, 401)?;
            Ok(BlendRow {
                r0,
                beta_minus_one: b.beta[0],
                beta_r: b.beta[1],
                beta_rr: b.beta[2],
                wtilde_minus_one: b.wtilde[0],
                wtilde_r: b.wtilde[1],
                wtilde_rr: b.wtilde[2],
            })
        })
        .collect::<Result<_, Error>>()?;
    sink.write("blend_norms.csv", &blend_rows)?;
    sink.write("rates.csv", &rate_rows)
}
