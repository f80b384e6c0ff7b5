//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the summary is printed on success too.

use std::process::ExitCode;

use ricci_tunnel::green_radial::{green_asymptotics_check, green_solve, ModelManifold};
use ricci_tunnel::neck_profile::{build_neck_profile, property_of_f_check, validate_neck};
use ricci_tunnel::tunnel::{assemble_tunnel, r0_search, Ambient, SearchOptions};
use ricci_tunnel::warped_geometry::{ricci_radial, ricci_tangential, WarpProfile};
use ricci_tunnel::{Error, Params};
use ricci_tunnel_cli::config::ExperimentConfig;
use ricci_tunnel_cli::{run, ExperimentKind, RunReport};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

type Criterion = fn() -> Result<Outcome, Box<dyn std::error::Error>>;

fn preset_run(kind: ExperimentKind, preset: &str) -> Result<RunReport, Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::preset(preset)?;
    cfg.kind = Some(kind);
    Ok(run(kind, &cfg, None)?)
}

fn scalar(r: &RunReport, key: &str) -> f64 {
    r.scalar(key).unwrap_or(f64::NAN)
}

fn toy_identity() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [3usize, 4, 5] {
        let mut cfg = ExperimentConfig::preset("toy")?;
        cfg.params.n = n;
        let r = run(ExperimentKind::ToyIdentity, &cfg, None)?;
        let res = scalar(&r, "max_relative_residual");
        let gain = scalar(&r, "fd_residual") / scalar(&r, "fd_residual_refined");
        ok &= res <= 1e-10 && gain >= 10.0;
        parts.push(format!(
            "n={n}: residual {res:.2e}, 4x refinement gain {gain:.1}"
        ));
    }
    Ok(outcome(ok, parts.join("; ")))
}

fn space_forms() -> Result<Outcome, Box<dyn std::error::Error>> {
    let cases = [
        (WarpProfile::euclidean(), 0.0, 10.0),
        (WarpProfile::sphere(), 1.0, std::f64::consts::PI),
        (WarpProfile::hyperbolic(), -1.0, 10.0),
    ];
    let mut worst: f64 = 0.0;
    for n in [3usize, 4, 5] {
        for (w, k, top) in &cases {
            let expected = k * (n as f64 - 1.0);
            for i in 0..1000 {
                let r = top * (i as f64 + 0.5) / 1000.0;
                for v in [ricci_radial(w, n, r)?, ricci_tangential(w, n, r)?] {
                    worst = worst.max((v - expected).abs() / expected.abs().max(1.0));
                }
            }
        }
    }
    Ok(outcome(
        worst <= 1e-12,
        format!("max relative deviation {worst:.2e} over 1000 points, n = 3, 4, 5"),
    ))
}

fn neck() -> Result<Outcome, Box<dyn std::error::Error>> {
    let f = build_neck_profile()?;
    let rep = validate_neck(&f, 4096)?;
    let lemma = property_of_f_check(&f, 4096)?;
    let ok = rep.all_passed()
        && lemma.min_margin >= -1e-12
        && lemma.argmin > 0.99
        && lemma.interior_min > 0.0;
    Ok(outcome(
        ok,
        format!(
            "{} constraints pass: {}; lemma margin min {:.2e} at x = {:.4}, min over x <= 0.9 is {:.3e}",
            rep.checks.len(),
            rep.all_passed(),
            lemma.min_margin,
            lemma.argmin,
            lemma.interior_min
        ),
    ))
}

fn green() -> Result<Outcome, Box<dyn std::error::Error>> {
    let e = preset_run(ExperimentKind::GreenSolve, "euclidean")?;
    let dev = scalar(&e, "euclidean_deviation");
    let flux = (scalar(&e, "flux@0") - 1.0).abs();
    let params = Params::new(3, 3.0, 2.0, 0.2)?;
    let sol = green_solve(&ModelManifold::new(
        params,
        WarpProfile::sphere(),
        vec![0.0],
    )?)?;
    let sphere_flux = (sol.flux(0.0, 1e-4)? - 1.0).abs();
    let rates = green_asymptotics_check(&sol)?;
    let levels = rates
        .iter()
        .map(|a| a.value.samples.len())
        .min()
        .unwrap_or(0);
    let rates_ok = rates.iter().all(|a| a.passed());
    let ok = dev <= 1e-9 && flux <= 1e-6 && sphere_flux <= 1e-6 && rates_ok && levels >= 6;
    Ok(outcome(
        ok,
        format!(
            "euclidean deviation {dev:.2e}; unit mass error {:.2e}; sphere rates pass: {rates_ok} over {levels} dyadic radii",
            flux.max(sphere_flux)
        ),
    ))
}

fn dumbbell() -> Result<Outcome, Box<dyn std::error::Error>> {
    let r = preset_run(ExperimentKind::TunnelBuild, "dumbbell")?;
    let r0 = scalar(&r, "r0");
    let defect = scalar(&r, "region_i_min_defect").min(scalar(&r, "region_ii_min_defect"));
    let iface = scalar(&r, "interface_mismatch");
    let l1 = scalar(&r, "lambda1");
    let ok = r0 > 0.0 && defect >= 0.0 && iface <= 1e-8 && l1 >= 1.8 - 1e-5 && r.passed();
    Ok(outcome(
        ok,
        format!(
            "r0* = {r0:.4e}, min defect {defect:.3e}, interface {iface:.2e}, lambda1 = {l1:.8}"
        ),
    ))
}

fn handle() -> Result<Outcome, Box<dyn std::error::Error>> {
    let r = preset_run(ExperimentKind::TunnelBuild, "handle")?;
    let l1 = scalar(&r, "lambda1");
    let bound = 2.0 - 0.2 - 1e-5;
    let ok = l1 >= bound && bound > 0.0 && r.passed();
    Ok(outcome(
        ok,
        format!(
            "S2 x S1 model: lambda1 = {l1:.8} >= {bound}, r0 = {:.4e}",
            scalar(&r, "r0")
        ),
    ))
}

fn sharpness() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut low = ExperimentConfig::preset("dumbbell")?;
    low.params.gamma = 1.9;
    low.numerics.scan_grid = 801;
    low.kind = Some(ExperimentKind::DefectScan);
    let scan = run(ExperimentKind::DefectScan, &low, None)?;
    let all_negative = scalar(&scan, "negative_center_count") == scalar(&scan, "levels");
    let smallest = scalar(&scan, "smallest_r0");
    let f = build_neck_profile()?;
    let ambient = |gamma: f64| -> Result<Ambient, Error> {
        let p = Params::new(3, gamma, 2.0, 0.2)?;
        let sol = || green_solve(&ModelManifold::new(p, WarpProfile::sphere(), vec![0.0])?);
        Ambient::connected_sum(sol()?, sol()?)
    };
    let opts = SearchOptions::default();
    let low_search = matches!(
        r0_search(&ambient(1.9)?, &f, &opts),
        Err(Error::NotAdmissible { .. })
    );
    let high = r0_search(&ambient(2.5)?, &f, &opts)?;
    let high_ok = assemble_tunnel(&ambient(2.5)?, high.r0_star, &f).is_ok();
    let sweep = preset_run(ExperimentKind::ThresholdScan, "sharpness")?;
    let hat = scalar(&sweep, "gamma_hat");
    let ok = all_negative && smallest < 2e-4 && low_search && high_ok && hat > 2.0 && hat <= 2.5;
    Ok(outcome(
        ok,
        format!(
            "gamma 1.9: center defect negative at all {} radii down to {smallest:.2e}, search not admissible: {low_search}; gamma 2.5: r0* = {:.3e}; sweep gamma_hat = {hat}",
            scalar(&scan, "levels"),
            high.r0_star
        ),
    ))
}

fn blends() -> Result<Outcome, Box<dyn std::error::Error>> {
    let r = preset_run(ExperimentKind::Asymptotics, "sphere")?;
    let names = [
        "beta_value",
        "beta_slope",
        "beta_curvature",
        "wtilde_value",
        "wtilde_slope",
        "wtilde_curvature",
    ];
    let ok = names
        .iter()
        .all(|n| r.check(&format!("{n}_rate")).is_some_and(|c| c.passed));
    let slopes: Vec<String> = names
        .iter()
        .map(|n| format!("{n} {:.3}", scalar(&r, &format!("{n}_rate"))))
        .collect();
    Ok(outcome(
        ok,
        format!("r0 = 2^-4..2^-10, fitted slopes: {}", slopes.join(", ")),
    ))
}

fn structural() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, preset) in [
        (ExperimentKind::Lambda1, "sphere"),
        (ExperimentKind::TunnelBuild, "dumbbell"),
        (ExperimentKind::TunnelBuild, "handle"),
    ] {
        let r = preset_run(kind, preset)?;
        let gap = scalar(&r, "fiber_mode_gap");
        let rq = scalar(&r, "rayleigh_min_gap");
        ok &= gap >= 0.0 && rq >= -1e-8 && r.config.numerics.random_tests >= 100;
        let mut line = format!("{preset}: fiber gap {gap:.3}, min RQ - lambda1 {rq:.3e}");
        if kind == ExperimentKind::TunnelBuild {
            let route = scalar(&r, "curvature_route_gap");
            let mixed = scalar(&r, "mixed_max");
            ok &= route <= 1e-10 && mixed <= 1e-12;
            line.push_str(&format!(", two-route {route:.1e}, mixed {mixed:.1e}"));
        }
        parts.push(line);
    }
    Ok(outcome(ok, parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("toy identity", toy_identity),
        ("space-form exactness", space_forms),
        ("neck admissibility", neck),
        ("green solver exactness", green),
        ("dumbbell pipeline", dumbbell),
        ("handle pipeline", handle),
        ("sharpness negative control", sharpness),
        ("blend asymptotics", blends),
        ("structural cross-checks", structural),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(o) => (if o.passed { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("acceptance {}: {tag} {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
