mod common;

use ingrowth::optimize::report::{write_fields, write_summary};
use ingrowth::optimize::{compare, optimize, run_uniform_baseline, uniform_thickness, Outcome, ProblemConfig, Termination};
use ingrowth::vtk;

fn small() -> ProblemConfig {
    let mut cfg = common::small([15.0, 0.0, -200.0], 10.0);
    cfg.optimizer.max_iterations = 8;
    cfg
}

fn run(cfg: &ProblemConfig) -> Outcome {
    let p = cfg.build().unwrap();
    optimize(&p, &mut |_| Ok(())).unwrap()
}

fn config_error(cfg: &ProblemConfig) -> String {
    let err = cfg.build().err().expect("config should be rejected");
    assert!(err.is_config(), "{err}");
    err.to_string()
}

#[test]
fn thickness_bounds_respect_manufacturing_limits() {
    let mut cfg = small();
    cfg.tau_min_mm = 0.2;
    assert!(config_error(&cfg).contains("minimum wall"));
    let mut cfg = small();
    cfg.tau_max_mm = 1.0;
    assert!(config_error(&cfg).contains("pore"));
}

#[test]
fn unattainable_volume_fraction_reports_the_range() {
    let mut cfg = small();
    cfg.volume_fraction_limit = 0.2;
    let msg = config_error(&cfg);
    assert!(msg.contains("not attainable") && msg.contains("0.36"), "{msg}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(common::root().join("configs/toy.json")).unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, text.replacen("\"cell_size_mm\"", "\"cell_size\": 2.5, \"cell_size_mm\"", 1)).unwrap();
    let err = ProblemConfig::load(&path).unwrap_err();
    assert!(err.is_config() && err.to_string().contains("cell_size"), "{err}");
}

#[test]
fn half_volume_uniform_thickness() {
    // 423.5 µm walls give V_f = 50% at a = 2.5 mm
    let p = small().build().unwrap();
    let s = p.growth.surrogate();
    let tau = uniform_thickness(&p.map, s, 0.5).unwrap();
    let vf = p.map.volume_fraction(&p.map.grid().uniform(tau), s).unwrap().0;
    assert!((vf - 0.5).abs() < 1e-4);
    assert!((tau - 0.4235).abs() < 0.02, "τ = {tau}");
    let b = run_uniform_baseline(&p, 0.5).unwrap();
    assert_eq!(b.tau, tau);
    assert!(b.simulation.growth_percent > 0.0);
}

#[test]
fn iterates_stay_in_bounds_and_never_lose_mass() {
    let cfg = small();
    let out = run(&cfg);
    assert!(out.trace.len() > 2);
    for w in out.trace.windows(2) {
        assert!(w[1].mass_growth >= w[0].mass_growth * (1.0 - 1e-9));
    }
    for r in &out.trace {
        assert!(r.z.iter().all(|&z| (cfg.tau_min_mm..=cfg.tau_max_mm).contains(&z)));
        assert!(r.volume_fraction <= cfg.volume_fraction_limit + cfg.optimizer.feasibility_tolerance);
    }
    assert!(out.trace.last().unwrap().mass_growth > out.trace[0].mass_growth);
}

#[test]
fn replays_are_bitwise_identical() {
    let cfg = small();
    let (a, b) = (run(&cfg), run(&cfg));
    assert_eq!(a.termination, b.termination);
    assert_eq!(a.trace.len(), b.trace.len());
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert_eq!(x.z, y.z);
        assert_eq!(x.mass_growth, y.mass_growth);
    }
}

#[test]
fn limit_at_the_thinnest_design_pins_every_wall() {
    let mut cfg = small();
    let p = cfg.build().unwrap();
    let g = p.map.grid();
    let floor = p.map.volume_fraction(&g.uniform(g.tau_min), p.growth.surrogate()).unwrap().0;
    cfg.volume_fraction_limit = floor;
    let out = run(&cfg);
    assert!(out.evaluation.volume_fraction <= floor + cfg.optimizer.feasibility_tolerance);
    // the tolerance allows about 2 µm of average slack
    let mean = out.z.iter().sum::<f64>() / out.z.len() as f64;
    assert!(mean - cfg.tau_min_mm < 0.01, "mean z {mean}");
}

#[test]
fn loose_limit_is_handled() {
    let mut cfg = small();
    cfg.volume_fraction_limit = 0.7;
    let out = run(&cfg);
    assert!(matches!(
        out.termination,
        Termination::MaxIterations | Termination::StepTolerance | Termination::NoImprovingStep
    ));
    assert!(out.evaluation.volume_fraction <= 0.7 + cfg.optimizer.feasibility_tolerance);
    assert!(out.evaluation.mass_growth >= out.trace[0].mass_growth);
}

#[test]
fn summary_and_fields_read_back() {
    let mut cfg = small();
    cfg.optimizer.max_iterations = 2;
    let p = cfg.build().unwrap();
    let out = optimize(&p, &mut |_| Ok(())).unwrap();
    let c = compare(&p, &out).unwrap();
    assert!((c.row.g_m_optimized_percent - out.evaluation.growth_percent).abs() < 1e-9);
    assert!(c.row.v_f_uniform <= c.row.v_f_optimized.min(c.row.v_target) + 1e-4);

    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("summary.csv");
    write_summary(&csv_path, &[c.row.clone()]).unwrap();
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let headers = r.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "compliance_ratio"));
    let rec = r.records().next().unwrap().unwrap();
    let col = |name: &str| rec[headers.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    assert_eq!(col("g_m_optimized_percent"), c.row.g_m_optimized_percent);
    assert_eq!(col("iterations"), c.row.iterations as f64);

    let vtk_path = dir.path().join("fields.vtk");
    let tau = p.map.element_thickness(&out.z);
    write_fields(&vtk_path, p.growth.model().mesh(), &[("bone_density", &c.optimized.final_density), ("tau_mm", &tau)])
        .unwrap();
    let back = vtk::read(&vtk_path).unwrap();
    assert_eq!(back.mesh.labels(), p.growth.model().mesh().labels());
    let rho = back.bone_density.unwrap();
    for (a, b) in rho.iter().zip(&c.optimized.final_density) {
        assert!((a - b).abs() <= 1e-15 * b.abs());
    }
}

#[test]
fn shipped_schema_is_current() {
    let shipped = std::fs::read_to_string(common::root().join("configs/problem.schema.json")).unwrap();
    assert!(shipped == ProblemConfig::schema(), "regenerate with `ingrowth schema > configs/problem.schema.json`");
}
