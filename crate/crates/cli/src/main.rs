use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use ingrowth::homogenize::{self, CellMaterials, Homogenizer, LinearSolver, SampleMetadata, SamplingPlan, Units};
use ingrowth::material::{BoneLaw, ImplantMaterial};
use ingrowth::optimize::report::{self, TraceWriter};
use ingrowth::optimize::{self, Problem, ProblemConfig};
use ingrowth::sensitivity;
use ingrowth::surrogate::Scalar;
use ingrowth::surrogate::PropertySurrogate;
use ingrowth::tpms::{ProjectionParams, UnitCellField};
use ingrowth::{Error, Result};

#[derive(Parser)]
#[command(name = "ingrowth", version, about = "Thickness-graded gyroid implant design for bone in-growth")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unit cell porosity, surface area and pore size tables.
    Tpms(TpmsArgs),
    /// Homogenize the (thickness, bone density) design space.
    Homogenize(HomogenizeArgs),
    /// Fit property surrogates to a sample table.
    FitSurrogate(FitArgs),
    /// Forward growth simulation of one design.
    Simulate(SimulateArgs),
    /// Optimize the thickness field and compare with the uniform design.
    Optimize(ProblemArgs),
    /// Uniform-thickness designs at a list of volume fractions.
    Baseline(BaselineArgs),
    /// Compare the direct sensitivities with central differences.
    CheckGradients(GradientArgs),
    /// Print the JSON schema of the problem configuration.
    Schema,
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory of the configuration.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Uniform wall thickness (mm); default is the uniform design at V*.
    #[arg(long)]
    tau: Option<f64>,
    /// Write the density field every this many steps (0: final only).
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Target volume fractions; default is V* from the configuration.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<f64>,
}

#[derive(Args)]
struct GradientArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Central difference step (mm).
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Random perturbation of the uniform start design (mm).
    #[arg(long, default_value_t = 1e-4)]
    jitter: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Components below this fraction of the largest are compared absolutely.
    #[arg(long, default_value_t = 1e-2)]
    filter: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

#[derive(Args)]
struct TpmsArgs {
    /// Unit cell size (mm).
    #[arg(long, default_value_t = 2.5)]
    cell_size: f64,
    /// Distance samples per cell edge.
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Wall thicknesses to tabulate (mm); default is 20 levels over 2% to 40% of the cell.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    /// Also write the wall surfaces at this thickness (mm) as STL.
    #[arg(long)]
    stl: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "tpms_out")]
    output: PathBuf,
}

#[derive(Args)]
struct HomogenizeArgs {
    #[arg(long, default_value_t = 2.5)]
    cell_size: f64,
    /// Voxels per edge of the homogenization grid.
    #[arg(long, default_value_t = 16)]
    resolution: usize,
    /// Samples per edge of the grid used for porosity and surface area.
    #[arg(long, default_value_t = 64)]
    property_resolution: usize,
    #[arg(long, default_value_t = 20)]
    levels: usize,
    /// Thickness range as fractions of the cell size.
    #[arg(long, num_args = 2, default_values_t = [0.02, 0.40])]
    tau_fraction: Vec<f64>,
    /// Bone density range (g/cc).
    #[arg(long, num_args = 2, default_values_t = [0.05, 1.92])]
    rho: Vec<f64>,
    /// Stiffness penalization exponent.
    #[arg(long, default_value_t = 3.0)]
    penalty: f64,
    /// Use matrix-free PCG instead of the direct solver.
    #[arg(long)]
    pcg: bool,
    #[arg(long, default_value = "data")]
    output: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Sample table written by `homogenize`.
    #[arg(long, default_value = "data/samples.csv")]
    samples: PathBuf,
    #[arg(long, default_value = "data/surrogate.json")]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Tpms(a) => tpms(a),
        Command::Homogenize(a) => homogenize(a),
        Command::FitSurrogate(a) => fit_surrogate(a),
        Command::Simulate(a) => simulate(a),
        Command::Optimize(a) => run_optimize(a),
        Command::Baseline(a) => baseline(a),
        Command::CheckGradients(a) => check_gradients(a),
        Command::Schema => {
            print!("{}", ProblemConfig::schema());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() || matches!(e, Error::Io { .. }) { 2 } else { 3 })
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn tpms(a: TpmsArgs) -> Result<()> {
    create_dir(&a.output)?;
    let field = UnitCellField::gyroid(a.resolution, a.cell_size)?;
    let mut search = ingrowth::tpms::PoreSearchOptions::default();
    search.seed = a.seed;
    let p0 = ingrowth::tpms::PoreSearch::new(&field, search).p0()?;
    field.set_p0(p0);
    info!("zero-thickness pore size p0 = {p0:.4} mm ({:.4} of the cell)", p0 / a.cell_size);
    let taus = if a.tau.is_empty() {
        (0..20).map(|i| a.cell_size * (0.02 + 0.02 * i as f64)).collect()
    } else {
        a.tau.clone()
    };
    let params = ProjectionParams::for_grid(a.resolution, a.cell_size);
    let path = a.output.join("cell_properties.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["tau_mm", "porosity", "volume_fraction", "ssa_per_mm", "min_pore_mm"])
        .map_err(|e| csv_error(&path, e))?;
    for &t in &taus {
        let xi = field.porosity(t, &params);
        let ssa = field.specific_surface_area(t).value;
        let pore = field.min_pore_size(t).map(|p| p.to_string()).unwrap_or_else(|_| "closed".into());
        w.write_record([t.to_string(), xi.to_string(), (1.0 - xi).to_string(), ssa.to_string(), pore])
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    if let Some(t) = a.stl {
        field.write_wall_stl(t, &a.output.join("walls.stl"))?;
    }
    println!("p0 = {p0:.6} mm; table written to {}", path.display());
    Ok(())
}

fn homogenize(a: HomogenizeArgs) -> Result<()> {
    create_dir(&a.output)?;
    let projection = ProjectionParams {
        penalty: a.penalty,
        ..ProjectionParams::for_grid(a.resolution, a.cell_size)
    };
    let materials = CellMaterials {
        implant: ImplantMaterial::default(),
        bone: BoneLaw::default(),
        projection,
    };
    let solver = if a.pcg {
        LinearSolver::Pcg {
            tolerance: 1e-8,
            max_iterations: 20_000,
        }
    } else {
        LinearSolver::Direct
    };
    let plan = SamplingPlan {
        levels: a.levels,
        tau_range: (a.tau_fraction[0] * a.cell_size, a.tau_fraction[1] * a.cell_size),
        rho_range: (a.rho[0], a.rho[1]),
    };
    info!("building {}³ and {}³ distance fields", a.resolution, a.property_resolution);
    let cell_field = UnitCellField::gyroid(a.resolution, a.cell_size)?;
    let property_field = UnitCellField::gyroid(a.property_resolution, a.cell_size)?;
    let homogenizer = Homogenizer::new(a.resolution, a.cell_size, materials, solver)?;
    let samples = homogenize::sample_design_space(&homogenizer, &cell_field, &property_field, &plan)?;
    let table = a.output.join("samples.csv");
    let hash = homogenize::write_samples(&table, &samples)?;
    let meta = SampleMetadata {
        format_version: 1,
        plan,
        cell_size_mm: a.cell_size,
        homogenization_resolution: a.resolution,
        property_resolution: a.property_resolution,
        property_projection: ProjectionParams::for_grid(a.property_resolution, a.cell_size),
        materials,
        solver,
        code_version: env!("CARGO_PKG_VERSION").into(),
        units: Units::default(),
        table_sha256: hash,
    };
    meta.save(&a.output.join("samples.json"))?;
    println!("{} samples written to {}", samples.len(), table.display());
    Ok(())
}

fn fit_surrogate(a: FitArgs) -> Result<()> {
    let (samples, hash) = homogenize::read_samples(&a.samples)?;
    let meta_path = a.samples.with_extension("json");
    if meta_path.exists() {
        let meta = SampleMetadata::load(&meta_path)?;
        if meta.table_sha256 != hash {
            return Err(Error::Config(format!(
                "{} does not match the hash recorded in {}",
                a.samples.display(),
                meta_path.display()
            )));
        }
    }
    let s = PropertySurrogate::fit(&samples, Some(hash))?;
    s.save(&a.output)?;
    println!(
        "surrogate fitted to {} samples (max residual {:.2e}) written to {}",
        samples.len(),
        s.metadata.max_relative_residual,
        a.output.display()
    );
    Ok(())
}

fn load_problem(a: &ProblemArgs) -> Result<Problem> {
    let mut cfg = ProblemConfig::load(&a.config)?;
    if let Some(o) = &a.output {
        cfg.output.clone_from(o);
    }
    let p = cfg.build()?;
    create_dir(&p.config.output)?;
    info!(
        "{} elements, {} design elements, {} control points ({} active)",
        p.growth.model().mesh().element_count(),
        p.map.elements().len(),
        p.map.grid().len(),
        p.map.active_indices().len()
    );
    Ok(p)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| csv_error(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn porosity_field(p: &Problem, tau: &[f64]) -> Result<Vec<f64>> {
    let mut xi = vec![0.0; tau.len()];
    for &e in p.map.elements() {
        xi[e] = p.growth.surrogate().eval_scalar(Scalar::Porosity, tau[e])?.0;
    }
    Ok(xi)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let p = load_problem(&a.problem)?;
    let tau0 = match a.tau {
        Some(t) => t,
        None => optimize::uniform_thickness(&p.map, p.growth.surrogate(), p.config.volume_fraction_limit)?,
    };
    let z = p.map.grid().uniform(tau0);
    p.map.grid().check_bounds(&z)?;
    let tau = p.map.element_thickness(&z);
    let run = p.growth.simulate(&tau, a.snapshot_every)?;
    let vf = p.map.volume_fraction(&z, p.growth.surrogate())?.0;
    let out = &p.config.output;
    write_json(&out.join("simulation.json"), &run)?;
    let xi = porosity_field(&p, &tau)?;
    let mut fields: Vec<(String, Vec<f64>)> = vec![
        ("thickness_mm".into(), tau.clone()),
        ("porosity".into(), xi),
        ("initial_density_g_cc".into(), p.growth.initial_density().to_vec()),
        ("final_density_g_cc".into(), run.final_density.clone()),
    ];
    for (step, rho) in &run.snapshots {
        fields.push((format!("density_day_{step}"), rho.clone()));
    }
    let refs: Vec<(&str, &[f64])> = fields.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    report::write_fields(&out.join("fields.vtk"), p.growth.model().mesh(), &refs)?;
    let history: Vec<(f64, f64)> = run.history.iter().enumerate().map(|(i, g)| ((i + 1) as f64, *g)).collect();
    report::plot_series(&out.join("growth_history.svg"), "In-growth over time", "g_m (%)", &[("g_m", history)])?;
    println!(
        "tau = {tau0:.4} mm, V_f = {vf:.4}: m_f = {:.4} mg, g_m = {:.3}%, compliance = {:.4} N·mm",
        run.mass_growth,
        run.growth_percent,
        run.final_compliance.iter().sum::<f64>()
    );
    Ok(())
}

fn run_optimize(a: ProblemArgs) -> Result<()> {
    let p = load_problem(&a)?;
    let out = p.config.output.clone();
    let mut writer = TraceWriter::create(&out.join("trace.csv"), p.map.grid().len())?;
    let outcome = optimize::optimize(&p, &mut |r| writer.write(r))?;
    report::plot_convergence(&out, &outcome.trace)?;
    let cmp = optimize::compare(&p, &outcome)?;
    let row = &cmp.row;
    report::write_summary(&out.join("summary.csv"), std::slice::from_ref(row))?;
    let tau = p.map.element_thickness(&outcome.z);
    let tau_uniform = p.map.element_thickness(&p.map.grid().uniform(cmp.uniform.tau));
    let xi = porosity_field(&p, &tau)?;
    report::write_fields(
        &out.join("fields.vtk"),
        p.growth.model().mesh(),
        &[
            ("thickness_mm", &tau),
            ("uniform_thickness_mm", &tau_uniform),
            ("porosity", &xi),
            ("initial_density_g_cc", p.growth.initial_density()),
            ("final_density_optimized_g_cc", &cmp.optimized.final_density),
            ("final_density_uniform_g_cc", &cmp.uniform.simulation.final_density),
        ],
    )?;
    write_json(
        &out.join("result.json"),
        &serde_json::json!({
            "z_mm": outcome.z,
            "termination": outcome.termination,
            "summary": row,
        }),
    )?;
    println!(
        "V* = {}: optimized g_m = {:.3}% at V_f = {:.4} ({:?} after {} iterations); uniform g_m = {:.3}% at the same V_f, {:.3}% at V*; compliance ratio {:.4}",
        row.v_target,
        row.g_m_optimized_percent,
        row.v_f_optimized,
        outcome.termination,
        row.iterations,
        row.g_m_uniform_percent,
        row.g_m_uniform_at_target_percent,
        row.compliance_ratio
    );
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let p = load_problem(&a.problem)?;
    let targets = if a.targets.is_empty() {
        vec![p.config.volume_fraction_limit]
    } else {
        a.targets.clone()
    };
    let path = p.config.output.join("baseline.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["v_target", "tau_mm", "v_f", "m_f_mg", "g_m_percent", "compliance_nmm"])
        .map_err(|e| csv_error(&path, e))?;
    for t in targets {
        let b = optimize::run_uniform_baseline(&p, t)?;
        let c: f64 = b.simulation.final_compliance.iter().sum();
        println!(
            "V* = {t}: tau = {:.4} mm, V_f = {:.4}, g_m = {:.3}%",
            b.tau, b.volume_fraction, b.simulation.growth_percent
        );
        w.write_record([t, b.tau, b.volume_fraction, b.simulation.mass_growth, b.simulation.growth_percent, c].map(|v| v.to_string()))
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::Io { path, source: e })
}

fn check_gradients(a: GradientArgs) -> Result<()> {
    let p = load_problem(&a.problem)?;
    let tau0 = optimize::uniform_thickness(&p.map, p.growth.surrogate(), p.config.volume_fraction_limit)?;
    let z = optimize::jitter(&p.map, &p.map.grid().uniform(tau0), a.jitter, a.seed);
    let checks = sensitivity::check_gradients(&p.growth, &p.map, &z, a.step)?;
    let path = p.config.output.join("gradients.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for c in &checks {
        w.serialize(c).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let (em, ev) = sensitivity::worst_errors(&checks, a.filter);
    println!("worst relative error: dm_f/dz {em:.3e}, dV_f/dz {ev:.3e} over {} variables", checks.len());
    if em > a.tolerance || ev > a.tolerance {
        return Err(Error::Numerical(format!(
            "gradient check failed: errors {em:.3e}, {ev:.3e} exceed {:e}; see {}",
            a.tolerance,
            path.display()
        )));
    }
    Ok(())
}
