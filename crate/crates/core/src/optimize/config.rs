//! Problem configuration: one JSON document with units in every key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::design::{ControlGrid, DesignMap};
use crate::growth::{BoneSsa, GrowthConstants, GrowthModel, Smoothing};
use crate::material::{BoneLaw, ImplantMaterial};
use crate::mech::{Aabb, Domain, HexMesh, LoadCase, StaticModel, Support};
use crate::surrogate::PropertySurrogate;
use crate::tpms::{PoreSearch, PoreSearchOptions, UnitCellField};
use crate::{vtk, Error, Point3, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    /// Structured block; elements are labelled by centroid, the inert box
    /// taking precedence over the implant box.
    Block {
        origin_mm: Point3,
        size_mm: Point3,
        divisions: [usize; 3],
        implant_mm: Aabb,
        #[serde(default)]
        inert_mm: Option<Aabb>,
    },
    /// Legacy VTK unstructured grid with a `domain` cell field; relative
    /// paths are resolved against the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform { g_cc: f64 },
    /// `ρ = at_origin + gradient · (x − origin)` at element centroids.
    Linear {
        origin_mm: Point3,
        at_origin_g_cc: f64,
        gradient_g_cc_per_mm: Point3,
    },
    /// The mesh file's `bone_density` cell field.
    MeshField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Explicit {
        origin_mm: Point3,
        spacing_mm: [f64; 3],
        dims: [usize; 3],
    },
    /// Smallest grid of roughly this spacing over the design elements' nodes.
    Covering { spacing_mm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub nodes_in_mm: Aabb,
    pub fixed: [bool; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LoadCaseSpec {
    pub name: String,
    pub force_n: Point3,
    pub nodes_in_mm: Aabb,
    pub cycles_per_day: f64,
    pub supports: Vec<SupportSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Manufacturing {
    pub min_wall_mm: f64,
    pub min_pore_mm: f64,
    /// p₀; computed from a 64³ cell field when absent.
    pub zero_thickness_pore_mm: Option<f64>,
}

impl Default for Manufacturing {
    fn default() -> Self {
        Manufacturing {
            min_wall_mm: 0.3,
            min_pore_mm: 0.1,
            zero_thickness_pore_mm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Per-iteration move limit as a fraction of τ_max − τ_min.
    pub move_limit: f64,
    /// Stop when the largest thickness change falls below this.
    pub step_tolerance_mm: f64,
    /// Accepted iterates satisfy V_f ≤ V* + this.
    pub feasibility_tolerance: f64,
    /// Accepted steps lose at most this fraction of m_f.
    pub objective_tolerance: f64,
    /// Halvings of the move limit tried before a rejected step ends the run.
    pub max_rejections: usize,
    pub asymptote_init: f64,
    pub asymptote_increase: f64,
    pub asymptote_decrease: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_iterations: 100,
            move_limit: 0.05,
            step_tolerance_mm: 1e-4,
            feasibility_tolerance: 1e-3,
            objective_tolerance: 1e-9,
            max_rejections: 4,
            asymptote_init: 0.5,
            asymptote_increase: 1.2,
            asymptote_decrease: 0.7,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("optimizer: {m}")));
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return bad("move_limit must lie in (0, 1]");
        }
        if !(self.step_tolerance_mm >= 0.0 && self.feasibility_tolerance >= 0.0 && self.objective_tolerance >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        if !(self.asymptote_init > 0.0 && self.asymptote_init <= 1.0) {
            return bad("asymptote_init must lie in (0, 1]");
        }
        if !(self.asymptote_increase >= 1.0 && self.asymptote_decrease > 0.0 && self.asymptote_decrease <= 1.0) {
            return bad("asymptote_increase must be ≥ 1 and asymptote_decrease in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mesh: MeshSpec,
    /// Uniform 2× refinements applied after loading.
    #[serde(default)]
    pub refine: usize,
    pub bone_density: DensitySpec,
    pub control_grid: GridSpec,
    pub load_cases: Vec<LoadCaseSpec>,
    /// Surrogate written by `fit-surrogate`. This and `output` are relative
    /// to the config file.
    pub surrogate: PathBuf,
    /// V*.
    pub volume_fraction_limit: f64,
    pub tau_min_mm: f64,
    pub tau_max_mm: f64,
    pub cell_size_mm: f64,
    #[serde(default)]
    pub manufacturing: Manufacturing,
    #[serde(default)]
    pub growth: GrowthConstants,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub bone_ssa: BoneSsa,
    /// Remodel the host bone as well as the ingrowth region.
    #[serde(default = "yes")]
    pub bone_growth: bool,
    #[serde(default)]
    pub implant: ImplantMaterial,
    #[serde(default)]
    pub bone: BoneLaw,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn yes() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A loaded problem ready to simulate and optimize.
pub struct Problem {
    pub config: ProblemConfig,
    pub growth: GrowthModel,
    pub map: DesignMap,
}

impl ProblemConfig {
    /// Reads `path`, resolving relative paths against its directory.
    /// JSON schema of the configuration document, pretty-printed.
    pub fn schema() -> String {
        let mut s = serde_json::to_string_pretty(&schemars::schema_for!(ProblemConfig)).expect("schema serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ProblemConfig = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.surrogate = base.join(&cfg.surrogate);
        cfg.output = base.join(&cfg.output);
        if let MeshSpec::File { path: p } = &mut cfg.mesh {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    /// Checks everything that does not need the mesh or the surrogate,
    /// including the manufacturing limits on the thickness bounds.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.cell_size_mm > 0.0) {
            return bad(format!("cell size must be positive, got {} mm", self.cell_size_mm));
        }
        if !(self.tau_min_mm > 0.0 && self.tau_max_mm > self.tau_min_mm) {
            return bad(format!("thickness bounds [{}, {}] mm are invalid", self.tau_min_mm, self.tau_max_mm));
        }
        let m = &self.manufacturing;
        if self.tau_min_mm < m.min_wall_mm {
            return bad(format!(
                "tau_min {} mm is below the manufacturing minimum wall of {} mm",
                self.tau_min_mm, m.min_wall_mm
            ));
        }
        if !(self.volume_fraction_limit > 0.0 && self.volume_fraction_limit < 1.0) {
            return bad(format!("volume fraction limit {} must lie in (0, 1)", self.volume_fraction_limit));
        }
        if self.load_cases.is_empty() {
            return bad("at least one load case is required".into());
        }
        self.growth.validate()?;
        self.smoothing.validate()?;
        self.optimizer.validate()?;
        let p0 = self.zero_thickness_pore()?;
        let pore = p0 - self.tau_max_mm;
        if pore < m.min_pore_mm {
            return bad(format!(
                "tau_max {} mm leaves a {:.4} mm pore (p0 = {p0:.4} mm), below the {} mm minimum",
                self.tau_max_mm, pore, m.min_pore_mm
            ));
        }
        Ok(())
    }

    fn zero_thickness_pore(&self) -> Result<f64> {
        if let Some(p) = self.manufacturing.zero_thickness_pore_mm {
            return Ok(p);
        }
        info!("computing the zero-thickness pore size on a 64³ cell field");
        let field = UnitCellField::gyroid(64, self.cell_size_mm)?;
        PoreSearch::new(&field, PoreSearchOptions::default()).p0()
    }

    pub fn build_mesh(&self) -> Result<(HexMesh, Option<Vec<f64>>)> {
        let (mut mesh, mut density) = match &self.mesh {
            MeshSpec::Block {
                origin_mm,
                size_mm,
                divisions,
                implant_mm,
                inert_mm,
            } => {
                let tol = 1e-9 * size_mm.iter().fold(0.0f64, |a, b| a.max(*b));
                let mesh = HexMesh::block(*origin_mm, *size_mm, *divisions, |c| {
                    if inert_mm.is_some_and(|b| b.contains(c, tol)) {
                        Domain::Inert
                    } else if implant_mm.contains(c, tol) {
                        Domain::Design
                    } else {
                        Domain::Bone
                    }
                })?;
                (mesh, None)
            }
            MeshSpec::File { path } => {
                let f = vtk::read(path)?;
                (f.mesh, f.bone_density)
            }
        };
        for _ in 0..self.refine {
            mesh = mesh.refine()?;
            density = density.map(|d| d.iter().flat_map(|&r| [r; 8]).collect());
        }
        Ok((mesh, density))
    }

    /// Builds the mesh, load cases, growth model and design map, and checks
    /// that V* is attainable within the thickness bounds.
    pub fn build(&self) -> Result<Problem> {
        self.validate()?;
        let (mesh, file_density) = self.build_mesh()?;
        if mesh.elements_in(Domain::Design).is_empty() {
            return Err(Error::Config("the mesh has no design elements".into()));
        }
        let density: Vec<f64> = match &self.bone_density {
            DensitySpec::Uniform { g_cc } => vec![*g_cc; mesh.element_count()],
            DensitySpec::Linear {
                origin_mm,
                at_origin_g_cc,
                gradient_g_cc_per_mm,
            } => (0..mesh.element_count())
                .map(|e| {
                    let c = mesh.centroid(e);
                    at_origin_g_cc + (0..3).map(|d| gradient_g_cc_per_mm[d] * (c[d] - origin_mm[d])).sum::<f64>()
                })
                .collect(),
            DensitySpec::MeshField => file_density
                .ok_or_else(|| Error::Config("bone_density is mesh_field but the mesh has no bone_density field".into()))?,
        };
        let cases = self
            .load_cases
            .iter()
            .map(|l| {
                let group = |b: &Aabb, what: &str| {
                    let nodes = mesh.nodes_in(b);
                    if nodes.is_empty() {
                        Err(Error::Config(format!("load case '{}': no nodes inside the {what} box", l.name)))
                    } else {
                        Ok(nodes)
                    }
                };
                Ok(LoadCase {
                    name: l.name.clone(),
                    force: l.force_n,
                    nodes: group(&l.nodes_in_mm, "load")?,
                    cycles_per_day: l.cycles_per_day,
                    supports: l
                        .supports
                        .iter()
                        .map(|s| {
                            Ok(Support {
                                nodes: group(&s.nodes_in_mm, "support")?,
                                fixed: s.fixed,
                            })
                        })
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let surrogate = Arc::new(PropertySurrogate::load(&self.surrogate)?);
        let (tlo, thi) = surrogate.tau_domain();
        if self.tau_min_mm < tlo - 1e-12 || self.tau_max_mm > thi + 1e-12 {
            return Err(Error::Config(format!(
                "thickness bounds [{}, {}] mm exceed the surrogate's range [{tlo}, {thi}] mm",
                self.tau_min_mm, self.tau_max_mm
            )));
        }
        let grid = match &self.control_grid {
            GridSpec::Explicit {
                origin_mm,
                spacing_mm,
                dims,
            } => ControlGrid {
                origin: *origin_mm,
                spacing: *spacing_mm,
                dims: *dims,
                tau_min: self.tau_min_mm,
                tau_max: self.tau_max_mm,
            },
            GridSpec::Covering { spacing_mm } => {
                let (lo, hi) = design_extent(&mesh);
                ControlGrid::covering(lo, hi, *spacing_mm, self.tau_min_mm, self.tau_max_mm)?
            }
        };
        grid.validate()?;
        let mesh = Arc::new(mesh);
        let map = DesignMap::new(grid, &mesh)?;
        let model = StaticModel::new(mesh, cases)?;
        let mut growth = GrowthModel::new(model, surrogate, density)?;
        growth.implant = self.implant;
        growth.bone = self.bone;
        growth.constants = self.growth;
        growth.smoothing = self.smoothing;
        growth.bone_ssa = self.bone_ssa.clone();
        growth.bone_growth = self.bone_growth;
        growth.validate()?;

        let (lo, hi) = attainable_range(&map, growth.surrogate())?;
        let v = self.volume_fraction_limit;
        if v < lo - 1e-12 || v > hi + 1e-12 {
            return Err(Error::Config(format!(
                "volume fraction limit {v} is not attainable; the thickness bounds allow [{lo:.4}, {hi:.4}]"
            )));
        }
        Ok(Problem {
            config: self.clone(),
            growth,
            map,
        })
    }
}

/// Bounding box of the nodes of the design elements.
fn design_extent(mesh: &HexMesh) -> (Point3, Point3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for e in mesh.elements_in(Domain::Design) {
        for &n in &mesh.elements()[e] {
            let p = mesh.nodes()[n as usize];
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
    }
    (lo, hi)
}

/// [V_f(τ_min), V_f(τ_max)] over uniform designs.
pub fn attainable_range(map: &DesignMap, surrogate: &PropertySurrogate) -> Result<(f64, f64)> {
    let g = map.grid();
    let lo = map.volume_fraction(&g.uniform(g.tau_min), surrogate)?.0;
    let hi = map.volume_fraction(&g.uniform(g.tau_max), surrogate)?.0;
    Ok((lo, hi))
}
