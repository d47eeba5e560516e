#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use ingrowth::mech::Aabb;
use ingrowth::optimize::{DensitySpec, GridSpec, LoadCaseSpec, MeshSpec, ProblemConfig, SupportSpec};
use ingrowth::surrogate::PropertySurrogate;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn surrogate() -> Arc<PropertySurrogate> {
    static S: OnceLock<Arc<PropertySurrogate>> = OnceLock::new();
    S.get_or_init(|| Arc::new(PropertySurrogate::load(&root().join("data/surrogate.json")).unwrap()))
        .clone()
}

pub fn toy() -> ProblemConfig {
    ProblemConfig::load(&root().join("configs/toy.json")).unwrap()
}

pub fn aabb(min: [f64; 3], max: [f64; 3]) -> Aabb {
    Aabb { min, max }
}

/// 8 mm cube of 4³ elements with a 4×4×6 mm lattice column reaching the
/// loaded top face and a 2×2×2 control grid.
pub fn small(force: [f64; 3], horizon_days: f64) -> ProblemConfig {
    let mut cfg = toy();
    cfg.mesh = MeshSpec::Block {
        origin_mm: [0.0; 3],
        size_mm: [8.0; 3],
        divisions: [4, 4, 4],
        implant_mm: aabb([2.0, 2.0, 2.0], [6.0, 6.0, 8.0]),
        inert_mm: None,
    };
    cfg.bone_density = DensitySpec::Linear {
        origin_mm: [0.0; 3],
        at_origin_g_cc: 0.6,
        gradient_g_cc_per_mm: [0.05, 0.0, 0.0],
    };
    cfg.control_grid = GridSpec::Explicit {
        origin_mm: [2.0, 2.0, 2.0],
        spacing_mm: [4.0, 4.0, 6.0],
        dims: [2, 2, 2],
    };
    cfg.load_cases = vec![case("stance", force, 1000.0)];
    cfg.growth.horizon = horizon_days;
    cfg
}

pub fn case(name: &str, force: [f64; 3], cycles: f64) -> LoadCaseSpec {
    LoadCaseSpec {
        name: name.into(),
        force_n: force,
        nodes_in_mm: aabb([2.0, 2.0, 8.0], [6.0, 6.0, 8.0]),
        cycles_per_day: cycles,
        supports: vec![SupportSpec {
            nodes_in_mm: aabb([0.0, 0.0, 0.0], [8.0, 8.0, 0.0]),
            fixed: [true; 3],
        }],
    }
}
