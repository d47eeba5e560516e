use std::f64::consts::PI;
use std::sync::OnceLock;

use ingrowth::tpms::{
    distance_to_base, gyroid_level, signed_distance_at, Gyroid, LevelFunction, PoreSearch, PoreSearchOptions,
    ProjectionParams, UnitCellField,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A: f64 = 2.5;

fn field64() -> &'static UnitCellField {
    static F: OnceLock<UnitCellField> = OnceLock::new();
    F.get_or_init(|| UnitCellField::gyroid(64, A).unwrap())
}

type Tri = [[f64; 3]; 3];

// Independent zero-set triangulation: five-tetrahedron split of each cube of
// the sampled level function over an arbitrary box.
fn triangulate_level(lo: f64, hi: f64, cells: usize) -> Vec<Tri> {
    let h = (hi - lo) / cells as f64;
    let m = cells + 1;
    let mut vals = vec![0.0; m * m * m];
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                let p = [lo + i as f64 * h, lo + j as f64 * h, lo + k as f64 * h];
                vals[i + m * (j + m * k)] = gyroid_level(&p, A);
            }
        }
    }
    const EVEN: [[usize; 4]; 5] = [[0, 1, 2, 4], [1, 2, 3, 7], [1, 4, 5, 7], [2, 4, 6, 7], [1, 2, 4, 7]];
    const ODD: [[usize; 4]; 5] = [[0, 1, 3, 5], [0, 2, 3, 6], [0, 4, 5, 6], [3, 5, 6, 7], [0, 3, 5, 6]];
    let mut out = Vec::new();
    for k in 0..cells {
        for j in 0..cells {
            for i in 0..cells {
                let corner = |c: usize| {
                    let (a, b, d) = (i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                    (
                        [lo + a as f64 * h, lo + b as f64 * h, lo + d as f64 * h],
                        vals[a + m * (b + m * d)],
                    )
                };
                let tets = if (i + j + k) % 2 == 0 { &EVEN } else { &ODD };
                for t in tets {
                    let c = t.map(corner);
                    let pos: Vec<usize> = (0..4).filter(|&q| c[q].1 >= 0.0).collect();
                    let neg: Vec<usize> = (0..4).filter(|&q| c[q].1 < 0.0).collect();
                    let cut = |a: usize, b: usize| {
                        let t = c[a].1 / (c[a].1 - c[b].1);
                        [0, 1, 2].map(|d| c[a].0[d] + t * (c[b].0[d] - c[a].0[d]))
                    };
                    match (pos.len(), neg.len()) {
                        (1, 3) | (3, 1) => {
                            let (s, r) = if pos.len() == 1 { (pos[0], &neg) } else { (neg[0], &pos) };
                            out.push([cut(s, r[0]), cut(s, r[1]), cut(s, r[2])]);
                        }
                        (2, 2) => {
                            let (p, q) = (cut(pos[0], neg[0]), cut(pos[0], neg[1]));
                            let (r, s) = (cut(pos[1], neg[0]), cut(pos[1], neg[1]));
                            out.push([p, q, s]);
                            out.push([p, s, r]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    out
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn area(t: &Tri) -> f64 {
    let u = sub(t[1], t[0]);
    let v = sub(t[2], t[0]);
    let c = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * dot(c, c).sqrt()
}

// Closest point on a triangle (region classification on barycentric coordinates).
fn point_triangle_distance(p: [f64; 3], t: &Tri) -> f64 {
    let [a, b, c] = *t;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    let closest = if d1 <= 0.0 && d2 <= 0.0 {
        a
    } else {
        let bp = sub(p, b);
        let d3 = dot(ab, bp);
        let d4 = dot(ac, bp);
        let cp = sub(p, c);
        let d5 = dot(ab, cp);
        let d6 = dot(ac, cp);
        let vc = d1 * d4 - d3 * d2;
        let vb = d5 * d2 - d1 * d6;
        let va = d3 * d6 - d5 * d4;
        if d3 >= 0.0 && d4 <= d3 {
            b
        } else if d6 >= 0.0 && d5 <= d6 {
            c
        } else if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            let v = d1 / (d1 - d3);
            [0, 1, 2].map(|k| a[k] + v * ab[k])
        } else if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            let w = d2 / (d2 - d6);
            [0, 1, 2].map(|k| a[k] + w * ac[k])
        } else if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            [0, 1, 2].map(|k| b[k] + w * (c[k] - b[k]))
        } else {
            let denom = 1.0 / (va + vb + vc);
            let v = vb * denom;
            let w = vc * denom;
            [0, 1, 2].map(|k| a[k] + ab[k] * v + ac[k] * w)
        }
    };
    let d = sub(p, closest);
    dot(d, d).sqrt()
}

#[test]
fn distance_matches_nearest_facet_oracle() {
    // 128 cells per period over a box reaching a quarter cell past [0, a)
    let tris = triangulate_level(-0.25 * A, 1.25 * A, 192);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = [rng.gen::<f64>() * A, rng.gen::<f64>() * A, rng.gen::<f64>() * A];
        let oracle = tris.iter().map(|t| point_triangle_distance(p, t)).fold(f64::INFINITY, f64::min);
        let d = distance_to_base(&p, A).unwrap();
        // relative error with an absolute floor of one oracle facet size
        let err = (d - oracle).abs() / oracle.max(A / 128.0);
        worst = worst.max(err);
    }
    assert!(worst < 0.01, "worst relative deviation {worst}");
}

#[test]
fn sign_of_phi_matches_thin_sheet_membership() {
    // near the surface D ≈ |f|/‖∇f‖ in scaled units; a thin sheet contains x
    // exactly when that estimate is below τ/2
    let tau = 0.05;
    let s = 2.0 * PI / A;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 200 {
        let x = [rng.gen::<f64>() * A, rng.gen::<f64>() * A, rng.gen::<f64>() * A];
        let xs = x.map(|v| v * s);
        let g = Gyroid.gradient(&xs);
        let est = Gyroid.value(&xs).abs() / dot(g, g).sqrt() / s;
        if est > 0.1 || (est - 0.5 * tau).abs() < 0.002 {
            continue;
        }
        checked += 1;
        let phi = signed_distance_at(&x, tau, A).unwrap();
        assert_eq!(phi > 0.0, est < 0.5 * tau, "x = {x:?}, φ = {phi}, estimate {est}");
    }
}

#[test]
fn field_is_periodic_and_vanishes_on_surface() {
    let f = field64();
    let h = f.spacing();
    // the field samples one period; its neighbours across the seam match
    // the direct evaluation at the shifted point
    for (i, j, k) in [(0, 5, 9), (63, 20, 1), (31, 0, 63)] {
        let x = f.centroid(i, j, k);
        let shifted = [x[0] + A, x[1] - A, x[2] + 2.0 * A];
        assert!((distance_to_base(&shifted, A).unwrap() - f.distance(i, j, k)).abs() < 1e-10);
    }
    // voxels straddling the surface have D below one half-diagonal
    let n = f.resolution();
    for idx in 0..n * n * n {
        let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
        if gyroid_level(&f.centroid(i, j, k), A).abs() < 1e-3 {
            assert!(f.distance(i, j, k) < 0.5 * 3f64.sqrt() * h);
        }
    }
}

#[test]
fn base_surface_area_by_two_resolution_extrapolation() {
    // base area per cell from independent triangulations of f = 0
    let a64: f64 = triangulate_level(0.0, A, 64).iter().map(area).sum();
    let a128: f64 = triangulate_level(0.0, A, 128).iter().map(area).sum();
    // second-order convergence
    let base = (4.0 * a128 - a64) / 3.0;
    assert!((base / (A * A) - 3.09).abs() < 0.02, "base area {} a²", base / (A * A));
    let s0 = field64().specific_surface_area(0.0).value;
    let expected = 2.0 * base / A.powi(3);
    assert!((s0 - expected).abs() / expected < 0.02, "S_d(0) = {s0}, expected {expected}");
}

#[test]
fn surface_area_is_continuous_in_thickness() {
    let f = field64();
    let mut previous = f.specific_surface_area(0.4).value;
    for step in 1..=10 {
        let h = 1e-3 / step as f64;
        let s = f.specific_surface_area(0.4 + h).value;
        assert!((s - previous).abs() < 0.02 * previous);
        previous = s;
    }
    let a = f.specific_surface_area(0.4).value;
    let b = f.specific_surface_area(0.4 + 1e-6).value;
    assert!((a - b).abs() < 1e-3 * a);
}

#[test]
fn porosity_limit_for_sharp_projection() {
    let f = field64();
    let sharp = ProjectionParams {
        radius: f.spacing() * 3f64.sqrt(),
        eta: 1e-3,
        penalty: 3.0,
    };
    assert!(f.porosity(0.0, &sharp) > 0.999);
}

#[test]
fn pore_search_agrees_with_grid_scan() {
    let f = field64();
    let search = PoreSearch::new(f, PoreSearchOptions::default());
    let p0 = search.p0().unwrap();
    let scan = search.brute_force_p0().unwrap();
    assert!((p0 / A - 0.43).abs() <= 0.02);
    assert!((p0 - scan).abs() / p0 < 0.03, "search {p0}, scan {scan}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn porosity_strictly_decreasing(t1 in 0.0f64..1.2, dt in 1e-3f64..0.1) {
        let f = field64();
        let p = ProjectionParams::for_grid(64, A);
        prop_assert!(f.porosity(t1 + dt, &p) < f.porosity(t1, &p));
    }

    #[test]
    fn pore_size_is_affine_with_unit_slope(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let f = field64();
        let d = f.min_pore_size(t1).unwrap() - f.min_pore_size(t2).unwrap();
        prop_assert_eq!(d, (f.p0().unwrap() - t1) - (f.p0().unwrap() - t2));
        prop_assert!((d - (t2 - t1)).abs() < 1e-15);
    }
}
