//! Kept in its own binary so no other test competes for the timer.

mod common;

use std::time::Instant;

use ingrowth::optimize::GridSpec;
use ingrowth::sensitivity::{objective, objective_and_gradient};

/// Seconds spent on sensitivities alone: gradient run minus forward run,
/// best of three.
fn sensitivity_time(dims_z: usize) -> (usize, f64) {
    let mut cfg = common::toy();
    cfg.control_grid = GridSpec::Explicit {
        origin_mm: [6.0, 6.0, 4.0],
        spacing_mm: [4.0, 4.0, 14.0 / (dims_z - 1) as f64],
        dims: [3, 3, dims_z],
    };
    let p = cfg.build().unwrap();
    let mut z = p.map.grid().uniform(0.45);
    p.map.normalize(&mut z);
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let t0 = Instant::now();
        objective(&p.growth, &p.map, &z).unwrap();
        let t1 = Instant::now();
        objective_and_gradient(&p.growth, &p.map, &z).unwrap();
        best = best.min((t1.elapsed() - (t1 - t0)).as_secs_f64());
    }
    (p.map.active_indices().len(), best)
}

#[test]
fn sensitivity_cost_is_linear_in_the_variable_count() {
    let (n1, t1) = sensitivity_time(3);
    let (n2, t2) = sensitivity_time(6);
    assert_eq!((n1, n2), (27, 54));
    let ratio = t2 / t1;
    println!("{n1} variables: {t1:.2} s, {n2} variables: {t2:.2} s, ratio {ratio:.2}");
    assert!(ratio <= 2.3, "ratio {ratio:.2}");
}
