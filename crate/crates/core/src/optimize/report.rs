//! Trace, summary, field and plot output.

use std::fs::File;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::TraceRow;
use crate::mech::HexMesh;
use crate::vtk::{self, Field};
use crate::{Error, Result};

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, e.to_string())
}

/// Per-iteration CSV, flushed after every row.
pub struct TraceWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl TraceWriter {
    pub fn create(path: &Path, variables: usize) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = [
            "iteration",
            "m_f_mg",
            "g_m_percent",
            "v_f",
            "grad_m_f_norm",
            "grad_v_f_norm",
            "projected_grad_m_f_norm",
            "constraint_active",
            "rejections",
            "move_limit_mm",
            "max_change_mm",
            "wall_time_s",
        ]
        .map(String::from)
        .to_vec();
        header.extend((0..variables).map(|i| format!("z{i}_mm")));
        writer.write_record(&header).map_err(|e| csv_error(path, e))?;
        Ok(TraceWriter {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn write(&mut self, r: &TraceRow) -> Result<()> {
        let mut rec = vec![
            r.iteration.to_string(),
            r.mass_growth.to_string(),
            r.growth_percent.to_string(),
            r.volume_fraction.to_string(),
            r.mass_gradient_norm.to_string(),
            r.volume_gradient_norm.to_string(),
            r.projected_gradient_norm.to_string(),
            r.constraint_active.to_string(),
            r.rejections.to_string(),
            r.move_limit_mm.to_string(),
            r.max_change_mm.to_string(),
            r.wall_time_s.to_string(),
        ];
        rec.extend(r.z.iter().map(|v| v.to_string()));
        self.writer.write_record(&rec).map_err(|e| csv_error(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// One row of the uniform-versus-optimized comparison. The uniform design
/// is taken at the volume fraction the optimized design achieved.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub v_target: f64,
    pub v_f_optimized: f64,
    pub g_m_optimized_percent: f64,
    pub m_f_optimized_mg: f64,
    /// Total ½f·u over the load cases at the final state (N·mm).
    pub compliance_optimized_nmm: f64,
    pub tau_uniform_mm: f64,
    pub v_f_uniform: f64,
    pub g_m_uniform_percent: f64,
    pub m_f_uniform_mg: f64,
    pub compliance_uniform_nmm: f64,
    pub compliance_ratio: f64,
    /// g_m of the uniform design at V* itself.
    pub g_m_uniform_at_target_percent: f64,
    pub iterations: usize,
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the element fields as a legacy VTK file.
pub fn write_fields(path: &Path, mesh: &HexMesh, fields: &[(&str, &[f64])]) -> Result<()> {
    let cells: Vec<Field<'_>> = fields.iter().map(|&(name, values)| Field { name, values }).collect();
    vtk::write(path, mesh, &cells, &[])
}

fn plot_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, format!("plotting failed: {e}"))
}

/// Line plot of several series against the iteration number.
pub fn plot_series(path: &Path, title: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> Result<()> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in series {
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() || !y0.is_finite() {
        return Ok(());
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0).max(1e-9 * y1.abs().max(1.0));
    let (y0, y1) = (y0 - pad, y1 + pad);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_error(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_error(path, e))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_error(path, e))?;
    let colors = [BLUE, RED, GREEN, BLACK];
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_error(path, e))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_error(path, e))?;
    root.present().map_err(|e| plot_error(path, e))
}

/// g_m and V_f convergence plots next to each other in `dir`.
pub fn plot_convergence(dir: &Path, trace: &[TraceRow]) -> Result<()> {
    let pts = |f: fn(&TraceRow) -> f64| trace.iter().map(|r| (r.iteration as f64, f(r))).collect::<Vec<_>>();
    plot_series(
        &dir.join("convergence_growth.svg"),
        "In-growth",
        "g_m (%)",
        &[("g_m", pts(|r| r.growth_percent))],
    )?;
    plot_series(
        &dir.join("convergence_volume.svg"),
        "Lattice volume fraction",
        "V_f",
        &[("V_f", pts(|r| r.volume_fraction))],
    )
}
