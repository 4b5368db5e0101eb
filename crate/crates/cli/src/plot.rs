//! Static SVG renderings of the CSV outputs.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use camdot_core::costmodel::CostReport;
use camdot_core::dotbench::{Case, DotBenchRow};
use camdot_core::tuner::TuneResult;
use camdot_core::{CosineModel, NetworkModel};
use plotters::prelude::*;

const SIZE: (u32, u32) = (800, 500);

fn prepare(dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(name))
}

fn draw_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("plotting: {e:?}")
}

/// Median absolute error against hash length, one line per cosine.
pub fn dotbench(rows: &[DotBenchRow], dir: &Path) -> Result<()> {
    let path = prepare(dir, "dotbench.svg")?;
    let root = SVGBackend::new(&path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let random: Vec<&DotBenchRow> = rows.iter().filter(|r| r.case == Case::Random).collect();
    let kmax = random.iter().map(|r| r.k).max().unwrap_or(1024) as f64;
    let kmin = random.iter().map(|r| r.k).min().unwrap_or(8) as f64;
    let ymax = random.iter().map(|r| r.median_abs_err).fold(0.0f64, f64::max).max(1e-6) * 1.1;
    let mut chart = ChartBuilder::on(&root)
        .caption("median |approx - exact| vs hash length", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((kmin..kmax).log_scale(), 0.0..ymax)
        .map_err(draw_err)?;
    chart.configure_mesh().x_desc("k").y_desc("median abs error").draw().map_err(draw_err)?;
    for (cosine, color) in [(CosineModel::Piecewise, RED), (CosineModel::Exact, BLUE)] {
        let pts: Vec<(f64, f64)> =
            random.iter().filter(|r| r.cosine == cosine).map(|r| (r.k as f64, r.median_abs_err)).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(draw_err)?
            .label(cosine.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled()))).map_err(draw_err)?;
    }
    chart.configure_series_labels().border_style(BLACK).draw().map_err(draw_err)?;
    root.present().map_err(draw_err)
}

/// CAM cycles and systolic baseline cycles per dot-product layer.
pub fn cycles(report: &CostReport, dir: &Path) -> Result<()> {
    let path = prepare(dir, "cycles.svg")?;
    let root = SVGBackend::new(&path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let layers: Vec<_> = report.layers.iter().filter(|l| l.baseline_cycles.is_some()).collect();
    let ymax =
        layers.iter().map(|l| l.cycles.max(l.baseline_cycles.unwrap_or(0))).max().unwrap_or(1).max(1) as f64 * 2.0;
    let n = layers.len().max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("cycles per layer: CAM (red) vs systolic baseline (blue)", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..n, (1.0..ymax).log_scale())
        .map_err(draw_err)?;
    let names: Vec<String> = layers.iter().map(|l| format!("{}", l.layer)).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(layers.len().max(1))
        .x_label_formatter(&|x| names.get(*x as usize).cloned().unwrap_or_default())
        .x_desc("layer")
        .y_desc("cycles")
        .draw()
        .map_err(draw_err)?;
    for (i, l) in layers.iter().enumerate() {
        let x = i as f64;
        let cam = (l.cycles as f64).max(1.0);
        let base = (l.baseline_cycles.unwrap_or(1) as f64).max(1.0);
        chart
            .draw_series([
                Rectangle::new([(x + 0.1, 1.0), (x + 0.45, cam)], RED.filled()),
                Rectangle::new([(x + 0.55, 1.0), (x + 0.9, base)], BLUE.filled()),
            ])
            .map_err(draw_err)?;
    }
    root.present().map_err(draw_err)
}

/// Calibration accuracy per layer against its hash length.
pub fn sensitivity(model: &NetworkModel, r: &TuneResult, dir: &Path) -> Result<()> {
    let path = prepare(dir, "sensitivity.svg")?;
    let root = SVGBackend::new(&path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let s = &r.sensitivity;
    let lo = s.accuracy.iter().flatten().copied().fold(100.0f64, f64::min).min(r.baseline_accuracy - r.tolerance);
    let kmin = *s.candidates.first().unwrap_or(&256) as f64;
    let kmax = *s.candidates.last().unwrap_or(&1024) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("calibration accuracy with one layer shortened", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(kmin - 32.0..kmax + 32.0, (lo - 1.0).max(0.0)..100.0)
        .map_err(draw_err)?;
    chart.configure_mesh().x_desc("k").y_desc("top-1 (%)").draw().map_err(draw_err)?;
    for (d, &layer) in s.layers.iter().enumerate() {
        let color = Palette99::pick(d).to_rgba();
        let pts: Vec<(f64, f64)> = s.candidates.iter().zip(&s.accuracy[d]).map(|(&k, &a)| (k as f64, a)).collect();
        let label = format!("{} {}", layer, model.layers()[layer].kind().name());
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(draw_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    let floor = r.baseline_accuracy - r.tolerance;
    chart
        .draw_series(LineSeries::new([(kmin - 32.0, floor), (kmax + 32.0, floor)], BLACK.stroke_width(1)))
        .map_err(draw_err)?
        .label("tolerance floor")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}
