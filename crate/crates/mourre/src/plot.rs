//! Optional SVG figures drawn from the same data as the CSV outputs.

use plotters::prelude::*;

use crate::error::{CliError, CliResult};

const SIZE: (u32, u32) = (720, 480);

fn plot_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Other(format!("plot: {e}"))
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// IPR against energy, with a vertical line at `E₀`.
pub fn ipr_vs_energy(points: &[(f64, f64)], e0: f64) -> CliResult<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let xs = points.iter().map(|p| p.0).chain([e0]).filter(|v| v.is_finite());
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = padded(lo, hi);
        let ymax = points.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-3) * 1.1;
        let mut chart = ChartBuilder::on(&root)
            .caption("IPR against energy", ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(lo..hi, 0.0..ymax)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("energy")
            .y_desc("IPR")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(points.iter().map(|&(x, y)| Circle::new((x, y), 3, BLUE.filled())))
            .map_err(plot_err)?;
        if e0.is_finite() {
            chart
                .draw_series(LineSeries::new([(e0, 0.0), (e0, ymax)], RED.stroke_width(2)))
                .map_err(plot_err)?
                .label("E0")
                .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], RED));
            chart.configure_series_labels().border_style(BLACK).draw().map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Log-log plot of positive samples `(t, value)` with the fitted line.
pub fn loglog(points: &[(f64, f64)], fit: Option<(f64, f64)>, title: &str) -> CliResult<String> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (xl, xh) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (yl, yh) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        let (xl, xh) = if pts.is_empty() { (0.0, 1.0) } else { padded(xl, xh) };
        let (yl, yh) = if pts.is_empty() { (0.0, 1.0) } else { padded(yl, yh) };
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(xl..xh, yl..yh)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("log t")
            .y_desc("log value")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))
            .map_err(plot_err)?;
        if let Some((slope, intercept)) = fit {
            chart
                .draw_series(LineSeries::new(
                    [(xl, intercept + slope * xl), (xh, intercept + slope * xh)],
                    RED.stroke_width(2),
                ))
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Bar chart of a histogram given by bin edges and fractions.
pub fn histogram(edges: &[f64], fraction: &[f64], title: &str) -> CliResult<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let lo = edges.first().copied().unwrap_or(0.0);
        let hi = edges.last().copied().unwrap_or(1.0);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let ymax = fraction.iter().copied().fold(0.0, f64::max).max(1e-3) * 1.1;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(lo..hi, 0.0..ymax)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("energy")
            .y_desc("fraction")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(
                edges
                    .windows(2)
                    .zip(fraction)
                    .map(|(e, &f)| Rectangle::new([(e[0], 0.0), (e[1], f)], BLUE.mix(0.5).filled())),
            )
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}
