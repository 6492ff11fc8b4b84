//! Static SVG figures for one run: rate and throughput over time, class
//! counts over time, and the per-receiver PDR distribution.

use std::path::Path;

use anyhow::{anyhow, Result};
use mudra::sim::{Summary, Trace};
use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 480);

pub const PLOT_FILES: [&str; 3] = ["rate_throughput.svg", "class_counts.svg", "pdr_cdf.svg"];

fn err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("plotting failed: {e}")
}

pub fn write_plots(dir: &Path, trace: &Trace, summary: &Summary) -> Result<()> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    rate_throughput(&plots.join(PLOT_FILES[0]), trace)?;
    class_counts(&plots.join(PLOT_FILES[1]), trace)?;
    pdr_cdf(&plots.join(PLOT_FILES[2]), summary)?;
    Ok(())
}

fn horizon(trace: &Trace) -> f64 {
    (trace.frames.len() as f64 * trace.interval_s).max(trace.interval_s)
}

fn rate_throughput(path: &Path, trace: &Trace) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} / {}: rate and throughput", trace.scenario, trace.controller.as_str()), ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0.0..horizon(trace), 0.0..60.0)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("time (s)")
        .y_desc("Mbps")
        .draw()
        .map_err(err)?;
    let rate = trace.frames.iter().map(|f| (f.time_s, f64::from(f.rate.mbps())));
    chart
        .draw_series(LineSeries::new(rate, &BLUE))
        .map_err(err)?
        .label("multicast rate")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLUE));
    let thr = trace
        .frames
        .iter()
        .map(|f| (f.time_s, f.delivered_bits as f64 / trace.interval_s / 1e6));
    chart
        .draw_series(LineSeries::new(thr, &RED))
        .map_err(err)?
        .label("throughput")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], RED));
    let oracle = trace.frames.iter().map(|f| (f.time_s, f64::from(f.oracle_rate.mbps())));
    chart
        .draw_series(LineSeries::new(oracle, BLACK.mix(0.4)))
        .map_err(err)?
        .label("oracle rate")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLACK.mix(0.4)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

fn class_counts(path: &Path, trace: &Trace) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let top = trace
        .frames
        .iter()
        .map(|f| f.true_abnormal + f.true_mid)
        .max()
        .unwrap_or(0)
        .max(10) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} / {}: abnormal and mid-PDR receivers", trace.scenario, trace.controller.as_str()), ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0.0..horizon(trace), 0.0..top * 1.1)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("time (s)")
        .y_desc("receivers")
        .draw()
        .map_err(err)?;
    let series: [(&str, RGBColor, fn(&mudra::MetricsFrame) -> f64); 3] = [
        ("abnormal", RED, |f| f64::from(f.true_abnormal)),
        ("mid-PDR", BLUE, |f| f64::from(f.true_mid)),
        ("A_max", BLACK, |f| f64::from(f.a_max)),
    ];
    for (label, color, value) in series {
        chart
            .draw_series(LineSeries::new(trace.frames.iter().map(|f| (f.time_s, value(f))), &color))
            .map_err(err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

fn pdr_cdf(path: &Path, summary: &Summary) -> Result<()> {
    let mut pdrs: Vec<f64> = summary.node_mean_pdr.iter().flatten().copied().collect();
    pdrs.sort_by(f64::total_cmp);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} / {}: PDR distribution", summary.scenario, summary.controller.as_str()), ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0.0..1.0, 0.0..1.0)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("mean PDR")
        .y_desc("fraction of receivers")
        .draw()
        .map_err(err)?;
    let n = pdrs.len().max(1) as f64;
    let steps = pdrs
        .iter()
        .enumerate()
        .flat_map(|(i, &p)| [(p, i as f64 / n), (p, (i + 1) as f64 / n)]);
    chart.draw_series(LineSeries::new(steps, &BLUE)).map_err(err)?;
    root.present().map_err(err)
}
