//! Report emitters: cost-model JSON/CSV, comparison tables, and
//! self-contained SVG line charts, so results stay inspectable without any
//! plotting dependency.

use std::fmt::Write as _;

use anyhow::Result;
use serde_json::json;
use tscm_core::CostReport;

pub fn analyze_json(report: &CostReport) -> Result<String> {
    let layers: Vec<serde_json::Value> = report
        .layers
        .iter()
        .map(|l| {
            json!({
                "name": l.name,
                "weight_shape": l.weight_shape,
                "frames": l.frames,
                "params": l.params,
                "macs": l.macs,
            })
        })
        .collect();
    let value = json!({
        "network": report.network,
        "variant": report.variant,
        "input": format!("{}x{}", report.input_hw.0, report.input_hw.1),
        "frames": report.frames,
        "params": report.params,
        "params_millions": report.params as f64 / 1e6,
        "memory_mib": report.memory_mib(),
        "macs": report.macs,
        "gflops": report.gflops(),
        "layers": layers,
    });
    Ok(serde_json::to_string_pretty(&value)?)
}

pub fn analyze_csv(report: &CostReport) -> String {
    let mut csv = String::from("layer,weight_shape,frames,params,macs\n");
    for l in &report.layers {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            l.name, l.weight_shape, l.frames, l.params, l.macs
        );
    }
    let _ = writeln!(csv, "TOTAL,,,{},{}", report.params, report.macs);
    csv
}

pub fn compare_csv(reports: &[CostReport]) -> String {
    let mut csv = String::from("network,variant,input,frames,params,params_millions,memory_mib,gflops\n");
    for r in reports {
        let _ = writeln!(
            csv,
            "{},{},{}x{},{},{},{:.3},{:.2},{:.1}",
            r.network,
            r.variant,
            r.input_hw.0,
            r.input_hw.1,
            r.frames,
            r.params,
            r.params as f64 / 1e6,
            r.memory_mib(),
            r.gflops()
        );
    }
    csv
}

pub fn summary_line(report: &CostReport) -> String {
    format!(
        "{:<12} {:<12} {:>12} params  {:>8.2} MiB  {:>9.1} GFlops",
        report.network,
        report.variant,
        report.params,
        report.memory_mib(),
        report.gflops()
    )
}

/// One plotted line: a label plus (x, y) points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 55.0;

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag * if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    let mut ticks = Vec::new();
    let mut t = (lo / step).floor() * step;
    while t <= hi + step * 0.5 {
        if t >= lo - step * 0.5 {
            ticks.push(t);
        }
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 && v.abs() < 1e7 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Renders a complete standalone SVG line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let points: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_lo, x_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y_lo, y_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let (x_lo, x_hi) = if points.is_empty() { (0.0, 1.0) } else { (x_lo, x_hi) };
    let (y_lo, y_hi) = if points.is_empty() { (0.0, 1.0) } else { (y_lo, y_hi) };
    let x_hi = if (x_hi - x_lo).abs() < 1e-12 { x_lo + 1.0 } else { x_hi };
    let (y_lo, y_hi) = if (y_hi - y_lo).abs() < 1e-12 {
        (y_lo - 0.5, y_hi + 0.5)
    } else {
        let pad = (y_hi - y_lo) * 0.05;
        (y_lo - pad, y_hi + pad)
    };

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + plot_w / 2.0,
        title
    );

    for t in nice_ticks(y_lo, y_hi) {
        let y = sy(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>",
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(x_lo, x_hi) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#eeeeee\"/>",
            MARGIN_T,
            MARGIN_T + plot_h
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            MARGIN_T + plot_h + 20.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>",
        MARGIN_T + plot_h
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        x_label
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        y_label
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                path.join(" ")
            );
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>",
                    sx(x),
                    sy(y)
                );
            }
        }
        let ly = MARGIN_T + 16.0 * i as f64;
        let lx = MARGIN_L + plot_w + 14.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            ly,
            lx + 18.0,
            ly
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            lx + 24.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}
