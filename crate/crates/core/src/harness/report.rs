//! SVG and CSV summaries of a finished run. Presentation only.

use std::path::{Path, PathBuf};

use super::experiment::{path_stem, Aggregate, RegularityOutput};
use super::formats::record_from_csv;
use super::HarnessError;
use crate::regularity::StructureFunction;

/// Paths drawn in the trajectory plot.
const MAX_DRAWN_PATHS: usize = 50;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with optional log axes; non-positive values are dropped on
/// log axes.
fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool, log_y: bool) -> String {
    let (w, h, margin) = (640.0, 420.0, 60.0);
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| (!log_x || x > 0.0) && (!log_y || y > 0.0) && x.is_finite() && y.is_finite();
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied().filter(keep))
        .map(|(x, y)| (tx(x), ty(y)))
        .collect();
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        w / 2.0,
        svg_escape(title)
    );
    if all.is_empty() {
        out.push_str("<text x=\"320\" y=\"210\" text-anchor=\"middle\">no data</text>\n</svg>\n");
        return out;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let py = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
    out.push_str(&format!(
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * margin,
        h - 2.0 * margin
    ));
    let fmt_tick = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3}") };
    out.push_str(&format!(
        "<text x=\"{margin}\" y=\"{}\">{}</text><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
        h - margin + 16.0,
        fmt_tick(x0, log_x),
        w - margin,
        h - margin + 16.0,
        fmt_tick(x1, log_x)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
        margin - 4.0,
        h - margin,
        fmt_tick(y0, log_y),
        margin - 4.0,
        margin + 10.0,
        fmt_tick(y1, log_y)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        h - 16.0,
        svg_escape(x_label),
        h / 2.0,
        h / 2.0,
        svg_escape(y_label)
    ));
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .copied()
            .filter(keep)
            .map(|(x, y)| format!("{:.2},{:.2}", px(tx(x)), py(ty(y))))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let color = COLORS[k % COLORS.len()];
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-opacity=\"0.7\" points=\"{}\"><title>{}</title></polyline>\n",
            pts.join(" "),
            svg_escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn structure_csv(out: &mut String, sf: &StructureFunction) {
    for (lag, value) in sf.lags.iter().zip(&sf.values) {
        let direction = format!("{:?}", sf.direction).to_lowercase();
        out.push_str(&format!("{direction},{lag},{value}\n"));
    }
}

/// Render summaries of the run in `run_dir` into `out_dir` (default
/// `run_dir/report`). Returns the files written.
pub fn render_report(run_dir: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>, HarnessError> {
    let out_dir = out_dir.map_or_else(|| run_dir.join("report"), Path::to_path_buf);
    std::fs::create_dir_all(&out_dir).map_err(|e| HarnessError::io(&out_dir, e))?;
    let agg_path = run_dir.join("aggregate.json");
    let text = std::fs::read_to_string(&agg_path).map_err(|e| HarnessError::io(&agg_path, e))?;
    let agg: Aggregate = serde_json::from_str(&text).map_err(|e| HarnessError::io(&agg_path, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: String| -> Result<(), HarnessError> {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
        written.push(p);
        Ok(())
    };

    let mut tau_csv = String::from("multiple,threshold,hits,frequency\n");
    for t in &agg.tau {
        tau_csv.push_str(&format!("{},{},{},{}\n", t.multiple, t.threshold, t.hits, t.frequency));
    }
    write("tau.csv", tau_csv)?;
    let tau_series = Series {
        label: "P(tau <= T)".into(),
        points: agg.tau.iter().map(|t| (t.multiple, t.frequency)).collect(),
    };
    write(
        "tau.svg",
        line_chart("Hitting frequency", "R / |u0|", "P(tau_R <= T)", &[tau_series], true, false),
    )?;

    let mut paths = Vec::new();
    for i in 0..agg.paths.min(MAX_DRAWN_PATHS) {
        let p = run_dir.join("paths").join(format!("{}.csv", path_stem(i)));
        if let Ok(text) = std::fs::read_to_string(&p) {
            let rec = record_from_csv(&text).map_err(|e| HarnessError::io(&p, e))?;
            paths.push(Series {
                label: path_stem(i),
                points: rec.times.iter().copied().zip(rec.sup_norm.iter().copied()).collect(),
            });
        }
    }
    write("sup_norm.svg", line_chart("Sup norm", "t", "sup |u|", &paths, false, false))?;

    let reg_path = run_dir.join("regularity.json");
    if let Ok(text) = std::fs::read_to_string(&reg_path) {
        let reg: RegularityOutput = serde_json::from_str(&text).map_err(|e| HarnessError::io(&reg_path, e))?;
        let mut csv = String::from("direction,lag,value\n");
        let mut series = Vec::new();
        for sf in [&reg.space, &reg.time].into_iter().flatten() {
            structure_csv(&mut csv, sf);
            series.push(Series {
                label: format!("{:?}", sf.direction),
                points: sf.lags.iter().copied().zip(sf.values.iter().copied()).collect(),
            });
        }
        write("structure_functions.csv", csv)?;
        write(
            "structure_functions.svg",
            line_chart("Structure functions", "lag", "S_q", &series, true, true),
        )?;
    }
    Ok(written)
}
