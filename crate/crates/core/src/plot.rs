//! Self-contained SVG line charts for the benchmark summaries: metric on
//! the y axis against trial size on a log-scaled x axis, one polyline per
//! model. No external assets; identical input yields identical bytes.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::AggregateRecord;
use crate::transport::{Aim, ModelKind};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [(&str, &str); 4] = [
    ("M1", "#1f77b4"),
    ("M2", "#ff7f0e"),
    ("M1_IPW", "#2ca02c"),
    ("M2_IPW", "#d62728"),
];

fn color_for(name: &str) -> &'static str {
    PALETTE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .unwrap_or("#7f7f7f")
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    /// (trial size, metric value) pairs, in x order.
    pub points: Vec<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw_step = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw_step.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw_step)
        .unwrap();
    let mut ticks = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 * step {
        ticks.push(t);
        t += step;
    }
    ticks
}

/// Renders one chart. Non-finite points are dropped; an all-empty series
/// list is an error.
pub fn render_chart(title: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && *x > 0.0 && y.is_finite())
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidInput("no finite data points to plot".into()));
    }
    let (x_lo, x_hi) = points
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    let (y_min, y_max) = points
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), (_, y)| (lo.min(*y), hi.max(*y)));
    let y_lo = y_min.min(0.0);
    let y_hi = if y_max > y_lo { y_max } else { y_lo + 1.0 };
    let (lx_lo, lx_hi) = (x_lo.log10(), x_hi.log10());
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| {
        if lx_hi > lx_lo {
            MARGIN_LEFT + (x.log10() - lx_lo) / (lx_hi - lx_lo) * plot_w
        } else {
            MARGIN_LEFT + 0.5 * plot_w
        }
    };
    let sy = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        MARGIN_LEFT + plot_w / 2.0
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h),
        fmt(MARGIN_LEFT + plot_w),
        fmt(MARGIN_TOP + plot_h)
    ));
    // x ticks: one per distinct trial size
    let mut xs: Vec<f64> = points.iter().map(|(x, _)| *x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    for x in &xs {
        let px = sx(*x);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(px),
            fmt(MARGIN_TOP + plot_h),
            fmt(px),
            fmt(MARGIN_TOP + plot_h + 6.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(MARGIN_TOP + plot_h + 22.0),
            *x as u64
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">trial size (log scale)</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0)
    ));
    // y ticks
    for t in nice_ticks(y_lo, y_hi, 5) {
        let py = sy(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT - 6.0),
            fmt(py),
            fmt(MARGIN_LEFT),
            fmt(py)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 10.0),
            fmt(py + 4.0),
            format!("{t:.3}")
        ));
    }
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{y_label}</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0)
    ));
    // series
    for (si, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .copied()
            .filter(|(x, y)| x.is_finite() && *x > 0.0 && y.is_finite())
            .collect();
        if pts.is_empty() {
            continue;
        }
        let color = color_for(&s.name);
        let coords: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(sx(*x)), fmt(sy(*y))))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        for (x, y) in &pts {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                fmt(sx(*x)),
                fmt(sy(*y))
            ));
        }
        // legend
        let ly = MARGIN_TOP + 16.0 + 20.0 * si as f64;
        let lx = WIDTH - MARGIN_RIGHT + 14.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt(lx),
            fmt(ly - 4.0),
            fmt(lx + 22.0),
            fmt(ly - 4.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt(lx + 28.0),
            fmt(ly),
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Metric columns plotted per chart: (file tag, accessor, axis label).
fn metric_views() -> [(&'static str, fn(&AggregateRecord) -> f64, &'static str); 3] {
    [
        ("mse", |r| r.mse_mean, "mean MSE"),
        ("bias", |r| r.abs_bias_mean, "mean |bias|"),
        ("variance", |r| r.variance_mean, "mean variance"),
    ]
}

/// One SVG per (aim, metric, dim_x1, coef_x2) present in the aggregates.
/// Returns the written paths in deterministic order.
pub fn plot_aggregates(aggregates: &[AggregateRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if aggregates.is_empty() {
        return Err(Error::InvalidInput("no aggregate records to plot".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut keys: Vec<(Aim, usize, u64)> = aggregates
        .iter()
        .map(|r| (r.aim, r.dim_x1, r.coef_x2.to_bits()))
        .collect();
    keys.sort_by_key(|&(aim, d, c)| (aim.name(), d, c));
    keys.dedup();
    let mut written = Vec::new();
    for (aim, dim_x1, coef_bits) in keys {
        let coef_x2 = f64::from_bits(coef_bits);
        for (tag, accessor, label) in metric_views() {
            let mut series = Vec::new();
            for model in ModelKind::ALL {
                let mut pts: Vec<(f64, f64)> = aggregates
                    .iter()
                    .filter(|r| {
                        r.aim == aim
                            && r.dim_x1 == dim_x1
                            && r.coef_x2.to_bits() == coef_bits
                            && r.model == model
                    })
                    .map(|r| (r.trial_size as f64, accessor(r)))
                    .collect();
                if pts.is_empty() {
                    continue;
                }
                pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                series.push(Series {
                    name: model.name().to_string(),
                    points: pts,
                });
            }
            if series.is_empty() {
                continue;
            }
            let title = format!(
                "Aim {} {} (dim_x1={}, coef_x2={})",
                aim.name(),
                label,
                dim_x1,
                coef_x2
            );
            let svg = render_chart(&title, label, &series)?;
            let path = out_dir.join(format!(
                "aim{}_{}_dimx1_{}_cx2_{}.svg",
                aim.name(),
                tag,
                dim_x1,
                coef_x2
            ));
            std::fs::write(&path, svg).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            written.push(path);
        }
    }
    Ok(written)
}
