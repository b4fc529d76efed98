use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::config::{ExperimentSpec, SweepAxis};
use super::experiment::{AggregateRow, DetailRow, ResultTable, TrialStatus};
use crate::error::{Error, Result};
use crate::optimizer::Method;

pub const DETAIL_HEADER: [&str; 12] = [
    "sweep_value",
    "trial",
    "method",
    "status",
    "total_power_w",
    "transmit_power_w",
    "active_macro_bs",
    "active_pico_bs",
    "active_bs_fc_groups",
    "max_rate_violation_rel",
    "iterations",
    "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 13] = [
    "sweep_value",
    "method",
    "trials",
    "solved",
    "errors",
    "mean_total_power_w",
    "std_total_power_w",
    "mean_transmit_power_w",
    "std_transmit_power_w",
    "mean_active_macro_bs",
    "mean_active_pico_bs",
    "mean_active_bs_fc_groups",
    "mean_iterations",
];

/// 17 significant digits, enough to recover every `f64` exactly.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_detail_csv<W: Write>(rows: &[DetailRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DETAIL_HEADER)?;
    for r in rows {
        w.write_record([
            num(r.sweep_value),
            r.trial.to_string(),
            r.method.name().to_string(),
            r.status.name().to_string(),
            num(r.total_power_w),
            num(r.transmit_power_w),
            r.active_macro_bs.to_string(),
            r.active_pico_bs.to_string(),
            r.active_bs_fc_groups.to_string(),
            num(r.max_rate_violation_rel),
            r.iterations.to_string(),
            num(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = rec.get(i).ok_or_else(|| Error::Dimension(format!("missing column {}", DETAIL_HEADER[i])))?;
    s.parse().map_err(|_| Error::Config(format!("cannot parse '{s}' in column {}", DETAIL_HEADER[i])))
}

pub fn read_detail_csv<R: Read>(input: R) -> Result<Vec<DetailRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(DETAIL_HEADER) {
        return Err(Error::Config("unexpected detail CSV header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(DetailRow {
            sweep_value: field(&rec, 0)?,
            trial: field(&rec, 1)?,
            method: Method::parse(&rec[2])?,
            status: TrialStatus::parse(&rec[3])?,
            total_power_w: field(&rec, 4)?,
            transmit_power_w: field(&rec, 5)?,
            active_macro_bs: field(&rec, 6)?,
            active_pico_bs: field(&rec, 7)?,
            active_bs_fc_groups: field(&rec, 8)?,
            max_rate_violation_rel: field(&rec, 9)?,
            iterations: field(&rec, 10)?,
            wall_ms: field(&rec, 11)?,
        });
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            num(r.sweep_value),
            r.method.name().to_string(),
            r.trials.to_string(),
            r.solved.to_string(),
            r.errors.to_string(),
            num(r.mean_total_power_w),
            num(r.std_total_power_w),
            num(r.mean_transmit_power_w),
            num(r.std_transmit_power_w),
            num(r.mean_active_macro_bs),
            num(r.mean_active_pico_bs),
            num(r.mean_active_bs_fc_groups),
            num(r.mean_iterations),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    /// Renders a 640x420 SVG document. Non-finite points are skipped.
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (80.0, 150.0, 40.0, 60.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|&(x, y)| (tx(x), y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let range = |f: fn(&(f64, f64)) -> f64| {
            let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo <= 1e-12 * lo.abs().max(1.0) {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = range(|p| p.0);
        let (y0, y1) = range(|p| p.1);
        let (pw, ph) = (w - left - right, h - top - bottom);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" font-size="15" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            left + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let xl = if self.log_x { format!("{:.3}", 10f64.powf(xv)) } else { format!("{xv:.3}") };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" font-family="sans-serif">{xl}</text>"#,
                sx(xv),
                top + ph + 16.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" font-family="sans-serif">{yv:.4}</text>"#,
                left - 6.0,
                sy(yv) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            left + pw / 2.0,
            h - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 18 {:.1})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| (tx(x), y))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
            let ly = top + 16.0 + 18.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
                w - right + 10.0,
                w - right + 30.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="12" font-family="sans-serif">{}</text>"#,
                w - right + 36.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Mean exact power against the sweep value, one series per method.
pub fn power_plot(summary: &[AggregateRow], axis: SweepAxis) -> LinePlot {
    let mut methods: Vec<Method> = Vec::new();
    for r in summary {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let series = methods
        .into_iter()
        .map(|m| {
            let mut points: Vec<(f64, f64)> =
                summary.iter().filter(|r| r.method == m).map(|r| (r.sweep_value, r.mean_total_power_w)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: m.name().to_string(), points }
        })
        .collect();
    LinePlot {
        title: "Mean total power".into(),
        x_label: axis.label().into(),
        y_label: "power (W)".into(),
        log_x: axis == SweepAxis::Epsilon,
        series,
    }
}

/// Objective against outer iteration for every method of the first trial
/// at the first sweep value.
pub fn trajectory_plot(table: &ResultTable) -> LinePlot {
    let first = table.trajectories.first().map(|t| (t.sweep_value.to_bits(), t.trial));
    let series = table
        .trajectories
        .iter()
        .filter(|t| Some((t.sweep_value.to_bits(), t.trial)) == first)
        .map(|t| Series {
            name: t.method.name().to_string(),
            points: t.objective.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect(),
        })
        .collect();
    LinePlot {
        title: "Objective per outer iteration".into(),
        x_label: "iteration".into(),
        y_label: "objective (W)".into(),
        log_x: false,
        series,
    }
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::File::create(path)?)
}

/// Writes every output named in `spec.outputs`.
pub fn emit_outputs(table: &ResultTable, spec: &ExperimentSpec) -> Result<()> {
    let o = &spec.outputs;
    let summary = table.aggregate();
    if let Some(p) = &o.detail_csv {
        write_detail_csv(&table.rows, create(p)?)?;
    }
    if let Some(p) = &o.summary_csv {
        write_summary_csv(&summary, create(p)?)?;
    }
    if let Some(p) = &o.power_svg {
        create(p)?.write_all(power_plot(&summary, spec.axis).to_svg().as_bytes())?;
    }
    if let Some(p) = &o.trajectory_svg {
        create(p)?.write_all(trajectory_plot(table).to_svg().as_bytes())?;
    }
    Ok(())
}
