//! Standalone SVG figures: decay curves with error bars and log-log fits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};
use zrp_core::stats::linear_fit;

use crate::error::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Points,
    Line,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Half-widths of vertical error bars.
    pub errors: Option<Vec<f64>>,
    pub mark: Mark,
    pub color: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub notes: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            log,
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            let mults: &[f64] = if b - a <= 4 { &[1.0, 2.0, 5.0] } else { &[1.0] };
            let mut t = Vec::new();
            for e in a..=b {
                for m in mults {
                    let v = m * 10f64.powi(e);
                    let l = v.log10();
                    if l >= self.lo && l <= self.hi {
                        t.push(v);
                    }
                }
            }
            if t.len() < 3 && self.hi - self.lo < 1.0 {
                let (lo, hi) = (10f64.powf(self.lo), 10f64.powf(self.hi));
                let step = nice_step(hi - lo);
                t = ((lo / step).ceil() as i64..=(hi / step).floor() as i64)
                    .map(|i| i as f64 * step)
                    .filter(|&v| v > 0.0)
                    .collect();
            }
            t
        } else {
            let step = nice_step(self.hi - self.lo);
            let mut v = (self.lo / step).ceil() * step;
            let mut t = Vec::new();
            while v <= self.hi + 1e-12 * step {
                t.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
                v += step;
            }
            t
        }
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Figure {
    pub fn to_svg(&self) -> Result<String, CliError> {
        let usable = |s: &Series, i: usize, log_y: bool| -> bool {
            let (x, y) = s.points[i];
            (!self.log_x || x > 0.0) && (!log_y || y > 0.0)
        };
        if self.series.iter().all(|s| s.points.is_empty()) {
            return Err(CliError::Schema("nothing to plot".into()));
        }
        let xs = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .filter(|&x| !self.log_x || x > 0.0);
        let ys = self.series.iter().flat_map(|s| {
            s.points.iter().enumerate().flat_map(move |(i, &(_, y))| {
                let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
                [y - e, y + e]
            })
        });
        let ys: Vec<f64> = ys.filter(|&y| !self.log_y || y > 0.0).collect();
        let ax = Axis::new(xs, self.log_x);
        let ay = Axis::new(ys.into_iter(), self.log_y);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + ax.unit(x) * pw;
        let py = |y: f64| TOP + (1.0 - ay.unit(y)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );
        for t in ax.ticks() {
            let x = px(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#444"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                label(t)
            );
        }
        for t in ay.ticks() {
            let y = py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for series in &self.series {
            let color = PALETTE[series.color % PALETTE.len()];
            let idx: Vec<usize> = (0..series.points.len())
                .filter(|&i| usable(series, i, self.log_y))
                .collect();
            match series.mark {
                Mark::Line => {
                    let pts: Vec<String> = idx
                        .iter()
                        .map(|&i| format!("{:.2},{:.2}", px(series.points[i].0), py(series.points[i].1)))
                        .collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        pts.join(" ")
                    );
                }
                Mark::Points => {
                    for &i in &idx {
                        let (x, y) = series.points[i];
                        if let Some(e) = &series.errors {
                            let lo = if self.log_y { (y - e[i]).max(y * 1e-3) } else { y - e[i] };
                            let _ = writeln!(
                                s,
                                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}"/>"#,
                                px(x),
                                py(lo),
                                py(y + e[i])
                            );
                        }
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                            px(x),
                            py(y)
                        );
                    }
                }
            }
        }
        let mut ly = TOP + 16.0;
        for series in &self.series {
            let color = PALETTE[series.color % PALETTE.len()];
            let x = LEFT + pw - 8.0;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{ly:.1}" text-anchor="end" fill="{color}">{}</text>"#,
                x,
                escape(&series.label)
            );
            ly += 15.0;
        }
        for note in &self.notes {
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{ly:.1}" text-anchor="end" fill="#222">{}</text>"##,
                LEFT + pw - 8.0,
                escape(note)
            );
            ly += 15.0;
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

/// A CSV file read as named string columns.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(CliError::Schema(format!("{}: no data rows", path.display())));
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("missing column `{name}`")))
    }

    pub fn numbers(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<f64>()
                    .map_err(|_| CliError::Schema(format!("column `{name}` row {}: `{}` is not a number", i + 1, r[c])))
            })
            .collect()
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>, CliError> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].clone()).collect())
    }
}

/// Decay curves from a summary table: means with 3-SE bars against the
/// reference, interpolated exponentially between reference points.
pub fn decay_figure(table: &Table) -> Result<Figure, CliError> {
    let t = table.numbers("t")?;
    let value = table.numbers("value")?;
    let reference = table.numbers("reference")?;
    let se = table.numbers("std_error")?;
    let run = table.strings("run_id")?;
    let obs = table.strings("observable")?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in 0..t.len() {
        groups.entry(format!("{} {}", run[i], obs[i])).or_default().push(i);
    }
    let mut fig = Figure {
        title: "Empirical pairing against the heat-equation reference".into(),
        x_label: "t (macroscopic)".into(),
        y_label: "pairing".into(),
        ..Figure::default()
    };
    for (c, (name, mut idx)) in groups.into_iter().enumerate() {
        idx.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
        fig.series.push(Series {
            label: format!("{name} (mean ± 3 SE)"),
            points: idx.iter().map(|&i| (t[i], value[i])).collect(),
            errors: Some(idx.iter().map(|&i| 3.0 * se[i]).collect()),
            mark: Mark::Points,
            color: c,
        });
        let mut curve = Vec::new();
        for w in idx.windows(2) {
            let (t0, t1) = (t[w[0]], t[w[1]]);
            let (r0, r1) = (reference[w[0]], reference[w[1]]);
            let exponential = r0 * r1 > 0.0;
            for k in 0..40 {
                let s = k as f64 / 40.0;
                let r = if exponential {
                    r0 * (r1 / r0).powf(s)
                } else {
                    r0 + (r1 - r0) * s
                };
                curve.push((t0 + (t1 - t0) * s, r));
            }
        }
        if let Some(&last) = idx.last() {
            curve.push((t[last], reference[last]));
        }
        fig.series.push(Series {
            label: format!("{name} reference"),
            points: curve,
            errors: None,
            mark: Mark::Line,
            color: c,
        });
    }
    Ok(fig)
}

/// `y` against `x` on log-log axes, one fitted line per group, annotated with
/// the slope and its 95% t-interval.
pub fn loglog_figure(table: &Table, x: &str, y: &str, group: Option<&str>) -> Result<Figure, CliError> {
    let xs = table.numbers(x)?;
    let ys = table.numbers(y)?;
    let gs = match group {
        Some(g) => table.strings(g)?,
        None => vec![String::new(); xs.len()],
    };
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, g) in gs.into_iter().enumerate() {
        groups.entry(g).or_default().push(i);
    }
    let mut fig = Figure {
        title: format!("{y} against {x}"),
        x_label: x.into(),
        y_label: y.into(),
        log_x: true,
        log_y: true,
        ..Figure::default()
    };
    for (c, (name, idx)) in groups.into_iter().enumerate() {
        let pts: Vec<(f64, f64)> = idx
            .iter()
            .map(|&i| (xs[i], ys[i]))
            .filter(|&(a, b)| a > 0.0 && b > 0.0)
            .collect();
        let prefix = match group {
            Some(g) => format!("{g}={name}"),
            None => y.to_string(),
        };
        fig.series.push(Series {
            label: prefix.clone(),
            points: pts.clone(),
            errors: None,
            mark: Mark::Points,
            color: c,
        });
        if pts.len() >= 2 {
            let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
            let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            let fit = linear_fit(&lx, &ly).map_err(|e| CliError::Schema(e.to_string()))?;
            let half = if pts.len() > 2 {
                let q = StudentsT::new(0.0, 1.0, (pts.len() - 2) as f64)
                    .map(|d| d.inverse_cdf(0.975))
                    .unwrap_or(f64::NAN);
                q * fit.slope_se
            } else {
                f64::NAN
            };
            let (lo, hi) = lx
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let line: Vec<(f64, f64)> = (0..=20)
                .map(|k| {
                    let v = lo + (hi - lo) * k as f64 / 20.0;
                    (v.exp(), (fit.intercept + fit.slope * v).exp())
                })
                .collect();
            fig.series.push(Series {
                label: format!("{prefix} fit"),
                points: line,
                errors: None,
                mark: Mark::Line,
                color: c,
            });
            fig.notes.push(if half.is_finite() {
                format!(
                    "{prefix}: slope {:.3}, 95% CI [{:.3}, {:.3}]",
                    fit.slope,
                    fit.slope - half,
                    fit.slope + half
                )
            } else {
                format!("{prefix}: slope {:.3}", fit.slope)
            });
        }
    }
    Ok(fig)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(header: &[&str], rows: &[&[&str]]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn loglog_recovers_slope() {
        let t = table(
            &["N", "h"],
            &[&["16", "0.0625"], &["32", "0.03125"], &["64", "0.015625"]],
        );
        let fig = loglog_figure(&t, "N", "h", None).unwrap();
        assert!(fig.notes[0].contains("slope -1.000"), "{:?}", fig.notes);
        let svg = fig.to_svg().unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn schema_errors_name_the_column() {
        let t = table(&["t", "value"], &[&["0", "1"]]);
        match decay_figure(&t) {
            Err(CliError::Schema(m)) => assert!(m.contains("reference"), "{m}"),
            other => panic!("{other:?}"),
        }
        let t = table(&["N", "h"], &[&["16", "x"]]);
        match loglog_figure(&t, "N", "h", None) {
            Err(CliError::Schema(m)) => assert!(m.contains("`h`"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ticks_are_round() {
        let a = Axis::new([0.0, 0.05].into_iter(), false);
        let t = a.ticks();
        assert!(t.contains(&0.0) && t.len() >= 3);
        let a = Axis::new([16.0, 128.0].into_iter(), true);
        assert!(a.ticks().contains(&100.0));
    }
}
