//! Minimal deterministic SVG line charts: fixed geometry, fixed palette and
//! fixed number formatting, so identical data renders to identical bytes.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 320.0;
const TITLE_H: f64 = 32.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 40.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// Missing y values break the line.
    pub points: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Fixed y range; computed from the data when `None`.
    pub y_range: Option<(f64, f64)>,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub columns: usize,
    pub panels: Vec<Panel>,
    pub legend: bool,
}

impl Chart {
    pub fn render(&self) -> String {
        let cols = self.columns.max(1);
        let rows = self.panels.len().div_ceil(cols).max(1);
        let width = PANEL_W * cols as f64;
        let height = TITLE_H + PANEL_H * rows as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
            w = num(width),
            h = num(height)
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="21" text-anchor="middle" font-size="15">{}</text>"#,
            num(width / 2.0),
            escape(&self.title)
        );
        for (i, panel) in self.panels.iter().enumerate() {
            let ox = PANEL_W * (i % cols) as f64;
            let oy = TITLE_H + PANEL_H * (i / cols) as f64;
            render_panel(&mut s, panel, ox, oy, self.legend);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn render_panel(s: &mut String, p: &Panel, ox: f64, oy: f64, legend: bool) {
    let (x0, x1) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
    let (y0, y1) = (oy + PANEL_H - MARGIN_B, oy + MARGIN_T);
    let xs = p
        .series
        .iter()
        .flat_map(|se| se.points.iter().map(|pt| pt.0));
    let (xlo, xhi) = padded(range(xs));
    let ys = p
        .series
        .iter()
        .flat_map(|se| se.points.iter().filter_map(|pt| pt.1));
    let (ylo, yhi) = p.y_range.unwrap_or_else(|| padded(range(ys)));
    let sx = |x: f64| x0 + (x - xlo) / (xhi - xlo) * (x1 - x0);
    let sy = |y: f64| y0 - (y - ylo) / (yhi - ylo) * (y0 - y1);

    let _ = writeln!(s, "<g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        num((x0 + x1) / 2.0),
        num(oy + 18.0),
        escape(&p.title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        num(x0),
        num(y1),
        num(x1 - x0),
        num(y0 - y1)
    );
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let xv = xlo + f * (xhi - xlo);
        let yv = ylo + f * (yhi - ylo);
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{a}" x2="{x}" y2="{b}" stroke="#ddd"/><text x="{x}" y="{t}" text-anchor="middle">{l}</text>"##,
            x = num(sx(xv)),
            a = num(y0),
            b = num(y1),
            t = num(y0 + 14.0),
            l = tick(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="#ddd"/><text x="{t}" y="{ty}" text-anchor="end">{l}</text>"##,
            y = num(sy(yv)),
            a = num(x0),
            b = num(x1),
            t = num(x0 - 4.0),
            ty = num(sy(yv) + 4.0),
            l = tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num((x0 + x1) / 2.0),
        num(y0 + 30.0),
        escape(&p.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle" transform="rotate(-90 {x} {y})">{l}</text>"#,
        x = num(ox + 14.0),
        y = num((y0 + y1) / 2.0),
        l = escape(&p.y_label)
    );

    for (i, se) in p.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for segment in se
            .points
            .split(|pt| pt.1.is_none())
            .filter(|seg| !seg.is_empty())
        {
            let pts: Vec<String> = segment
                .iter()
                .map(|&(x, y)| format!("{},{}", num(sx(x)), num(sy(y.expect("split on None")))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
    }
    if legend {
        for (i, se) in p.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let ly = y1 + 12.0 + 14.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{t}" y="{ty}">{l}</text>"#,
                a = num(x0 + 8.0),
                b = num(x0 + 28.0),
                y = num(ly),
                t = num(x0 + 32.0),
                ty = num(ly + 4.0),
                l = escape(&se.label)
            );
        }
    }
    let _ = writeln!(s, "</g>");
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<(f64, f64)>, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .unwrap_or((0.0, 1.0))
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Coordinates with two decimals.
fn num(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick labels with at most four significant digits.
fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.2e}");
    }
    let decimals = (3 - a.log10().floor() as i32).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart {
            title: "t <1>".into(),
            columns: 1,
            legend: true,
            panels: vec![Panel {
                title: "p".into(),
                x_label: "x".into(),
                y_label: "y".into(),
                y_range: None,
                series: vec![Series {
                    label: "a&b".into(),
                    points: vec![
                        (0.0, Some(1.0)),
                        (1.0, None),
                        (2.0, Some(3.0)),
                        (3.0, Some(2.0)),
                    ],
                }],
            }],
        }
    }

    #[test]
    fn rendering_is_deterministic_and_escaped() {
        let a = chart().render();
        assert_eq!(a, chart().render());
        assert!(a.contains("t &lt;1&gt;") && a.contains("a&amp;b"));
        assert!(!a.contains("NaN"));
    }

    #[test]
    fn gaps_split_lines() {
        let svg = chart().render();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn tick_formatting() {
        assert_eq!(tick(0.5), "0.5");
        assert_eq!(tick(200.0), "200");
        assert_eq!(tick(0.123456), "0.1235");
        assert_eq!(tick(1234.6), "1235");
        assert_eq!(tick(1e6), "1.00e6");
        assert_eq!(tick(-2.5), "-2.5");
    }
}
