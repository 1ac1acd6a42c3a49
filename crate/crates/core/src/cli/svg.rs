//! Minimal standalone SVG line/scatter charts.

use std::fmt::Write as _;

use super::format::sig;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 46.0;
/// Cap on drawn points per series.
const MAX_POINTS: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
    /// Vertical stems from zero.
    Stems,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub style: Style,
}

#[derive(Clone, Debug, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed horizontal reference lines.
    pub h_lines: Vec<f64>,
    /// Dashed vertical markers with a label.
    pub v_lines: Vec<(f64, String)>,
    pub notes: Vec<String>,
    pub log_y: bool,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn ty(&self, v: f64) -> f64 {
        if self.log_y {
            v.max(1e-300).log10()
        } else {
            v
        }
    }

    fn render_at(&self, out: &mut String, top: f64) {
        let (x0, x1) = bounds(self.series.iter().flat_map(|s| s.xs.iter().copied()).chain(self.v_lines.iter().map(|v| v.0)));
        let (y0, y1) = bounds(
            self.series
                .iter()
                .flat_map(|s| s.ys.iter().map(|&v| self.ty(v)))
                .chain(self.h_lines.iter().map(|&v| self.ty(v))),
        );
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| top + MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="15" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            top + 22.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_L}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
            top + MARGIN_T
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let label_y = if self.log_y { format!("1e{}", sig(fy, 3)) } else { sig(fy, 4) };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                px(fx),
                top + HEIGHT - MARGIN_B + 16.0,
                sig(fx, 4)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
                MARGIN_L - 6.0,
                py(fy) + 4.0,
                label_y
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            top + HEIGHT - 8.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            top + MARGIN_T + ph / 2.0,
            top + MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );

        for &h in &self.h_lines {
            let y = py(self.ty(h));
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#888" stroke-dasharray="5,4"/>"##,
                MARGIN_L + pw
            );
        }
        for (x, label) in &self.v_lines {
            let x = px(*x);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{:.1}" x2="{x:.2}" y2="{:.1}" stroke="#c33" stroke-dasharray="5,4"/>"##,
                top + MARGIN_T,
                top + MARGIN_T + ph
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#c33">{}</text>"##,
                x + 4.0,
                top + MARGIN_T + 14.0,
                escape(label)
            );
        }

        for s in &self.series {
            let stride = s.xs.len().div_ceil(MAX_POINTS).max(1);
            let pts = s.xs.iter().zip(&s.ys).step_by(stride).filter(|(x, y)| x.is_finite() && y.is_finite());
            match s.style {
                Style::Line => {
                    let coords: Vec<String> =
                        pts.map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(self.ty(y)))).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                        s.color,
                        coords.join(" ")
                    );
                }
                Style::Points => {
                    for (&x, &y) in pts {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{}" fill-opacity="0.6"/>"#,
                            px(x),
                            py(self.ty(y)),
                            s.color
                        );
                    }
                }
                Style::Stems => {
                    let base = py(0.0f64.clamp(y0, y1));
                    for (&x, &y) in pts {
                        let _ = writeln!(
                            out,
                            r#"<line x1="{0:.2}" y1="{base:.2}" x2="{0:.2}" y2="{1:.2}" stroke="{2}" stroke-width="2"/>"#,
                            px(x),
                            py(self.ty(y)),
                            s.color
                        );
                    }
                }
            }
        }

        let mut ly = top + MARGIN_T + 16.0;
        for s in &self.series {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{}" text-anchor="end">{}</text>"#,
                MARGIN_L + pw - 8.0,
                s.color,
                escape(&s.name)
            );
            ly += 14.0;
        }
        for note in &self.notes {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{ly:.1}" font-size="12" text-anchor="end">{}</text>"#,
                MARGIN_L + pw - 8.0,
                escape(note)
            );
            ly += 15.0;
        }
    }
}

/// Render charts stacked vertically into one document.
pub fn render(charts: &[Chart]) -> String {
    let total = HEIGHT * charts.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total}" viewBox="0 0 {WIDTH} {total}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, c) in charts.iter().enumerate() {
        c.render_at(&mut out, HEIGHT * i as f64);
    }
    out.push_str("</svg>\n");
    out
}
