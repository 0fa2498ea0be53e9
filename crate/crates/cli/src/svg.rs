//! Minimal static SVG renderings: line plots and heat maps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn header(out: &mut String, provenance: &str, w: f64, h: f64) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, "<!-- {} -->", provenance.replace("--", "- -"));
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if lo == hi {
        let d = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return Some((lo - d, hi + d));
    }
    Some((lo, hi))
}

fn fmt_tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl LinePlot {
    pub fn render(&self, provenance: &str) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let keep = |&(x, y): &(f64, f64)| (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0);
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| s.points.iter().filter(|p| keep(p)).map(|&(x, y)| (tx(x), ty(y))).collect())
            .collect();
        let (x0, x1) = range(pts.iter().flatten().map(|p| p.0)).unwrap_or((0.0, 1.0));
        let (mut y0, mut y1) = range(pts.iter().flatten().map(|p| p.1)).unwrap_or((0.0, 1.0));
        if self.log_y {
            y0 = y0.floor();
            y1 = y1.ceil().max(y0 + 1.0);
        }
        let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
        let sy = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);
        let mut out = String::new();
        header(&mut out, provenance, W, H);
        let _ = writeln!(out, r#"<text x="{}" y="18" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, esc(&self.title));
        let _ = writeln!(
            out,
            r#"<rect x="{PAD_L}" y="{PAD_T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - PAD_L - PAD_R,
            H - PAD_T - PAD_B
        );
        for i in 0..=4 {
            let x = x0 + (x1 - x0) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" font-family="sans-serif">{}</text>"#,
                sx(x),
                H - PAD_B + 14.0,
                fmt_tick(x, self.log_x)
            );
        }
        let y_ticks: Vec<f64> = if self.log_y {
            (y0 as i64..=y1 as i64).map(|k| k as f64).collect()
        } else {
            (0..=4).map(|i| y0 + (y1 - y0) * i as f64 / 4.0).collect()
        };
        for y in y_ticks {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{}</text>"#,
                PAD_L - 4.0,
                sy(y) + 3.0,
                fmt_tick(y, self.log_y)
            );
            let _ = writeln!(out, r##"<line x1="{PAD_L}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##, W - PAD_R, sy(y), sy(y));
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            W / 2.0,
            H - 10.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(&self.y_label)
        );
        for (k, (s, p)) in self.series.iter().zip(&pts).enumerate() {
            let c = COLORS[k % COLORS.len()];
            if p.is_empty() {
                continue;
            }
            let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            for &(x, y) in p {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#, sx(x), sy(y));
            }
            let ly = PAD_T + 14.0 + 14.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{ly}" font-size="11" fill="{c}" font-family="sans-serif">{}</text>"#,
                W - PAD_R - 150.0,
                esc(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Square heat map of `values` (row-major, y outer) on a shared axis; diverging palette centred at 0.
pub fn heat_map(title: &str, axis: &[f64], values: &[f64], provenance: &str) -> String {
    let n = axis.len();
    let size = 480.0;
    let cell = size / n.max(1) as f64;
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut out = String::new();
    header(&mut out, provenance, size + 120.0, size + 60.0);
    let _ = writeln!(out, r#"<text x="{}" y="18" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#, size / 2.0 + 40.0, esc(title));
    for iy in 0..n {
        for ix in 0..n {
            let v = values[iy * n + ix] / m;
            let (r, g, b) = if v >= 0.0 {
                (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
            } else {
                (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({},{},{})"/>"#,
                40.0 + ix as f64 * cell,
                30.0 + (n - 1 - iy) as f64 * cell,
                cell + 0.05,
                cell + 0.05,
                r.round() as u8,
                g.round() as u8,
                b.round() as u8
            );
        }
    }
    if let (Some(a), Some(b)) = (axis.first(), axis.last()) {
        let _ = writeln!(out, r#"<text x="40" y="{}" font-size="10" font-family="sans-serif">{a}</text>"#, size + 44.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end" font-family="sans-serif">{b}</text>"#, 40.0 + size, size + 44.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="40" font-size="10" font-family="sans-serif">max {m:.3e}</text>"#, size + 48.0);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_deterministic() {
        let p = LinePlot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            log_y: true,
            series: vec![Series { label: "a".into(), points: vec![(1.0, 1e-3), (2.0, 1e-5), (3.0, 0.0)] }],
        };
        let a = p.render("prov");
        assert_eq!(a, p.render("prov"));
        assert!(a.contains("<polyline"));
        assert!(a.starts_with("<svg"));
    }

    #[test]
    fn heat_map_cells() {
        let s = heat_map("w", &[-1.0, 0.0, 1.0], &[0.0, 1.0, -1.0, 0.5, 0.2, 0.1, 0.0, 0.0, 0.0], "prov");
        assert_eq!(s.matches("<rect x=").count(), 9);
    }
}
