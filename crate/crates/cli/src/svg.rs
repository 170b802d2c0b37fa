//! Minimal SVG plots: polygons, polylines and grid cells in world
//! coordinates, drawn with the y axis pointing up.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 30.0;

#[derive(Debug, Clone)]
enum Item {
    Polygon { pts: Vec<[f64; 2]>, stroke: String, fill: String, dash: bool },
    Polyline { pts: Vec<[f64; 2]>, stroke: String },
    Cells { centers: Vec<[f64; 2]>, w: f64, h: f64, fill: String },
    Point { at: [f64; 2], color: String },
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    title: String,
    items: Vec<Item>,
    legend: Vec<(String, String)>,
}

impl Plot {
    pub fn new(title: &str) -> Self {
        Plot {
            title: title.to_string(),
            ..Default::default()
        }
    }

    pub fn polygon(&mut self, pts: Vec<[f64; 2]>, stroke: &str, fill: &str, dash: bool, label: &str) {
        if pts.len() >= 2 {
            self.items.push(Item::Polygon {
                pts,
                stroke: stroke.into(),
                fill: fill.into(),
                dash,
            });
            self.label(stroke, label);
        }
    }

    pub fn polyline(&mut self, pts: Vec<[f64; 2]>, stroke: &str, label: &str) {
        if !pts.is_empty() {
            self.items.push(Item::Polyline { pts, stroke: stroke.into() });
            self.label(stroke, label);
        }
    }

    pub fn cells(&mut self, centers: Vec<[f64; 2]>, w: f64, h: f64, fill: &str, label: &str) {
        if !centers.is_empty() {
            self.items.push(Item::Cells {
                centers,
                w,
                h,
                fill: fill.into(),
            });
            self.label(fill, label);
        }
    }

    pub fn point(&mut self, at: [f64; 2], color: &str, label: &str) {
        self.items.push(Item::Point { at, color: color.into() });
        self.label(color, label);
    }

    fn label(&mut self, color: &str, label: &str) {
        if !label.is_empty() && !self.legend.iter().any(|(_, l)| l == label) {
            self.legend.push((color.into(), label.into()));
        }
    }

    fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut grow = |p: [f64; 2], pad: [f64; 2]| {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i] - pad[i]);
                hi[i] = hi[i].max(p[i] + pad[i]);
            }
        };
        for item in &self.items {
            match item {
                Item::Polygon { pts, .. } | Item::Polyline { pts, .. } => pts.iter().for_each(|&p| grow(p, [0.0; 2])),
                Item::Cells { centers, w, h, .. } => centers.iter().for_each(|&p| grow(p, [w / 2.0, h / 2.0])),
                Item::Point { at, .. } => grow(*at, [0.0; 2]),
            }
        }
        (lo[0].is_finite() && hi[0] > lo[0] - 1e-300).then_some((lo, hi))
    }

    pub fn render(&self) -> String {
        let (lo, hi) = self.bounds().unwrap_or(([0.0, 0.0], [1.0, 1.0]));
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let scale = (WIDTH - 2.0 * MARGIN) / span;
        let height = (hi[1] - lo[1]) * scale + 2.0 * MARGIN + 20.0 + 16.0 * self.legend.len() as f64;
        let tx = |p: [f64; 2]| -> (f64, f64) { (MARGIN + (p[0] - lo[0]) * scale, MARGIN + 20.0 + (hi[1] - p[1]) * scale) };
        let path = |pts: &[[f64; 2]]| -> String {
            pts.iter()
                .map(|&p| {
                    let (x, y) = tx(p);
                    format!("{x:.2},{y:.2}")
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.0}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{MARGIN}" y="18" font-family="sans-serif" font-size="13">{}</text>"#, escape(&self.title));
        for item in &self.items {
            match item {
                Item::Cells { centers, w, h, fill } => {
                    let _ = writeln!(s, r#"<g fill="{fill}" fill-opacity="0.5">"#);
                    for &c in centers {
                        let (x, y) = tx([c[0] - w / 2.0, c[1] + h / 2.0]);
                        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}"/>"#, w * scale, h * scale);
                    }
                    let _ = writeln!(s, "</g>");
                }
                Item::Polygon { pts, stroke, fill, dash } => {
                    let d = if *dash { r#" stroke-dasharray="6 3""# } else { "" };
                    let _ = writeln!(s, r#"<polygon points="{}" stroke="{stroke}" fill="{fill}" fill-opacity="0.15" stroke-width="1.5"{d}/>"#, path(pts));
                }
                Item::Polyline { pts, stroke } => {
                    let _ = writeln!(s, r#"<polyline points="{}" stroke="{stroke}" fill="none" stroke-width="1.2"/>"#, path(pts));
                }
                Item::Point { at, color } => {
                    let (x, y) = tx(*at);
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                }
            }
        }
        let base = height - 16.0 * self.legend.len() as f64 - 4.0;
        for (k, (color, label)) in self.legend.iter().enumerate() {
            let y = base + 16.0 * k as f64;
            let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{:.0}" width="10" height="10" fill="{color}"/>"#, y);
            let _ = writeln!(s, r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11">{}</text>"#, MARGIN + 16.0, y + 9.0, escape(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Order planar points counter-clockwise about their centroid.
pub fn ccw(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len().max(1) as f64;
    let c = points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let mut out = points.to_vec();
    out.sort_by(|a, b| {
        let ta = (a[1] - c[1]).atan2(a[0] - c[0]);
        let tb = (b[1] - c[1]).atan2(b[0] - c[0]);
        ta.total_cmp(&tb)
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_items() {
        let mut p = Plot::new("a < b");
        p.polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], "blue", "none", false, "inner");
        p.polyline(vec![[0.0, 0.0], [2.0, 2.0]], "black", "line");
        p.cells(vec![[0.5, 0.5]], 0.1, 0.1, "red", "cells");
        p.point([1.0, 1.0], "green", "");
        let svg = p.render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("<polygon") && svg.contains("<polyline") && svg.contains("<circle"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("font-size=\"11\"").count(), 3);
    }

    #[test]
    fn ccw_orders_by_angle() {
        let pts = ccw(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        assert_eq!(pts, vec![[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]);
    }
}
