//! Minimal SVG line plots with a logarithmic y-axis.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    /// Values at iterations `1, 2, ...`; non-positive or non-finite entries
    /// are not drawn.
    pub values: Vec<f64>,
    /// Marks the last drawn point with a cross.
    pub diverged: bool,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(title: &str, y_label: &str, curves: &[Curve]) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves to plot".into()));
    }
    let drawable = |v: f64| v.is_finite() && v > 0.0;
    let pts = curves.iter().flat_map(|c| c.values.iter().cloned()).filter(|&v| drawable(v));
    let (lo, hi) = pts.fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    let (dlo, mut dhi) = if lo > hi {
        (-1.0, 0.0)
    } else {
        (lo.log10().floor(), hi.log10().ceil())
    };
    if dhi <= dlo {
        dhi = dlo + 1.0;
    }
    let kmax = curves.iter().map(|c| c.values.len()).max().unwrap_or(1).max(2) as f64;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |k: f64| LEFT + (k - 1.0) / (kmax - 1.0) * pw;
    let y = |v: f64| TOP + (dhi - v.log10()) / (dhi - dlo) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title)).unwrap();
    writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##).unwrap();

    let mut d = dlo;
    while d <= dhi + 1e-9 {
        let yy = TOP + (dhi - d) / (dhi - dlo) * ph;
        writeln!(s, r##"<line x1="{LEFT}" y1="{yy:.1}" x2="{}" y2="{yy:.1}" stroke="#ddd"/>"##, LEFT + pw).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{}</text>"#, LEFT - 6.0, yy + 4.0, d as i64).unwrap();
        d += 1.0;
    }
    let step = ((kmax / 10.0).ceil() as usize).max(1);
    let mut k = 1;
    while k as f64 <= kmax {
        let xx = x(k as f64);
        writeln!(s, r#"<text x="{xx:.1}" y="{}" text-anchor="middle">{k}</text>"#, TOP + ph + 18.0).unwrap();
        k += step;
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#, LEFT + pw / 2.0, H - 16.0).unwrap();
    writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut segment = Vec::new();
        let mut last = None;
        let flush = |seg: &mut Vec<(f64, f64)>, s: &mut String| {
            if seg.len() > 1 {
                let p: Vec<String> = seg.iter().map(|(a, b)| format!("{a:.1},{b:.1}")).collect();
                writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, p.join(" ")).unwrap();
            } else if let Some((a, b)) = seg.first() {
                writeln!(s, r#"<circle cx="{a:.1}" cy="{b:.1}" r="2.5" fill="{color}"/>"#).unwrap();
            }
            seg.clear();
        };
        for (j, &v) in c.values.iter().enumerate() {
            if drawable(v) {
                let p = (x((j + 1) as f64), y(v));
                segment.push(p);
                last = Some(p);
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);
        if let (true, Some((a, b))) = (c.diverged, last) {
            writeln!(
                s,
                r#"<path d="M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}" stroke="{color}" stroke-width="2.5"/>"#,
                a - 5.0,
                b - 5.0,
                a + 5.0,
                b + 5.0,
                a - 5.0,
                b + 5.0,
                a + 5.0,
                b - 5.0
            )
            .unwrap();
        }
        let ly = TOP + 12.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 22.0).unwrap();
        let label = if c.diverged {
            format!("{} (diverged)", c.label)
        } else {
            c.label.clone()
        };
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 28.0, ly + 4.0, escape(&label)).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}
