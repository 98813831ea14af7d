//! Self-contained SVG renderings: a line plot for profiles and a heatmap for
//! overlap matrices. No scripts, fonts or external references.

use std::fmt::Write;

use super::export::fmt_sig9;
use super::{OverlapMatrix, SpectralProfile};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => {}
            c => out.push(c),
        }
    }
    out
}

fn coord(v: f64) -> String {
    format!("{v:.2}")
}

/// Weight (0 to 1) against frequency index. An optional envelope is drawn as
/// a shaded band behind the lines.
pub fn profile_svg(profiles: &[SpectralProfile], envelope: Option<(&[f64], &[f64])>) -> String {
    let (w, h) = (720.0, 360.0);
    let (left, right, top, bottom) = (50.0, 150.0, 20.0, 40.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let m = profiles
        .iter()
        .map(SpectralProfile::len)
        .chain(envelope.map(|e| e.0.len()))
        .max()
        .unwrap_or(1)
        .max(2);
    let x = |k: usize| left + pw * k as f64 / (m - 1) as f64;
    let y = |v: f64| top + ph * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if let Some((lo, hi)) = envelope {
        let mut pts: Vec<String> = hi.iter().enumerate().map(|(k, &v)| format!("{},{}", coord(x(k)), coord(y(v)))).collect();
        pts.extend(lo.iter().enumerate().rev().map(|(k, &v)| format!("{},{}", coord(x(k)), coord(y(v)))));
        let _ = writeln!(s, r##"<polygon points="{}" fill="#999999" fill-opacity="0.3" stroke="none"/>"##, pts.join(" "));
    }
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for (v, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{label}</text>"#,
            left - 6.0,
            coord(y(v) + 4.0)
        );
    }
    for k in [0, m / 4, m / 2, 3 * m / 4, m - 1] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{k}</text>"#,
            coord(x(k)),
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">frequency</text>"#,
        left + pw / 2.0,
        h - 6.0
    );
    for (i, p) in profiles.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = p
            .weights
            .iter()
            .enumerate()
            .map(|(k, &v)| format!("{},{}", coord(x(k)), coord(y(v))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            left + pw + 10.0,
            left + pw + 28.0,
            left + pw + 32.0,
            ly + 4.0,
            escape(&p.display_label())
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Cells shaded from white (0) to dark blue (100), annotated with rounded values.
pub fn matrix_svg(matrix: &OverlapMatrix) -> String {
    let n = matrix.size();
    let cell = 48.0;
    let margin = 120.0;
    let size = margin + cell * n as f64 + 10.0;
    let rounded = matrix.rounded();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    for (i, label) in matrix.labels.iter().enumerate() {
        let c = margin + cell * (i as f64 + 0.5);
        let label = escape(label);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{label}</text>"#,
            margin - 6.0,
            c + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{c}" y="{}" font-size="11" text-anchor="start" transform="rotate(-45 {c} {})">{label}</text>"#,
            margin - 6.0,
            margin - 6.0
        );
    }
    for (i, (values, whole)) in matrix.values.iter().zip(&rounded).enumerate() {
        for (j, (&v, r)) in values.iter().zip(whole).enumerate() {
            let t = (v / 100.0).clamp(0.0, 1.0);
            let shade = |full: f64| (255.0 + (full - 255.0) * t).round() as u8;
            let fill = format!("#{:02x}{:02x}{:02x}", shade(8.0), shade(48.0), shade(107.0));
            let text = if t > 0.5 { "white" } else { "black" };
            let (x0, y0) = (margin + cell * j as f64, margin + cell * i as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x0}" y="{y0}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"><title>{}</title></rect>"#,
                fmt_sig9(v)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" fill="{text}">{}</text>"#,
                x0 + cell / 2.0,
                y0 + cell / 2.0 + 4.0,
                r
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
