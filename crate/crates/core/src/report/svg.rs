use std::fmt::Write;

use super::ReportError;

/// p-value cut-offs for the overlaid glyphs: "o" below `circle_below`,
/// "\" below `backslash_below`. A cell can carry both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphPolicy {
    pub circle_below: f64,
    pub backslash_below: f64,
}

impl Default for GlyphPolicy {
    fn default() -> Self {
        Self {
            circle_below: 0.05,
            backslash_below: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeatmapOptions {
    pub title: String,
    /// Symmetric colour bound; defaults to the largest finite |value|.
    pub scale: Option<f64>,
    pub glyphs: GlyphPolicy,
}

const NEGATIVE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const POSITIVE: (f64, f64, f64) = (178.0, 24.0, 43.0);
const MISSING: &str = "#cccccc";

/// Colour for `value` on a scale spanning [-bound, bound]: linear blend from
/// white at 0 toward red (positive) or blue (negative), saturating at the
/// bound. Non-finite values map to grey.
pub fn diverging_color(value: f64, bound: f64) -> String {
    if !value.is_finite() {
        return MISSING.to_string();
    }
    let t = if bound > 0.0 && bound.is_finite() {
        (value / bound).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let end = if t >= 0.0 { POSITIVE } else { NEGATIVE };
    let a = t.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

pub fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

const CELL: usize = 36;
const CHAR_W: usize = 7;

/// Standalone SVG heatmap of `values` with significance glyphs from `p_values`.
pub fn render_heatmap_svg(
    values: &[Vec<f64>],
    p_values: &[Vec<f64>],
    row_labels: &[String],
    col_labels: &[String],
    options: &HeatmapOptions,
) -> Result<String, ReportError> {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    let shape = |g: &[Vec<f64>]| (g.len(), g.first().map_or(0, Vec::len));
    if values.iter().any(|r| r.len() != cols)
        || p_values.len() != rows
        || p_values.iter().any(|r| r.len() != cols)
    {
        return Err(ReportError::ShapeMismatch {
            values: shape(values),
            p_values: shape(p_values),
        });
    }
    if row_labels.len() != rows {
        return Err(ReportError::LabelMismatch {
            what: "rows",
            expected: rows,
            got: row_labels.len(),
        });
    }
    if col_labels.len() != cols {
        return Err(ReportError::LabelMismatch {
            what: "columns",
            expected: cols,
            got: col_labels.len(),
        });
    }
    let bound = options.scale.unwrap_or_else(|| {
        values
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    });

    let label_w = row_labels
        .iter()
        .map(|l| l.chars().count())
        .max()
        .unwrap_or(0)
        * CHAR_W
        + 12;
    let header_h = col_labels
        .iter()
        .map(|l| l.chars().count())
        .max()
        .unwrap_or(0)
        * CHAR_W
        * 3
        / 4
        + 40;
    let legend_h = 40;
    let width = label_w + cols * CELL + 20;
    let height = header_h + rows * CELL + legend_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<title>{}</title>", xml_escape(&options.title));
    let _ = writeln!(
        s,
        r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="14" font-size="13" font-weight="bold">{}</text>"#,
        xml_escape(&options.title)
    );
    for (j, label) in col_labels.iter().enumerate() {
        let x = label_w + j * CELL + CELL / 2;
        let y = header_h - 6;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" transform="rotate(-45 {x} {y})">{}</text>"#,
            xml_escape(label)
        );
    }
    for (i, label) in row_labels.iter().enumerate() {
        let y = header_h + i * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6,
            y + CELL / 2 + 4,
            xml_escape(label)
        );
        for j in 0..cols {
            let x = label_w + j * CELL;
            let v = values[i][j];
            let p = p_values[i][j];
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#888888" stroke-width="0.5"><title>{} (p={})</title></rect>"##,
                diverging_color(v, bound),
                fmt_num(v),
                fmt_num(p)
            );
            if p < options.glyphs.circle_below {
                let _ = writeln!(
                    s,
                    r#"<text class="glyph-circle" x="{}" y="{}" text-anchor="middle" font-size="16">o</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 5
                );
            }
            if p < options.glyphs.backslash_below {
                let _ = writeln!(
                    s,
                    r#"<text class="glyph-backslash" x="{}" y="{}" text-anchor="middle" font-size="22">\</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 7
                );
            }
        }
    }
    let ly = header_h + rows * CELL + 12;
    for (k, t) in [-1.0, -0.5, 0.0, 0.5, 1.0].iter().enumerate() {
        let x = label_w + k * 28;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{ly}" width="28" height="10" fill="{}"/>"#,
            diverging_color(t * bound, bound)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">scale ±{}; o p&lt;{}, \ p&lt;{}</text>"#,
        label_w,
        ly + 24,
        fmt_num(bound),
        options.glyphs.circle_below,
        options.glyphs.backslash_below
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "n/a".to_string()
    }
}
