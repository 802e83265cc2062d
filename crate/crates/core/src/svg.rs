//! Factor maps as standalone SVG 1.1 documents.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{ellipse_outline, ConfidenceEllipsoid, Side};
use crate::io::ResultBundle;

const OUTLINE_POINTS: usize = 128;
const MARGIN: f64 = 56.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvgOptions {
    pub width: f64,
    pub height: f64,
    pub labels: bool,
    pub side: Side,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 640.0,
            labels: true,
            side: Side::Rows,
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Reference points for one side in the two requested dimensions (0-based).
fn reference_points(
    bundle: &ResultBundle,
    side: Side,
    dims: [usize; 2],
) -> Vec<(String, [f64; 2])> {
    let s = &bundle.summary;
    match side {
        Side::Rows => s
            .rows
            .iter()
            .zip(&s.scores)
            .map(|(l, r)| (l.clone(), [r[dims[0]], r[dims[1]]]))
            .collect(),
        Side::Columns => {
            let sv: Vec<f64> = s.eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
            s.columns
                .iter()
                .zip(&s.loadings)
                .map(|(l, r)| {
                    (
                        l.clone(),
                        [r[dims[0]] * sv[dims[0]], r[dims[1]] * sv[dims[1]]],
                    )
                })
                .collect()
        }
    }
}

/// Renders the factor map for a 1-based dimension pair. Ellipses are drawn
/// for every record in the bundle that matches the pair and side.
pub fn render_svg(bundle: &ResultBundle, dims: [usize; 2], options: &SvgOptions) -> Result<String> {
    let rank = bundle.summary.rank;
    if dims[0] == 0 || dims[1] == 0 || dims[0] > rank || dims[1] > rank || dims[0] == dims[1] {
        return Err(Error::InvalidInput(format!(
            "dimension pair {},{} invalid for rank {rank}",
            dims[0], dims[1]
        )));
    }
    if !(options.width > 2.0 * MARGIN && options.height > 2.0 * MARGIN) {
        return Err(Error::InvalidInput("plot is too small".into()));
    }
    let d0 = [dims[0] - 1, dims[1] - 1];
    let points = reference_points(bundle, options.side, d0);

    let mut outlines = Vec::new();
    for rec in bundle
        .ellipses
        .iter()
        .filter(|r| r.side == options.side && r.dims == dims)
    {
        let e = ConfidenceEllipsoid {
            center: DVector::from_row_slice(&rec.center),
            cov: DMatrix::from_row_slice(
                2,
                2,
                &[rec.cov[0][0], rec.cov[0][1], rec.cov[1][0], rec.cov[1][1]],
            ),
            level: rec.level,
            radius2: rec.radius2,
        };
        outlines.push(ellipse_outline(&e, OUTLINE_POINTS)?);
    }

    let (mut lo, mut hi) = ([0.0f64; 2], [0.0f64; 2]);
    for p in points
        .iter()
        .map(|(_, p)| p)
        .chain(outlines.iter().flatten())
    {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for k in 0..2 {
        let pad = 0.08 * (hi[k] - lo[k]).max(1e-12);
        lo[k] -= pad;
        hi[k] += pad;
    }
    let (w, h) = (options.width, options.height);
    let scale = ((w - 2.0 * MARGIN) / (hi[0] - lo[0])).min((h - 2.0 * MARGIN) / (hi[1] - lo[1]));
    let ox = w / 2.0 - scale * (lo[0] + hi[0]) / 2.0;
    let oy = h / 2.0 + scale * (lo[1] + hi[1]) / 2.0;
    let px = |x: f64| ox + scale * x;
    let py = |y: f64| oy - scale * y;

    let pct = &bundle.summary.explained_percent;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{w:.3}" height="{h:.3}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#444"/>"##,
        MARGIN,
        MARGIN,
        w - 2.0 * MARGIN,
        h - 2.0 * MARGIN
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#999" stroke-dasharray="4 3"/>"##,
        MARGIN,
        py(0.0),
        w - MARGIN,
        py(0.0)
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#999" stroke-dasharray="4 3"/>"##,
        px(0.0),
        MARGIN,
        px(0.0),
        h - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="{:.3}" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="13">Dim {} ({:.2}%)</text>"#,
        w / 2.0,
        h - MARGIN / 3.0,
        dims[0],
        pct[d0[0]]
    );
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="{:.3}" y="{:.3}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 {:.3} {:.3})">Dim {} ({:.2}%)</text>"#,
        MARGIN / 2.5,
        h / 2.0,
        MARGIN / 2.5,
        h / 2.0,
        dims[1],
        pct[d0[1]]
    );
    for outline in &outlines {
        let mut d = String::new();
        for (k, p) in outline.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.3} {:.3} ",
                if k == 0 { "M" } else { "L" },
                px(p[0]),
                py(p[1])
            );
        }
        d.push('Z');
        let _ = writeln!(
            out,
            r##"<path class="ellipse" d="{d}" fill="none" stroke="#c0392b" stroke-width="1"/>"##
        );
    }
    for (label, p) in &points {
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="2.5" fill="black"/>"#,
            px(p[0]),
            py(p[1])
        );
        if options.labels {
            let _ = writeln!(
                out,
                r#"<text class="point-label" x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="11">{}</text>"#,
                px(p[0]) + 4.0,
                py(p[1]) - 4.0,
                escape(label)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
