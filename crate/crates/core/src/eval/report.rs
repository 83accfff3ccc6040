//! CSV tables and SVG heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{CrossEvalMatrix, EvalError};

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io { path: path.display().to_string(), source }
}

/// Matrix as CSV: a header of relation names, then one row per decoder.
pub fn matrix_csv(m: &CrossEvalMatrix) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend(m.names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in m.names.iter().zip(&m.entries) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io { path: "<memory>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Rows serialized with their field names as the header.
pub fn table_csv<T: Serialize>(rows: &[T]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io { path: "<memory>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), EvalError> {
    let path = path.as_ref();
    crate::store::write_atomic(path, text.as_bytes()).map_err(|e| io_err(path, e))
}

/// Linear ramp from white (0) to `#08306b` (1); inputs are clamped to `[0, 1]`.
pub fn ramp_color(v: f64) -> String {
    let t = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let lerp = |hi: u8| (255.0 + t * (hi as f64 - 255.0)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(0x08), lerp(0x30), lerp(0x6b))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const CELL: usize = 44;
const MARGIN: usize = 180;

/// Heatmap with one annotated cell per entry, laid out in the matrix's stored order.
pub fn heatmap_svg(m: &CrossEvalMatrix) -> String {
    let k = m.k();
    let side = MARGIN + k * CELL + 10;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{side}" height="{side}" fill="white"/>"#);
    for (i, name) in m.names.iter().enumerate() {
        let c = MARGIN + i * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{}" y="{c}" text-anchor="end" dominant-baseline="middle">{}</text>"#, MARGIN - 6, escape(name));
        let _ = writeln!(
            s,
            r#"<text x="{c}" y="{}" text-anchor="start" transform="rotate(-60 {c} {})">{}</text>"#,
            MARGIN - 6,
            MARGIN - 6,
            escape(name)
        );
    }
    for (j, row) in m.entries.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            let (x, y) = (MARGIN + l * CELL, MARGIN + j * CELL);
            let ink = if v > 0.5 { "white" } else { "black" };
            let _ = writeln!(s, r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#cccccc"/>"##, ramp_color(v));
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" fill="{ink}">{v:.2}</text>"#,
                x + CELL / 2,
                y + CELL / 2
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
