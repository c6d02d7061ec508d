//! Draws labeled detection boxes onto a copy of a frame.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use thiserror::Error;

use super::font::{lit, GLYPH_H, GLYPH_W};
use crate::geometry::Detection;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("cannot read frame {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("cannot write snapshot {path}: {reason}")]
    Write { path: PathBuf, reason: String },
}

const PALETTE: [[u8; 3]; 6] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
];

fn color_for(label: &str) -> Rgb<u8> {
    let h = label.bytes().fold(0usize, |acc, b| acc.wrapping_mul(31).wrapping_add(b as usize));
    Rgb(PALETTE[h % PALETTE.len()])
}

/// Text drawn for a detection, e.g. `boar 87%`.
pub fn caption(d: &Detection) -> String {
    format!("{} {:.0}%", d.label, d.confidence * 100.0)
}

/// Writes `<out_dir>/<frame stem>-annotated.<ext>` and returns its path. With
/// no detections the frame is copied byte for byte.
pub fn annotate_snapshot(
    frame_path: &Path,
    detections: &[Detection],
    out_dir: &Path,
) -> Result<PathBuf, AnnotateError> {
    let stem = frame_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".into());
    let ext = frame_path
        .extension()
        .map(|s| s.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_else(|| "jpg".into());
    let out = out_dir.join(format!("{stem}-annotated.{ext}"));
    let write_err = |reason: String| AnnotateError::Write {
        path: out.clone(),
        reason,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(e.to_string()))?;

    if detections.is_empty() {
        if !frame_path.is_file() {
            return Err(AnnotateError::Read {
                path: frame_path.to_path_buf(),
                reason: "not a file".into(),
            });
        }
        std::fs::copy(frame_path, &out).map_err(|e| write_err(e.to_string()))?;
        return Ok(out);
    }

    let mut img = image::open(frame_path)
        .map_err(|e| AnnotateError::Read {
            path: frame_path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_rgb8();
    for d in detections {
        draw_detection(&mut img, d);
    }
    img.save(&out).map_err(|e| write_err(e.to_string()))?;
    Ok(out)
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)` covered by a detection.
pub fn pixel_rect(d: &Detection, w: u32, h: u32) -> (u32, u32, u32, u32) {
    let (x0, y0, x1, y1) = d.bbox.to_pixels(w, h);
    (x0, y0, x1 + 1, y1 + 1)
}

/// Everything drawn stays inside the detection's pixel rectangle.
fn draw_detection(img: &mut RgbImage, d: &Detection) {
    let (w, h) = img.dimensions();
    let (x0, y0, x1, y1) = pixel_rect(d, w, h);
    let color = color_for(d.label.as_str());
    let thick = (w.min(h) / 200).max(2);

    for y in y0..y1 {
        for x in x0..x1 {
            let edge = x < x0 + thick || x + thick >= x1 || y < y0 + thick || y + thick >= y1;
            if edge {
                img.put_pixel(x, y, color);
            }
        }
    }

    let scale = (h / 240).max(1);
    let text = caption(d);
    let pad = scale;
    let bar_h = GLYPH_H * scale + 2 * pad;
    let bar_w = text.chars().count() as u32 * (GLYPH_W + 1) * scale + 2 * pad;
    let (bx0, by0) = (x0 + thick, y0 + thick);
    let bx1 = (bx0 + bar_w).min(x1.saturating_sub(thick));
    let by1 = (by0 + bar_h).min(y1.saturating_sub(thick));
    for y in by0..by1 {
        for x in bx0..bx1 {
            img.put_pixel(x, y, color);
        }
    }
    let ink = Rgb([0, 0, 0]);
    for (i, c) in text.chars().enumerate() {
        let gx = bx0 + pad + i as u32 * (GLYPH_W + 1) * scale;
        for gy in 0..GLYPH_H {
            for gxx in 0..GLYPH_W {
                if !lit(c, gxx, gy) {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let px = gx + gxx * scale + sx;
                        let py = by0 + pad + gy * scale + sy;
                        if px < bx1 && py < by1 {
                            img.put_pixel(px, py, ink);
                        }
                    }
                }
            }
        }
    }
}
