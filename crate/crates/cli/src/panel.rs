//! Figure panels: a grid of grayscale saliency maps written as one
//! static PNG, ground truth in the left column and the model's
//! prediction in the right, one row per trial.

use std::path::Path;

use image::{GrayImage, Luma};
use neurosal::error::{Error, Result};
use neurosal::ndarray::Array2;

/// Integer upscale so an 81 px map is legible.
const SCALE: u32 = 3;
/// Gap between cells and around the sheet, in output pixels.
const GUTTER: u32 = 4;

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders `rows` of (ground truth, prediction) pairs. All maps must
/// share one shape.
pub fn render(rows: &[(Array2<f64>, Array2<f64>)], path: &Path) -> Result<()> {
    let (h, w) = rows
        .first()
        .map(|(gt, _)| gt.dim())
        .ok_or_else(|| Error::input("a figure panel needs at least one row"))?;
    let cell_h = h as u32 * SCALE;
    let cell_w = w as u32 * SCALE;
    let width = 2 * cell_w + 3 * GUTTER;
    let height = rows.len() as u32 * cell_h + (rows.len() as u32 + 1) * GUTTER;
    let mut sheet = GrayImage::from_pixel(width, height, Luma([255u8]));

    for (row, (gt, pred)) in rows.iter().enumerate() {
        for (col, map) in [gt, pred].into_iter().enumerate() {
            if map.dim() != (h, w) {
                return Err(Error::input("panel maps disagree on shape"));
            }
            let x0 = GUTTER + col as u32 * (cell_w + GUTTER);
            let y0 = GUTTER + row as u32 * (cell_h + GUTTER);
            for (r, c_) in (0..h).flat_map(|r| (0..w).map(move |c| (r, c))) {
                let v = to_u8(map[[r, c_]]);
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        sheet.put_pixel(
                            x0 + c_ as u32 * SCALE + dx,
                            y0 + r as u32 * SCALE + dy,
                            Luma([v]),
                        );
                    }
                }
            }
        }
    }

    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    sheet.save(path).map_err(|e| {
        Error::Io(std::io::Error::other(format!(
            "cannot write panel {}: {e}",
            path.display()
        )))
    })
}
