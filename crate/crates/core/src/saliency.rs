//! Ground-truth visual attention maps built from gaze positions.
//!
//! Gaze points stamp accuracy disks onto a 45 x 81 grid, the counts are
//! Gaussian-blurred and rescaled to a peak of 1, and the map is padded
//! with empty bands to the square 81 x 81 shape the decoder produces.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::signal::GazePoint;
use ndarray::Array2;
use rand::Rng as _;

/// Content rows of an unpadded map.
pub const SALIENCY_HEIGHT: usize = 45;
/// Content columns; also the side of the padded square.
pub const SALIENCY_WIDTH: usize = 81;
/// Zero rows added above and below the content band: 18 + 45 + 18 = 81.
pub const PAD_ROWS: usize = 18;

/// A per-trial attention map with values in [0, 1].
#[derive(Debug, Clone)]
pub struct SaliencyMap {
    /// [45 x 81] content, or [81 x 81] once padded.
    pub pixels: Array2<f64>,
    pub is_padded: bool,
    /// Number of gaze points the map was built from. Zero marks the
    /// degenerate all-zero map of a trial without usable gaze.
    pub n_gaze_points: usize,
    pub trial_id: usize,
}

/// Pixel indices (row, col) of a gaze position on the content grid.
/// (0.5, 0.5) lands on (22, 40); coordinates at the far edge clamp to
/// the last row or column.
pub fn gaze_pixel(x: f64, y: f64) -> [usize; 2] {
    let row = ((y * SALIENCY_HEIGHT as f64) as usize).min(SALIENCY_HEIGHT - 1);
    let col = ((x * SALIENCY_WIDTH as f64) as usize).min(SALIENCY_WIDTH - 1);
    [row, col]
}

/// Fixated pixels of a trial on the padded square grid, one entry per
/// gaze point, duplicates preserved. Used as ground truth by the
/// evaluation metrics, which see predictions at the padded resolution.
pub fn fixation_pixels(gaze: &[GazePoint]) -> Vec<[usize; 2]> {
    gaze.iter()
        .map(|g| {
            let [r, c] = gaze_pixel(g.x, g.y);
            [r + PAD_ROWS, c]
        })
        .collect()
}

/// Stamps one filled disk of the tracker-accuracy radius per gaze point,
/// accumulating counts. An empty gaze list yields the all-zero map,
/// flagged through `n_gaze_points`.
pub fn rasterize_fixations(
    gaze: &[GazePoint],
    error_radius_px: f64,
    trial_id: usize,
) -> Result<SaliencyMap> {
    if !(error_radius_px > 0.0) {
        return Err(Error::config(format!(
            "error radius must be positive, got {error_radius_px}"
        )));
    }
    for g in gaze {
        if !(0.0..=1.0).contains(&g.x) || !(0.0..=1.0).contains(&g.y) {
            return Err(Error::input(format!(
                "gaze point ({}, {}) outside the unit square",
                g.x, g.y
            )));
        }
    }
    let mut pixels = Array2::zeros((SALIENCY_HEIGHT, SALIENCY_WIDTH));
    let reach = error_radius_px.floor() as i64;
    let r2 = error_radius_px * error_radius_px;
    for g in gaze {
        let [row, col] = gaze_pixel(g.x, g.y);
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if (dr * dr + dc * dc) as f64 > r2 {
                    continue;
                }
                let (r, c) = (row as i64 + dr, col as i64 + dc);
                if (0..SALIENCY_HEIGHT as i64).contains(&r) && (0..SALIENCY_WIDTH as i64).contains(&c)
                {
                    pixels[[r as usize, c as usize]] += 1.0;
                }
            }
        }
    }
    Ok(SaliencyMap {
        pixels,
        is_padded: false,
        n_gaze_points: gaze.len(),
        trial_id,
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let reach = (4.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-reach..=reach)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Index into 0..n reflected at the borders (edge pixel included), so the
/// convolution sees a symmetric extension of the map.
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let mut j = i % period;
    if j < 0 {
        j += period;
    }
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn convolve_axis(src: &Array2<f64>, kernel: &[f64], along_rows: bool) -> Array2<f64> {
    let (h, w) = src.dim();
    let reach = (kernel.len() / 2) as i64;
    let mut out = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let off = ki as i64 - reach;
                let v = if along_rows {
                    src[[reflect(r as i64 + off, h as i64), c]]
                } else {
                    src[[r, reflect(c as i64 + off, w as i64)]]
                };
                acc += kv * v;
            }
            out[[r, c]] = acc;
        }
    }
    out
}

/// Separable Gaussian blur with reflective borders, then a rescale to a
/// maximum of 1 (skipped for all-zero maps) and a clamp to [0, 1].
pub fn gaussian_blur(map: &SaliencyMap, sigma_px: f64) -> Result<SaliencyMap> {
    if !(sigma_px > 0.0) {
        return Err(Error::config(format!(
            "blur sigma must be positive, got {sigma_px}"
        )));
    }
    let kernel = gaussian_kernel(sigma_px);
    let blurred = convolve_axis(&convolve_axis(&map.pixels, &kernel, true), &kernel, false);
    let max = blurred.iter().cloned().fold(0.0_f64, f64::max);
    let pixels = if max > 0.0 {
        blurred.mapv(|v| (v / max).clamp(0.0, 1.0))
    } else {
        blurred
    };
    Ok(SaliencyMap {
        pixels,
        ..map.clone()
    })
}

/// Adds the 18-row empty bands above and below the content.
pub fn pad_to_square(map: &SaliencyMap) -> Result<SaliencyMap> {
    if map.is_padded {
        return Err(Error::input("map is already square-padded"));
    }
    let mut pixels = Array2::zeros((SALIENCY_WIDTH, SALIENCY_WIDTH));
    pixels
        .slice_mut(ndarray::s![PAD_ROWS..PAD_ROWS + SALIENCY_HEIGHT, ..])
        .assign(&map.pixels);
    Ok(SaliencyMap {
        pixels,
        is_padded: true,
        ..map.clone()
    })
}

/// Removes the padding bands, restoring the 45 x 81 content.
pub fn unpad(map: &SaliencyMap) -> Result<SaliencyMap> {
    if !map.is_padded {
        return Err(Error::input("map is not square-padded"));
    }
    let pixels = map
        .pixels
        .slice(ndarray::s![PAD_ROWS..PAD_ROWS + SALIENCY_HEIGHT, ..])
        .to_owned();
    Ok(SaliencyMap {
        pixels,
        is_padded: false,
        ..map.clone()
    })
}

/// Training-time augmentation with the published constants: horizontal
/// flip with probability 0.5 and integer shifts drawn from {-5..5}.
pub fn augment_saliency(map: &SaliencyMap, rng: &mut Rng) -> Result<SaliencyMap> {
    augment_saliency_with(map, 0.5, 5, rng)
}

/// Augmentation with explicit flip probability and shift range. Draw
/// order is fixed (flip, then horizontal shift, then vertical shift), so
/// one seed always produces one transform.
pub fn augment_saliency_with(
    map: &SaliencyMap,
    flip_prob: f64,
    max_shift_px: i64,
    rng: &mut Rng,
) -> Result<SaliencyMap> {
    if !map.is_padded {
        return Err(Error::input("augmentation expects a square-padded map"));
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::config(format!(
            "flip probability must be in [0,1], got {flip_prob}"
        )));
    }
    if max_shift_px < 0 {
        return Err(Error::config(format!(
            "shift range must be nonnegative, got {max_shift_px}"
        )));
    }
    let flip = rng.gen_bool(flip_prob);
    let (dx, dy) = if max_shift_px == 0 {
        (0, 0)
    } else {
        (
            rng.gen_range(-max_shift_px..=max_shift_px),
            rng.gen_range(-max_shift_px..=max_shift_px),
        )
    };
    let (h, w) = map.pixels.dim();
    let mut pixels = Array2::zeros((h, w));
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            // Destination (r, c) pulls from the source pixel shifted by
            // (-dy, -dx), mirrored first when flipping.
            let (sr, sc) = (r - dy, c - dx);
            if !(0..h as i64).contains(&sr) || !(0..w as i64).contains(&sc) {
                continue;
            }
            let sc = if flip { w as i64 - 1 - sc } else { sc };
            pixels[[r as usize, c as usize]] = map.pixels[[sr as usize, sc as usize]];
        }
    }
    Ok(SaliencyMap {
        pixels,
        ..map.clone()
    })
}
