//! EEG-images: interpolated scalp topography movies.
//!
//! Per trial, every downsampled EEG sample becomes one 32x32 frame by
//! interpolating the 32 electrode values over the projected montage; the
//! frames stack into a [n_down x 32 x 32] tensor. Pixels outside the
//! electrode convex hull carry no signal and stay exactly zero through
//! normalization and noise augmentation; `check_zero_regions` audits that.
//!
//! Interpolation (triangulation, gradient fit, cubic evaluation) is
//! linear in the electrode values, so the whole frame rasterization
//! collapses into one precomputed [n_pixels x n_electrodes] weight
//! matrix. Building an EEG-image is then a single matrix product.

use ndarray::{Array2, Array3, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{estimate_gradients, CloughTocher, Triangulation};
use crate::montage::MontageGeometry;

/// One trial's stack of interpolated frames.
#[derive(Debug, Clone)]
pub struct EEGImage {
    /// Shape [n_frames, h, w].
    pub frames: Array3<f64>,
    /// True marks pixels outside the electrode hull; those stay 0.
    pub zero_mask: Array2<bool>,
    pub trial_id: usize,
}

/// Affine normalization fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Pixels within this distance outside the hull still evaluate, so the
/// pixel nearest a boundary electrode (at most half a diagonal away) is
/// never masked.
const HULL_MARGIN_PX: f64 = 0.75;

/// Precomputed linear map from electrode values to one grid frame.
#[derive(Debug, Clone)]
pub struct Rasterizer {
    /// Shape [h*w, n_electrodes]; rows of masked pixels are all zero.
    weights: Array2<f64>,
    zero_mask: Array2<bool>,
    grid: (usize, usize),
}

impl Rasterizer {
    pub fn new(geometry: &MontageGeometry) -> Result<Self> {
        let n = geometry.n_electrodes();
        let (h, w) = geometry.grid_size;
        // Interpolation runs in (x=col, y=row) coordinates.
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| [geometry.positions_2d[[i, 1]], geometry.positions_2d[[i, 0]]])
            .collect();
        let tri = Triangulation::delaunay(&pts)?;
        let mut weights = Array2::zeros((h * w, n));
        let mut zero_mask = Array2::from_elem((h, w), true);
        for e in 0..n {
            let mut unit = vec![0.0; n];
            unit[e] = 1.0;
            let grads = estimate_gradients(&tri, &unit)?;
            let ct = CloughTocher::new(&tri, &unit, &grads)?;
            for row in 0..h {
                for col in 0..w {
                    if let Some(v) = ct.eval_within([col as f64, row as f64], HULL_MARGIN_PX) {
                        weights[[row * w + col, e]] = v;
                        zero_mask[[row, col]] = false;
                    }
                }
            }
        }
        Ok(Rasterizer {
            weights,
            zero_mask,
            grid: (h, w),
        })
    }

    pub fn zero_mask(&self) -> &Array2<bool> {
        &self.zero_mask
    }

    /// One frame from one electrode-value vector.
    pub fn rasterize_frame(&self, values: &[f64]) -> Result<Array2<f64>> {
        let n = self.weights.ncols();
        if values.len() != n {
            return Err(Error::input(format!(
                "{} electrode values for a {n}-electrode montage",
                values.len()
            )));
        }
        let v = ndarray::ArrayView1::from(values);
        let flat = self.weights.dot(&v);
        Ok(flat.into_shape_with_order(self.grid)?.to_owned())
    }

    /// Stacks one frame per sample row of a preprocessed trial.
    pub fn build_eeg_image(&self, trial_eeg: &Array2<f64>, trial_id: usize) -> Result<EEGImage> {
        let n = self.weights.ncols();
        if trial_eeg.ncols() != n {
            return Err(Error::input(format!(
                "trial has {} channels, montage has {n}",
                trial_eeg.ncols()
            )));
        }
        let (h, w) = self.grid;
        let t = trial_eeg.nrows();
        // [t, n] x [n, h*w] in one product.
        let flat = trial_eeg.dot(&self.weights.t());
        let frames = flat.into_shape_with_order((t, h, w))?;
        Ok(EEGImage {
            frames,
            zero_mask: self.zero_mask.clone(),
            trial_id,
        })
    }
}

/// Mean and population std over unmasked pixels of every frame.
pub fn compute_norm_stats(images: &[EEGImage]) -> Result<NormStats> {
    if images.is_empty() {
        return Err(Error::input("cannot normalize an empty image list"));
    }
    let mut count = 0u64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for img in images {
        for frame in img.frames.axis_iter(Axis(0)) {
            for ((r, c), &v) in frame.indexed_iter() {
                if !img.zero_mask[[r, c]] {
                    count += 1;
                    sum += v;
                    sum_sq += v * v;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::input("mask covers every pixel"));
    }
    let mean = sum / count as f64;
    let var = (sum_sq / count as f64 - mean * mean).max(0.0);
    let std = var.sqrt();
    if std <= 0.0 {
        return Err(Error::input("dataset has zero variance"));
    }
    Ok(NormStats { mean, std })
}

/// Applies `(v - mean) / std` to unmasked pixels in place.
pub fn apply_normalization(img: &mut EEGImage, stats: NormStats) {
    let mask = img.zero_mask.clone();
    for mut frame in img.frames.axis_iter_mut(Axis(0)) {
        for ((r, c), v) in frame.indexed_iter_mut() {
            if !mask[[r, c]] {
                *v = (*v - stats.mean) / stats.std;
            }
        }
    }
}

/// Fits stats on `images` (the training split) and normalizes them in
/// place. Apply the returned stats to held-out splits separately.
pub fn normalize_dataset(images: &mut [EEGImage]) -> Result<NormStats> {
    let stats = compute_norm_stats(images)?;
    for img in images.iter_mut() {
        apply_normalization(img, stats);
    }
    Ok(stats)
}

/// Adds zero-mean Gaussian noise to unmasked pixels.
pub fn add_training_noise(img: &EEGImage, std: f64, rng: &mut crate::rng::Rng) -> Result<EEGImage> {
    if std < 0.0 {
        return Err(Error::config("noise std must be non-negative"));
    }
    let mut out = img.clone();
    if std == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
    for mut frame in out.frames.axis_iter_mut(Axis(0)) {
        for ((r, c), v) in frame.indexed_iter_mut() {
            if !img.zero_mask[[r, c]] {
                *v += normal.sample(rng);
            }
        }
    }
    Ok(out)
}

/// True iff every masked pixel of every frame is exactly zero.
pub fn check_zero_regions(img: &EEGImage) -> bool {
    img.frames.axis_iter(Axis(0)).all(|frame| {
        frame
            .indexed_iter()
            .all(|((r, c), &v)| !img.zero_mask[[r, c]] || v == 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::MontageGeometry;
    use rand::Rng as _;

    fn rasterizer() -> Rasterizer {
        Rasterizer::new(&MontageGeometry::standard_32().unwrap()).unwrap()
    }

    fn random_values(seed: u64, n: usize) -> Vec<f64> {
        let mut r = crate::rng::seeded(seed);
        (0..n).map(|_| r.gen_range(-50.0..50.0)).collect()
    }

    #[test]
    fn constant_values_fill_unmasked_pixels() {
        let rast = rasterizer();
        let frame = rast.rasterize_frame(&[7.25; 32]).unwrap();
        let mut unmasked = 0;
        for ((r, c), &v) in frame.indexed_iter() {
            if rast.zero_mask()[[r, c]] {
                assert_eq!(v, 0.0, "masked pixel ({r},{c}) nonzero");
            } else {
                assert!((v - 7.25).abs() < 1e-6, "pixel ({r},{c}) = {v}");
                unmasked += 1;
            }
        }
        // The hull spans most of the central 30x30 square.
        assert!(unmasked > 500, "only {unmasked} unmasked pixels");
    }

    #[test]
    fn zero_values_give_zero_frame() {
        let frame = rasterizer().rasterize_frame(&[0.0; 32]).unwrap();
        assert!(frame.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_peaks_at_the_electrode() {
        let geom = MontageGeometry::standard_32().unwrap();
        let rast = Rasterizer::new(&geom).unwrap();
        for e in 0..32 {
            let mut values = [0.0; 32];
            values[e] = 1.0;
            let frame = rast.rasterize_frame(&values).unwrap();
            let (mut best, mut best_v) = ((0, 0), f64::NEG_INFINITY);
            for ((r, c), &v) in frame.indexed_iter() {
                if v > best_v {
                    best_v = v;
                    best = (r, c);
                }
            }
            let er = geom.positions_2d[[e, 0]];
            let ec = geom.positions_2d[[e, 1]];
            let dist = ((best.0 as f64 - er).powi(2) + (best.1 as f64 - ec).powi(2)).sqrt();
            // Nearest pixel center is within ~0.71 px of the electrode;
            // allow a near-tie with its neighbor.
            assert!(dist <= 1.5, "electrode {e}: argmax {best:?} is {dist} px away");
        }
    }

    #[test]
    fn electrode_nearest_pixel_fidelity_within_5_percent() {
        // Scalp potentials vary smoothly across the montage, so the check
        // uses fields with bounded spatial curvature: a random affine part
        // plus random Gaussian bumps a few electrode spacings wide. The
        // nearest pixel center sits up to ~0.71 px from its electrode, and
        // the interpolant must hold the value to 5% of the field range
        // over that offset.
        let geom = MontageGeometry::standard_32().unwrap();
        let rast = Rasterizer::new(&geom).unwrap();
        for seed in 0..5 {
            let mut r = crate::rng::seeded(seed);
            let (gx, gy, off) = (
                r.gen_range(-2.0..2.0),
                r.gen_range(-2.0..2.0),
                r.gen_range(-20.0..20.0),
            );
            let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        r.gen_range(1.0..30.0),
                        r.gen_range(1.0..30.0),
                        r.gen_range(-40.0..40.0),
                        r.gen_range(6.0..10.0),
                    )
                })
                .collect();
            let field = |row: f64, col: f64| {
                let mut v = off + gx * col + gy * row;
                for &(br, bc, amp, sigma) in &bumps {
                    let d2 = (row - br).powi(2) + (col - bc).powi(2);
                    v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
                v
            };
            let values: Vec<f64> = (0..32)
                .map(|e| field(geom.positions_2d[[e, 0]], geom.positions_2d[[e, 1]]))
                .collect();
            let range = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - values.iter().cloned().fold(f64::INFINITY, f64::min);
            let frame = rast.rasterize_frame(&values).unwrap();
            for e in 0..32 {
                let r = geom.positions_2d[[e, 0]].round() as usize;
                let c = geom.positions_2d[[e, 1]].round() as usize;
                let err = (frame[[r, c]] - values[e]).abs();
                assert!(
                    err <= 0.05 * range,
                    "electrode {e} seed {seed}: |{} - {}| = {err} vs range {range}",
                    frame[[r, c]],
                    values[e]
                );
            }
        }
    }

    #[test]
    fn permuting_electrodes_with_geometry_is_invariant() {
        let base = MontageGeometry::standard_32().unwrap();
        let rast_a = Rasterizer::new(&base).unwrap();
        // Rebuild the montage from a reversed table.
        let reversed: String = (0..32)
            .rev()
            .map(|i| {
                format!(
                    "{} {} {} {}\n",
                    base.electrode_names[i],
                    base.positions_3d[[i, 0]],
                    base.positions_3d[[i, 1]],
                    base.positions_3d[[i, 2]]
                )
            })
            .collect();
        let perm = MontageGeometry::from_table(&reversed).unwrap();
        let rast_b = Rasterizer::new(&perm).unwrap();
        let values = random_values(42, 32);
        let rev_values: Vec<f64> = values.iter().rev().copied().collect();
        let fa = rast_a.rasterize_frame(&values).unwrap();
        let fb = rast_b.rasterize_frame(&rev_values).unwrap();
        for (a, b) in fa.iter().zip(fb.iter()) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn image_shape_follows_trial_shape() {
        let rast = rasterizer();
        let trial = Array2::from_shape_fn((9, 32), |(t, e)| (t * 32 + e) as f64);
        let img = rast.build_eeg_image(&trial, 3).unwrap();
        assert_eq!(img.frames.shape(), &[9, 32, 32]);
        assert_eq!(img.trial_id, 3);
        // Frame t equals the single-frame rasterization of row t.
        let row: Vec<f64> = trial.row(4).to_vec();
        let single = rast.rasterize_frame(&row).unwrap();
        let diff = (&img.frames.index_axis(Axis(0), 4) - &single)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn all_zero_trial_gives_all_zero_image() {
        let img = rasterizer()
            .build_eeg_image(&Array2::zeros((5, 32)), 0)
            .unwrap();
        assert!(img.frames.iter().all(|&v| v == 0.0));
        assert!(check_zero_regions(&img));
    }

    #[test]
    fn frames_are_independent_per_sample() {
        let rast = rasterizer();
        let a = Array2::from_shape_fn((6, 32), |(t, e)| ((t + e) % 7) as f64);
        let mut b = a.clone();
        for e in 0..32 {
            b[[3, e]] += 1.0;
        }
        let ia = rast.build_eeg_image(&a, 0).unwrap();
        let ib = rast.build_eeg_image(&b, 0).unwrap();
        for t in 0..6 {
            let d = (&ia.frames.index_axis(Axis(0), t) - &ib.frames.index_axis(Axis(0), t))
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            if t == 3 {
                assert!(d > 0.1, "modified frame did not change");
            } else {
                assert!(d < 1e-12, "frame {t} changed by {d}");
            }
        }
    }

    fn sample_images(seed: u64, count: usize, frames: usize) -> Vec<EEGImage> {
        let rast = rasterizer();
        (0..count)
            .map(|i| {
                let mut r = crate::rng::seeded(seed + i as u64);
                let trial =
                    Array2::from_shape_fn((frames, 32), |_| r.gen_range(-40.0..40.0) + 5.0);
                rast.build_eeg_image(&trial, i).unwrap()
            })
            .collect()
    }

    #[test]
    fn normalization_zero_means_unit_stds_the_training_split() {
        let mut images = sample_images(1, 4, 8);
        let stats = normalize_dataset(&mut images).unwrap();
        assert!(stats.std > 0.0);
        let check = compute_norm_stats(&images).unwrap();
        assert!(check.mean.abs() < 1e-6, "post mean {}", check.mean);
        assert!((check.std - 1.0).abs() < 1e-6, "post std {}", check.std);
        for img in &images {
            assert!(check_zero_regions(img));
        }
        // Re-normalizing is then a near-identity transform.
        let again = compute_norm_stats(&images).unwrap();
        assert!(again.mean.abs() < 1e-6 && (again.std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_variance_dataset_is_rejected() {
        let rast = rasterizer();
        let mut images = vec![rast.build_eeg_image(&Array2::zeros((3, 32)), 0).unwrap()];
        assert!(normalize_dataset(&mut images).is_err());
    }

    #[test]
    fn noise_is_seeded_masked_and_calibrated() {
        let mut images = sample_images(2, 1, 40);
        normalize_dataset(&mut images).unwrap();
        let img = &images[0];

        let zero = add_training_noise(img, 0.0, &mut crate::rng::seeded(3)).unwrap();
        assert_eq!(zero.frames, img.frames);

        let a = add_training_noise(img, 0.25, &mut crate::rng::seeded(3)).unwrap();
        let b = add_training_noise(img, 0.25, &mut crate::rng::seeded(3)).unwrap();
        assert_eq!(a.frames, b.frames, "same seed must give same noise");
        assert!(check_zero_regions(&a));

        // Empirical std of the injected noise.
        let mut diffs = Vec::new();
        for t in 0..img.frames.shape()[0] {
            for ((r, c), &v) in img.frames.index_axis(Axis(0), t).indexed_iter() {
                if !img.zero_mask[[r, c]] {
                    diffs.push(a.frames[[t, r, c]] - v);
                }
            }
        }
        let n = diffs.len() as f64;
        let mean: f64 = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.25).abs() < 0.01, "noise std {std}, n {n}");
        assert!(add_training_noise(img, -0.1, &mut crate::rng::seeded(0)).is_err());
    }

    #[test]
    fn zero_region_check_detects_tampering() {
        let mut images = sample_images(4, 1, 2);
        let img = &mut images[0];
        assert!(check_zero_regions(img));
        let (mr, mc) = img
            .zero_mask
            .indexed_iter()
            .find(|(_, &m)| m)
            .map(|(idx, _)| idx)
            .expect("montage hull leaves corner pixels masked");
        img.frames[[0, mr, mc]] = 1e-3;
        assert!(!check_zero_regions(img));

        // Full-coverage mask: vacuously true whatever the values.
        let vacuous = EEGImage {
            frames: Array3::from_elem((1, 2, 2), 9.0),
            zero_mask: Array2::from_elem((2, 2), false),
            trial_id: 0,
        };
        assert!(check_zero_regions(&vacuous));
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let rast = rasterizer();
        assert!(rast.rasterize_frame(&[1.0; 31]).is_err());
        assert!(rast.build_eeg_image(&Array2::zeros((4, 31)), 0).is_err());
    }
}
