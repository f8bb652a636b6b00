//! Trial segmentation and signal conditioning.
//!
//! Raw recordings arrive as microvolt matrices [n_samples x n_electrodes]
//! with stimulus onset times. Each onset becomes one trial covering one
//! second before the onset and three seconds after it (defaults). Trials
//! are then cleaned (median removal, amplitude clipping), low-passed with
//! a zero-phase 4th-order Butterworth, and decimated.
//!
//! Decimation keeps indices 0, r, 2r, ... plus the final sample, so a
//! 2000-sample trial at ratio 5 yields 401 samples. The appended endpoint
//! reproduces the published post-decimation length.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One gaze sample in normalized screen coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    /// Horizontal position in [0,1], 0 = left edge.
    pub x: f64,
    /// Vertical position in [0,1], 0 = top edge.
    pub y: f64,
    /// Seconds since recording start.
    pub t: f64,
}

/// A continuous multichannel recording with stimulus annotations.
#[derive(Debug, Clone)]
pub struct RawRecording {
    /// Microvolts, shape [n_samples, n_electrodes].
    pub samples: Array2<f64>,
    pub sampling_rate: f64,
    pub electrode_names: Vec<String>,
    /// Stimulus onset times in seconds, strictly increasing.
    pub stimulus_onsets: Vec<f64>,
}

impl RawRecording {
    pub fn validate(&self) -> Result<()> {
        if self.sampling_rate <= 0.0 {
            return Err(Error::input("sampling rate must be positive"));
        }
        if self.samples.ncols() != self.electrode_names.len() {
            return Err(Error::input(format!(
                "{} electrode names for {} channels",
                self.electrode_names.len(),
                self.samples.ncols()
            )));
        }
        if self.stimulus_onsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("stimulus onsets must be strictly increasing"));
        }
        Ok(())
    }
}

/// One stimulus-aligned EEG segment plus the gaze recorded while the
/// participant viewed that stimulus.
#[derive(Debug, Clone)]
pub struct Trial {
    /// Microvolts, shape [n_trial_samples, n_electrodes].
    pub eeg: Array2<f64>,
    /// Gaze points over the stimulus, coordinates in [0,1]^2.
    pub gaze: Vec<GazePoint>,
    pub trial_id: usize,
    pub participant_id: String,
    /// Onset time in recording coordinates, seconds.
    pub onset_seconds: f64,
}

/// Record of an onset that could not be segmented.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnsetWarning {
    pub onset_index: usize,
    pub onset_seconds: f64,
    pub reason: String,
}

/// Cuts one trial per onset: [onset - pre, onset + post) at the recording
/// rate. Onsets without enough margin are reported, not fatal. Trials come
/// back in onset order with empty gaze; the loader attaches gaze later.
pub fn segment_trials(
    rec: &RawRecording,
    pre_s: f64,
    post_s: f64,
) -> Result<(Vec<Trial>, Vec<OnsetWarning>)> {
    rec.validate()?;
    if pre_s < 0.0 || post_s <= 0.0 {
        return Err(Error::config("segment window must be positive"));
    }
    let n_pre = (pre_s * rec.sampling_rate).round() as i64;
    let n_post = (post_s * rec.sampling_rate).round() as i64;
    let n_total = rec.samples.nrows() as i64;
    let mut trials = Vec::new();
    let mut warnings = Vec::new();
    for (i, &onset) in rec.stimulus_onsets.iter().enumerate() {
        let onset_idx = (onset * rec.sampling_rate).round() as i64;
        let start = onset_idx - n_pre;
        let end = onset_idx + n_post;
        if start < 0 || end > n_total {
            warnings.push(OnsetWarning {
                onset_index: i,
                onset_seconds: onset,
                reason: format!(
                    "window [{start}, {end}) exceeds recording bounds [0, {n_total})"
                ),
            });
            continue;
        }
        let eeg = rec
            .samples
            .slice(ndarray::s![start as usize..end as usize, ..])
            .to_owned();
        trials.push(Trial {
            eeg,
            gaze: Vec::new(),
            trial_id: trials.len(),
            participant_id: String::new(),
            onset_seconds: onset,
        });
    }
    Ok((trials, warnings))
}

/// Per-channel median subtraction followed by symmetric amplitude clipping.
pub fn suppress_artifacts(eeg: &Array2<f64>, clip_microvolts: f64) -> Array2<f64> {
    let mut out = eeg.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mut vals: Vec<f64> = col.iter().copied().collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        let n = vals.len();
        if n == 0 {
            continue;
        }
        let median = if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        };
        col.mapv_inplace(|v| (v - median).clamp(-clip_microvolts, clip_microvolts));
    }
    out
}

/// One normalized second-order section.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

/// 4th-order Butterworth low-pass as two sections with the standard pole
/// quality factors, discretized with the cookbook bilinear mapping.
fn butter_lowpass_sections(cutoff_hz: f64, sampling_rate: f64) -> [Biquad; 2] {
    const Q: [f64; 2] = [0.541196100146197, 1.3065629648763766];
    let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / sampling_rate;
    let (sw, cw) = w0.sin_cos();
    Q.map(|q| {
        let alpha = sw / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b0: (1.0 - cw) / 2.0 / a0,
            b1: (1.0 - cw) / a0,
            b2: (1.0 - cw) / 2.0 / a0,
            a1: -2.0 * cw / a0,
            a2: (1.0 - alpha) / a0,
        }
    })
}

/// Direct form II transposed, zero initial conditions, in place.
fn sosfilt_inplace(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = s.b0 * input + z1;
            z1 = s.b1 * input - s.a1 * out + z2;
            z2 = s.b2 * input - s.a2 * out;
            *v = out;
        }
    }
}

/// Zero-phase cascade: odd-reflection padding, forward pass, backward
/// pass. Padding long enough that the zero-state transient decays below
/// 1e-9 of signal scale for any cutoff above 1/20 of the sampling rate.
fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = 150.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    sosfilt_inplace(sections, &mut ext);
    ext.reverse();
    sosfilt_inplace(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase low-pass over every channel. Fails if the cutoff reaches
/// the Nyquist rate.
pub fn lowpass_filter(
    eeg: &Array2<f64>,
    sampling_rate: f64,
    cutoff_hz: f64,
) -> Result<Array2<f64>> {
    if cutoff_hz >= sampling_rate / 2.0 {
        return Err(Error::config(format!(
            "cutoff {cutoff_hz} Hz reaches Nyquist for {sampling_rate} Hz sampling"
        )));
    }
    if cutoff_hz <= 0.0 {
        return Err(Error::config("cutoff must be positive"));
    }
    let sections = butter_lowpass_sections(cutoff_hz, sampling_rate);
    let mut out = eeg.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let channel: Vec<f64> = col.iter().copied().collect();
        let filtered = filtfilt(&sections, &channel);
        for (dst, src) in col.iter_mut().zip(filtered) {
            *dst = src;
        }
    }
    Ok(out)
}

/// Indices kept by [`downsample`]: 0, r, 2r, ... plus the final index.
pub fn downsample_indices(n: usize, ratio: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).step_by(ratio).collect();
    if let Some(last) = n.checked_sub(1) {
        if idx.last() != Some(&last) {
            idx.push(last);
        }
    }
    idx
}

/// Strided decimation with the endpoint kept. The caller is responsible
/// for anti-alias filtering first.
pub fn downsample(eeg: &Array2<f64>, ratio: usize) -> Result<Array2<f64>> {
    if ratio < 1 {
        return Err(Error::config("downsample ratio must be >= 1"));
    }
    let idx = downsample_indices(eeg.nrows(), ratio);
    Ok(eeg.select(Axis(0), &idx))
}
