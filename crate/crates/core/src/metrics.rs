//! Saliency evaluation metrics and the evaluation report.
//!
//! All four metrics compare a predicted map against ground truth at the
//! padded square resolution. AUC and NSS score against the raw fixated
//! pixels (a binary set, built before any blurring), CC and BCE against
//! the blurred continuous map. Degenerate inputs (constant prediction,
//! zero variance) fall back to fixed conventional values and raise a
//! flag instead of failing.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::PreparedTrial;
use crate::error::{Error, Result};
use crate::models::Generator;
use crate::rng;

/// Binary grid marking the pixels that received at least one gaze point.
/// Duplicate gaze points collapse onto one fixated pixel.
#[derive(Debug, Clone)]
pub struct FixationSet {
    mask: Array2<bool>,
    n_fixated: usize,
}

impl FixationSet {
    pub fn from_pixels(pixels: &[[usize; 2]], shape: (usize, usize)) -> Result<Self> {
        let mut mask = Array2::from_elem(shape, false);
        for &[r, c] in pixels {
            if r >= shape.0 || c >= shape.1 {
                return Err(Error::input(format!(
                    "fixation ({r}, {c}) outside {}x{} grid",
                    shape.0, shape.1
                )));
            }
            mask[[r, c]] = true;
        }
        let n_fixated = mask.iter().filter(|&&m| m).count();
        Ok(FixationSet { mask, n_fixated })
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    /// Number of distinct fixated pixels.
    pub fn len(&self) -> usize {
        self.n_fixated
    }

    pub fn is_empty(&self) -> bool {
        self.n_fixated == 0
    }
}

/// A metric value plus a flag marking the degenerate-input fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub degenerate: bool,
}

impl MetricValue {
    fn ok(value: f64) -> Self {
        MetricValue {
            value,
            degenerate: false,
        }
    }

    fn fallback(value: f64) -> Self {
        MetricValue {
            value,
            degenerate: true,
        }
    }
}

fn check_finite(pred: &Array2<f64>) -> Result<()> {
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("prediction contains non-finite values"));
    }
    Ok(())
}

/// Area under the ROC curve with thresholds taken at the prediction
/// values of fixated pixels (the AUC-Judd convention). True positive
/// rate counts fixated pixels at or above threshold; false positive rate
/// counts non-fixated pixels at or above threshold. A constant map earns
/// 0.5, perfect separation earns 1.
pub fn auc_judd(pred: &Array2<f64>, fix: &FixationSet) -> Result<MetricValue> {
    if pred.dim() != fix.mask.dim() {
        return Err(Error::input("prediction and fixation shapes differ"));
    }
    check_finite(pred)?;
    let mut fix_vals = Vec::with_capacity(fix.len());
    let mut non_vals = Vec::with_capacity(pred.len() - fix.len());
    for (&p, &m) in pred.iter().zip(fix.mask.iter()) {
        if m {
            fix_vals.push(p);
        } else {
            non_vals.push(p);
        }
    }
    if fix_vals.is_empty() {
        return Err(Error::input("no fixated pixels to score"));
    }
    if non_vals.is_empty() {
        return Err(Error::input("every pixel is fixated, ROC undefined"));
    }
    fix_vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    non_vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n_fix = fix_vals.len() as f64;
    let n_non = non_vals.len() as f64;

    // Sweep thresholds from high to low; both counts only grow, so the
    // curve points arrive ordered by false positive rate.
    let mut points = vec![(0.0f64, 0.0f64)];
    let (mut i, mut j) = (0usize, 0usize);
    let mut k = 0;
    while k < fix_vals.len() {
        let theta = fix_vals[k];
        while k < fix_vals.len() && fix_vals[k] == theta {
            k += 1;
        }
        while i < fix_vals.len() && fix_vals[i] >= theta {
            i += 1;
        }
        while j < non_vals.len() && non_vals[j] >= theta {
            j += 1;
        }
        points.push((j as f64 / n_non, i as f64 / n_fix));
    }
    points.push((1.0, 1.0));

    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }
    let constant = pred.iter().all(|&v| v == pred[[0, 0]]);
    if constant {
        Ok(MetricValue::fallback(0.5))
    } else {
        Ok(MetricValue::ok(area))
    }
}

/// Normalized scanpath saliency: the prediction is z-normalized over all
/// pixels (population standard deviation) and averaged at the fixated
/// pixels. A zero-variance prediction scores 0 with the degenerate flag.
pub fn nss(pred: &Array2<f64>, fix: &FixationSet) -> Result<MetricValue> {
    if pred.dim() != fix.mask.dim() {
        return Err(Error::input("prediction and fixation shapes differ"));
    }
    check_finite(pred)?;
    if fix.is_empty() {
        return Err(Error::input("no fixated pixels to score"));
    }
    // Exact constant check; the summed variance of a constant map can
    // round to a nonzero subnormal and sneak past a <= 0 test.
    if pred.iter().all(|&v| v == pred[[0, 0]]) {
        return Ok(MetricValue::fallback(0.0));
    }
    let n = pred.len() as f64;
    let mean = pred.sum() / n;
    let var = pred.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Ok(MetricValue::fallback(0.0));
    }
    let std = var.sqrt();
    let mut acc = 0.0;
    for (&p, &m) in pred.iter().zip(fix.mask.iter()) {
        if m {
            acc += (p - mean) / std;
        }
    }
    Ok(MetricValue::ok(acc / fix.len() as f64))
}

/// Pearson correlation between prediction and continuous ground truth.
/// Zero variance on either side scores 0 with the degenerate flag.
pub fn cc(pred: &Array2<f64>, target: &Array2<f64>) -> Result<MetricValue> {
    if pred.dim() != target.dim() {
        return Err(Error::input("prediction and target shapes differ"));
    }
    check_finite(pred)?;
    check_finite(target)?;
    if pred.iter().all(|&v| v == pred[[0, 0]]) || target.iter().all(|&v| v == target[[0, 0]]) {
        return Ok(MetricValue::fallback(0.0));
    }
    let n = pred.len() as f64;
    let mp = pred.sum() / n;
    let mt = target.sum() / n;
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut vt = 0.0;
    for (&p, &t) in pred.iter().zip(target.iter()) {
        cov += (p - mp) * (t - mt);
        vp += (p - mp) * (p - mp);
        vt += (t - mt) * (t - mt);
    }
    if vp <= 0.0 || vt <= 0.0 {
        return Ok(MetricValue::fallback(0.0));
    }
    Ok(MetricValue::ok(cov / (vp.sqrt() * vt.sqrt())))
}

/// Pixel-mean binary cross-entropy against the continuous ground truth,
/// with the same probability clamp the training loss uses.
pub fn bce_metric(pred: &Array2<f64>, target: &Array2<f64>) -> Result<MetricValue> {
    if pred.dim() != target.dim() {
        return Err(Error::input("prediction and target shapes differ"));
    }
    check_finite(pred)?;
    check_finite(target)?;
    Ok(MetricValue::ok(crate::losses::bce(
        &pred.to_owned().into_dyn(),
        &target.to_owned().into_dyn(),
    )))
}

/// Scores of one trial. `flags` names any metric that hit its
/// degenerate fallback.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial_id: usize,
    pub participant_id: String,
    pub auc_judd: f64,
    pub nss: f64,
    pub cc: f64,
    pub bce: f64,
    pub flags: Vec<String>,
}

/// Published scores embedded in every report so a run can be compared
/// side by side: row 1 is the full model with the adversarial critic,
/// row 2 the translator alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: String,
    pub auc_judd: f64,
    pub nss: f64,
    pub cc: f64,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    vec![
        ReferenceRow {
            label: "reference (with adversarial)".into(),
            auc_judd: 0.697,
            nss: 1.9869,
            cc: 0.383,
        },
        ReferenceRow {
            label: "reference (generator only)".into(),
            auc_judd: 0.574,
            nss: 1.6891,
            cc: 0.251,
        },
    ]
}

/// Mean and population standard deviation of one metric over trials.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricSummary {
        mean,
        std: var.sqrt(),
    }
}

/// Full evaluation output: per-trial scores, aggregate summaries, and
/// the published reference rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_trial: Vec<TrialMetrics>,
    pub auc_judd: MetricSummary,
    pub nss: MetricSummary,
    pub cc: MetricSummary,
    pub bce: MetricSummary,
    pub n_trials: usize,
    pub n_skipped: usize,
    pub seed: u64,
    pub reference: Vec<ReferenceRow>,
}

/// Scores a trial's prediction against its ground truth.
pub fn score_trial(
    pred: &Array2<f64>,
    sample: &PreparedTrial,
) -> Result<TrialMetrics> {
    let fix = FixationSet::from_pixels(&sample.fixations, pred.dim())?;
    let a = auc_judd(pred, &fix)?;
    let n = nss(pred, &fix)?;
    let c = cc(pred, &sample.target.pixels)?;
    let b = bce_metric(pred, &sample.target.pixels)?;
    let mut flags = Vec::new();
    for (name, m) in [("auc_judd", a), ("nss", n), ("cc", c)] {
        if m.degenerate {
            flags.push(name.to_string());
        }
    }
    Ok(TrialMetrics {
        trial_id: sample.trial_id,
        participant_id: sample.participant_id.clone(),
        auc_judd: a.value,
        nss: n.value,
        cc: c.value,
        bce: b.value,
        flags,
    })
}

/// Generates one map per test trial and scores it. Input images must
/// already be normalized with the generator's training statistics.
///
/// Each trial draws its latent noise from a stream keyed by the
/// evaluation seed, the participant, and the trial id, so scores do not
/// depend on trial order and a duplicated trial scores identically.
/// Trials without any gaze are skipped and counted in `n_skipped`.
pub fn evaluate(
    gen: &mut Generator,
    samples: &[PreparedTrial],
    seed: u64,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::input("cannot evaluate an empty test set"));
    }
    let mut per_trial = Vec::new();
    let mut n_skipped = 0usize;
    for sample in samples {
        if sample.fixations.is_empty() {
            n_skipped += 1;
            continue;
        }
        let label = format!("evaluate/{}", sample.participant_id);
        let mut stream = rng::indexed_substream(seed, &label, sample.trial_id as u64);
        let pred = gen.generate(&sample.image, &mut stream);
        per_trial.push(score_trial(&pred, sample)?);
    }
    if per_trial.is_empty() {
        return Err(Error::input("no test trial has gaze to score against"));
    }
    let col = |f: fn(&TrialMetrics) -> f64| per_trial.iter().map(f).collect::<Vec<_>>();
    Ok(MetricsReport {
        auc_judd: summarize(&col(|t| t.auc_judd)),
        nss: summarize(&col(|t| t.nss)),
        cc: summarize(&col(|t| t.cc)),
        bce: summarize(&col(|t| t.bce)),
        n_trials: per_trial.len(),
        n_skipped,
        per_trial,
        seed,
        reference: reference_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng as _;

    fn fix(pixels: &[[usize; 2]], shape: (usize, usize)) -> FixationSet {
        FixationSet::from_pixels(pixels, shape).unwrap()
    }

    /// Literal transcription of the threshold-sweep definition: for every
    /// distinct fixated value, count pixels at or above it by scanning
    /// the whole map, then integrate the ordered curve. Quadratic, used
    /// only as an oracle.
    fn auc_brute_force(pred: &Array2<f64>, mask: &Array2<bool>) -> f64 {
        let mut thresholds: Vec<f64> = pred
            .iter()
            .zip(mask.iter())
            .filter(|(_, &m)| m)
            .map(|(&p, _)| p)
            .collect();
        thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        thresholds.dedup();
        let n_fix = mask.iter().filter(|&&m| m).count() as f64;
        let n_non = mask.len() as f64 - n_fix;
        let mut pts = vec![(0.0, 0.0)];
        for &theta in thresholds.iter().rev() {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (&p, &m) in pred.iter().zip(mask.iter()) {
                if p >= theta {
                    if m {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            pts.push((fp / n_non, tp / n_fix));
        }
        pts.push((1.0, 1.0));
        let mut area = 0.0;
        for w in pts.windows(2) {
            area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5;
        }
        area
    }

    #[test]
    fn auc_of_constant_map_is_half_and_flagged() {
        let pred = Array2::from_elem((8, 8), 0.4);
        let f = fix(&[[2, 2], [5, 5]], (8, 8));
        let m = auc_judd(&pred, &f).unwrap();
        assert_eq!(m.value, 0.5);
        assert!(m.degenerate);
    }

    #[test]
    fn auc_of_perfect_separation_is_one() {
        let mut pred = Array2::zeros((8, 8));
        pred[[1, 1]] = 0.9;
        pred[[6, 3]] = 0.8;
        let f = fix(&[[1, 1], [6, 3]], (8, 8));
        let m = auc_judd(&pred, &f).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert!(!m.degenerate);
    }

    #[test]
    fn auc_matches_brute_force_on_random_maps() {
        let mut rng = crate::rng::seeded(17);
        for _ in 0..25 {
            let pred = Array2::from_shape_fn((8, 8), |_| rng.gen_range(0.0..1.0));
            let n_fix = rng.gen_range(1..12);
            let mut pixels = Vec::new();
            for _ in 0..n_fix {
                pixels.push([rng.gen_range(0..8), rng.gen_range(0..8)]);
            }
            let f = fix(&pixels, (8, 8));
            let fast = auc_judd(&pred, &f).unwrap().value;
            let slow = auc_brute_force(&pred, f.mask());
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_survives_ties_between_fixated_and_background_values() {
        // Every value drawn from {0.0, 0.5, 1.0} to force heavy ties.
        let mut rng = crate::rng::seeded(29);
        for _ in 0..10 {
            let pred = Array2::from_shape_fn((8, 8), |_| {
                [0.0, 0.5, 1.0][rng.gen_range(0..3usize)]
            });
            let pixels: Vec<[usize; 2]> =
                (0..5).map(|_| [rng.gen_range(0..8), rng.gen_range(0..8)]).collect();
            let f = fix(&pixels, (8, 8));
            let fast = auc_judd(&pred, &f).unwrap().value;
            let slow = auc_brute_force(&pred, f.mask());
            assert!((fast - slow).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_is_invariant_under_strictly_increasing_transforms() {
        let mut rng = crate::rng::seeded(23);
        for _ in 0..10 {
            let pred = Array2::from_shape_fn((8, 8), |_| rng.gen_range(0.0..1.0));
            let pixels: Vec<[usize; 2]> =
                (0..6).map(|_| [rng.gen_range(0..8), rng.gen_range(0..8)]).collect();
            let f = fix(&pixels, (8, 8));
            let base = auc_judd(&pred, &f).unwrap().value;
            let affine = pred.mapv(|v| 3.0 * v + 7.0);
            let expo = pred.mapv(|v| v.exp());
            assert!((auc_judd(&affine, &f).unwrap().value - base).abs() < 1e-12);
            assert!((auc_judd(&expo, &f).unwrap().value - base).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_rejects_degenerate_fixation_sets() {
        let pred = Array2::from_shape_fn((4, 4), |(r, c)| (r * 4 + c) as f64);
        assert!(auc_judd(&pred, &fix(&[], (4, 4))).is_err());
        let all: Vec<[usize; 2]> = (0..4)
            .flat_map(|r| (0..4).map(move |c| [r, c]))
            .collect();
        assert!(auc_judd(&pred, &fix(&all, (4, 4))).is_err());
    }

    #[test]
    fn nss_center_spike_matches_hand_computation() {
        let mut pred = Array2::zeros((3, 3));
        pred[[1, 1]] = 1.0;
        let f = fix(&[[1, 1]], (3, 3));
        let m = nss(&pred, &f).unwrap();
        // mean 1/9, population std sqrt(8)/9, so (1 - 1/9) / std = 2*sqrt(2).
        assert!((m.value - 2.0 * 2.0f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn nss_of_constant_map_is_zero_and_flagged() {
        let pred = Array2::from_elem((5, 5), 0.7);
        let m = nss(&pred, &fix(&[[0, 0]], (5, 5))).unwrap();
        assert_eq!(m.value, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn nss_over_all_pixels_is_zero() {
        let mut rng = crate::rng::seeded(31);
        let pred = Array2::from_shape_fn((4, 4), |_| rng.gen_range(0.0..1.0));
        let all: Vec<[usize; 2]> = (0..4)
            .flat_map(|r| (0..4).map(move |c| [r, c]))
            .collect();
        let m = nss(&pred, &fix(&all, (4, 4))).unwrap();
        assert!(m.value.abs() < 1e-9);
    }

    #[test]
    fn nss_is_invariant_under_positive_affine_maps() {
        let mut rng = crate::rng::seeded(37);
        let pred = Array2::from_shape_fn((6, 6), |_| rng.gen_range(0.0..1.0));
        let f = fix(&[[1, 2], [4, 4], [0, 5]], (6, 6));
        let base = nss(&pred, &f).unwrap().value;
        let scaled = pred.mapv(|v| 2.5 * v - 4.0);
        assert!((nss(&scaled, &f).unwrap().value - base).abs() < 1e-9);
    }

    #[test]
    fn cc_basics() {
        let mut rng = crate::rng::seeded(41);
        let a = Array2::from_shape_fn((6, 6), |_| rng.gen_range(0.0..1.0));
        let b = Array2::from_shape_fn((6, 6), |_| rng.gen_range(0.0..1.0));
        // Symmetry.
        let ab = cc(&a, &b).unwrap().value;
        let ba = cc(&b, &a).unwrap().value;
        assert!((ab - ba).abs() < 1e-15);
        // Perfect positive correlation under a positive affine map.
        let scaled = a.mapv(|v| 0.3 * v + 0.2);
        assert!((cc(&a, &scaled).unwrap().value - 1.0).abs() < 1e-12);
        // Mirrored map correlates at exactly -1.
        let inv = a.mapv(|v| 1.0 - v);
        assert!((cc(&a, &inv).unwrap().value + 1.0).abs() < 1e-12);
        // Zero variance flags.
        let flat = Array2::from_elem((6, 6), 0.5);
        let m = cc(&flat, &a).unwrap();
        assert_eq!(m.value, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn cc_against_quadratic_formula_oracle() {
        // Small fixed arrays with a hand-checkable covariance.
        let a = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Array2::from_shape_vec((2, 2), vec![2.0, 4.0, 5.0, 9.0]).unwrap();
        // means 2.5 and 5.0; cov = (1.5*3 + 0.5*1 + 0.5*0 + 1.5*4)/4
        let cov = ((-1.5) * (-3.0) + (-0.5) * (-1.0) + 0.5 * 0.0 + 1.5 * 4.0) / 4.0;
        let va: f64 = (2.25 + 0.25 + 0.25 + 2.25) / 4.0;
        let vb: f64 = (9.0 + 1.0 + 0.0 + 16.0) / 4.0;
        let expected = cov / (va.sqrt() * vb.sqrt());
        assert!((cc(&a, &b).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_metric_at_half_is_ln_2() {
        let p = Array2::from_elem((5, 5), 0.5);
        let m = bce_metric(&p, &p).unwrap();
        assert!((m.value - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn non_finite_predictions_are_rejected() {
        let mut pred = Array2::zeros((3, 3));
        pred[[0, 0]] = f64::NAN;
        let f = fix(&[[1, 1]], (3, 3));
        assert!(auc_judd(&pred, &f).is_err());
        assert!(nss(&pred, &f).is_err());
        assert!(cc(&pred, &Array2::zeros((3, 3))).is_err());
    }

    #[test]
    fn reference_rows_hold_the_published_scores() {
        let rows = reference_rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(
            (rows[0].auc_judd, rows[0].nss, rows[0].cc),
            (0.697, 1.9869, 0.383)
        );
        assert_eq!(
            (rows[1].auc_judd, rows[1].nss, rows[1].cc),
            (0.574, 1.6891, 0.251)
        );
    }

    #[test]
    fn fixation_set_deduplicates_and_validates() {
        let f = fix(&[[1, 1], [1, 1], [2, 3]], (4, 4));
        assert_eq!(f.len(), 2);
        assert!(FixationSet::from_pixels(&[[4, 0]], (4, 4)).is_err());
    }

    fn tiny_generator(n_frames: usize) -> Generator {
        use crate::models::{eeg_vae, saliency_vae, Generator};
        let cfg = crate::config::ModelConfig::tiny(n_frames);
        let mut r = crate::rng::seeded(2);
        let sal = saliency_vae(&cfg, &mut r);
        let eeg = eeg_vae(&cfg, &mut r);
        Generator::assemble(eeg, sal, &cfg, &mut r)
    }

    fn sample_with(trial_id: usize, participant: &str, rng: &mut crate::rng::Rng) -> PreparedTrial {
        let frames = ndarray::Array3::from_shape_fn((5, 32, 32), |_| rng.gen_range(-1.0..1.0));
        let image = crate::EEGImage {
            frames,
            zero_mask: Array2::from_elem((32, 32), false),
            trial_id,
        };
        let mut pixels = Array2::from_elem((81, 81), 0.01);
        pixels[[30, 40]] = 1.0;
        let target = crate::SaliencyMap {
            pixels,
            is_padded: true,
            n_gaze_points: 3,
            trial_id,
        };
        PreparedTrial {
            image,
            target,
            fixations: vec![[30, 40], [31, 41], [30, 40]],
            trial_id,
            participant_id: participant.to_string(),
        }
    }

    #[test]
    fn evaluate_scores_do_not_depend_on_order_or_duplication() {
        let mut rng = crate::rng::seeded(55);
        let a = sample_with(0, "p01", &mut rng);
        let b = sample_with(1, "p01", &mut rng);
        let c = sample_with(2, "p02", &mut rng);

        let mut gen = tiny_generator(5);
        let fwd = evaluate(&mut gen, &[a.clone(), b.clone(), c.clone()], 9).unwrap();
        let mut gen = tiny_generator(5);
        let rev = evaluate(&mut gen, &[c.clone(), b.clone(), a.clone()], 9).unwrap();
        let row = |r: &MetricsReport, id: usize| {
            r.per_trial.iter().find(|t| t.trial_id == id).unwrap().clone()
        };
        for id in 0..3 {
            assert_eq!(row(&fwd, id).auc_judd, row(&rev, id).auc_judd);
            assert_eq!(row(&fwd, id).nss, row(&rev, id).nss);
        }

        // A duplicated trial gets exactly the scores it had alone.
        let mut gen = tiny_generator(5);
        let dup = evaluate(&mut gen, &[a.clone(), a.clone(), b, c], 9).unwrap();
        assert_eq!(dup.n_trials, 4);
        assert_eq!(dup.per_trial[0].auc_judd, row(&fwd, 0).auc_judd);
        assert_eq!(dup.per_trial[1].auc_judd, row(&fwd, 0).auc_judd);
        assert_eq!(dup.per_trial[0].bce, dup.per_trial[1].bce);
    }

    #[test]
    fn evaluate_rejects_empty_sets_and_skips_gazeless_trials() {
        let mut gen = tiny_generator(5);
        assert!(evaluate(&mut gen, &[], 1).is_err());

        let mut rng = crate::rng::seeded(56);
        let mut gazeless = sample_with(0, "p01", &mut rng);
        gazeless.fixations.clear();
        assert!(evaluate(&mut gen, &[gazeless.clone()], 1).is_err());

        let scored = sample_with(1, "p01", &mut rng);
        let report = evaluate(&mut gen, &[gazeless, scored], 1).unwrap();
        assert_eq!(report.n_trials, 1);
        assert_eq!(report.n_skipped, 1);
    }
}
