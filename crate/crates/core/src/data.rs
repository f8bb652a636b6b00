//! Dataset ingestion, synthetic data, and trial preparation.
//!
//! On disk a dataset is one directory per participant:
//!
//! ```text
//! root/
//!   p01/
//!     eeg.json    header: sampling_rate, channels, dtype, n_samples
//!     eeg.bin     little-endian samples, row-major [n_samples x channels]
//!     gaze.csv    t,x,y with t in seconds and x,y in [0,1]
//!     events.csv  onset (seconds, strictly increasing)
//!   p02/
//!     ...
//! ```
//!
//! Loading is not fail-fast: a broken file isolates its participant and
//! becomes a diagnostic, the rest of the dataset still loads. Trials are
//! ordered by participant id then onset time, so ids are stable across
//! runs and machines.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, SyntheticConfig};
use crate::error::{Error, Result};
use crate::imaging::{EEGImage, NormStats, Rasterizer};
use crate::montage::MontageGeometry;
use crate::rng;
use crate::saliency::{self, SaliencyMap};
use crate::signal::{self, GazePoint, RawRecording, Trial};

/// A problem found while loading one file. Loading continues; the
/// participant that owns the file is dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostic {
    pub participant: String,
    pub file: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipantEntry {
    pub id: String,
    pub dir: PathBuf,
    pub sampling_rate: f64,
    pub n_trials: usize,
}

/// What a dataset directory contained, including everything that failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub participants: Vec<ParticipantEntry>,
    pub n_trials: usize,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EegHeader {
    sampling_rate: f64,
    channels: Vec<String>,
    dtype: String,
    n_samples: usize,
}

fn read_eeg(dir: &Path) -> std::result::Result<(Array2<f64>, EegHeader), (String, String)> {
    let header_path = dir.join("eeg.json");
    let text = fs::read_to_string(&header_path)
        .map_err(|e| ("eeg.json".to_string(), e.to_string()))?;
    let header: EegHeader =
        serde_json::from_str(&text).map_err(|e| ("eeg.json".to_string(), e.to_string()))?;
    if header.sampling_rate <= 0.0 {
        return Err(("eeg.json".into(), "sampling rate must be positive".into()));
    }
    let bytes = fs::read(dir.join("eeg.bin")).map_err(|e| ("eeg.bin".to_string(), e.to_string()))?;
    let n = header.n_samples * header.channels.len();
    let values: Vec<f64> = match header.dtype.as_str() {
        "f64" => {
            if bytes.len() != n * 8 {
                return Err((
                    "eeg.bin".into(),
                    format!("expected {} bytes for {} f64 values, found {}", n * 8, n, bytes.len()),
                ));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        "f32" => {
            if bytes.len() != n * 4 {
                return Err((
                    "eeg.bin".into(),
                    format!("expected {} bytes for {} f32 values, found {}", n * 4, n, bytes.len()),
                ));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        }
        other => return Err(("eeg.json".into(), format!("unsupported dtype {other:?}"))),
    };
    let samples = Array2::from_shape_vec((header.n_samples, header.channels.len()), values)
        .map_err(|e| ("eeg.bin".to_string(), e.to_string()))?;
    Ok((samples, header))
}

fn read_gaze(dir: &Path) -> std::result::Result<Vec<GazePoint>, (String, String)> {
    let path = dir.join("gaze.csv");
    let text = fs::read_to_string(&path).map_err(|e| ("gaze.csv".to_string(), e.to_string()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("t,x,y") => {}
        other => {
            return Err((
                "gaze.csv".into(),
                format!("expected header \"t,x,y\", found {other:?}"),
            ))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(("gaze.csv".into(), format!("line {}: expected 3 fields", i + 2)));
        }
        let parse = |s: &str, name: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ("gaze.csv".to_string(), format!("line {}: bad {name} {s:?}", i + 2)))
        };
        let t = parse(fields[0], "t")?;
        let x = parse(fields[1], "x")?;
        let y = parse(fields[2], "y")?;
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err((
                "gaze.csv".into(),
                format!("line {}: gaze ({x}, {y}) outside [0,1]^2", i + 2),
            ));
        }
        out.push(GazePoint { x, y, t });
    }
    out.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    Ok(out)
}

fn read_events(dir: &Path) -> std::result::Result<Vec<f64>, (String, String)> {
    let path = dir.join("events.csv");
    let text = fs::read_to_string(&path).map_err(|e| ("events.csv".to_string(), e.to_string()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("onset") => {}
        other => {
            return Err((
                "events.csv".into(),
                format!("expected header \"onset\", found {other:?}"),
            ))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let onset = line.trim().parse::<f64>().map_err(|_| {
            ("events.csv".to_string(), format!("line {}: bad onset {line:?}", i + 2))
        })?;
        out.push(onset);
    }
    Ok(out)
}

/// Gaze recorded while the stimulus was on screen: [onset, onset + post).
fn attach_gaze(trials: &mut [Trial], gaze: &[GazePoint], post_seconds: f64) {
    for trial in trials {
        let lo = trial.onset_seconds;
        let hi = trial.onset_seconds + post_seconds;
        trial.gaze = gaze
            .iter()
            .filter(|g| g.t >= lo && g.t < hi)
            .copied()
            .collect();
    }
}

/// Loads every participant under `root`, segments trials, and attaches
/// gaze. Files that fail to parse become diagnostics and skip their
/// participant; only an entirely empty root is an error.
pub fn load_dataset(
    root: &Path,
    pipeline: &PipelineConfig,
) -> Result<(DatasetManifest, Vec<Trial>)> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::dataset(format!("cannot read {}: {e}", root.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::dataset(format!(
            "no participants found in {}",
            root.display()
        )));
    }

    let montage = MontageGeometry::standard_32()?;
    let mut manifest = DatasetManifest {
        schema_version: 1,
        participants: Vec::new(),
        n_trials: 0,
        diagnostics: Vec::new(),
    };
    let mut all_trials: Vec<Trial> = Vec::new();
    let mut reference_rate: Option<f64> = None;

    for dir in dirs {
        let id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let fail = |manifest: &mut DatasetManifest, file: String, message: String| {
            manifest.diagnostics.push(Diagnostic {
                participant: id.clone(),
                file,
                message,
            });
        };

        let (samples, header) = match read_eeg(&dir) {
            Ok(v) => v,
            Err((file, msg)) => {
                fail(&mut manifest, file, msg);
                continue;
            }
        };
        // Channel names must cover the montage; columns are reordered to
        // the montage layout so downstream imaging can trust positions.
        let mut order = Vec::with_capacity(montage.electrode_names.len());
        let mut missing = Vec::new();
        for name in &montage.electrode_names {
            match header.channels.iter().position(|c| c == name) {
                Some(i) => order.push(i),
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            fail(
                &mut manifest,
                "eeg.json".into(),
                format!("missing channels: {}", missing.join(", ")),
            );
            continue;
        }
        let samples = samples.select(ndarray::Axis(1), &order);
        if let Some(rate) = reference_rate {
            if (header.sampling_rate - rate).abs() > f64::EPSILON {
                fail(
                    &mut manifest,
                    "eeg.json".into(),
                    format!(
                        "sampling rate {} Hz disagrees with the dataset's {} Hz",
                        header.sampling_rate, rate
                    ),
                );
                continue;
            }
        }
        let gaze = match read_gaze(&dir) {
            Ok(v) => v,
            Err((file, msg)) => {
                fail(&mut manifest, file, msg);
                continue;
            }
        };
        let onsets = match read_events(&dir) {
            Ok(v) => v,
            Err((file, msg)) => {
                fail(&mut manifest, file, msg);
                continue;
            }
        };
        let rec = RawRecording {
            samples,
            sampling_rate: header.sampling_rate,
            electrode_names: montage.electrode_names.clone(),
            stimulus_onsets: onsets,
        };
        let (mut trials, warnings) =
            match signal::segment_trials(&rec, pipeline.pre_seconds, pipeline.post_seconds) {
                Ok(v) => v,
                Err(e) => {
                    fail(&mut manifest, "events.csv".into(), e.to_string());
                    continue;
                }
            };
        for w in warnings {
            manifest.diagnostics.push(Diagnostic {
                participant: id.clone(),
                file: "events.csv".into(),
                message: format!("onset {} skipped: {}", w.onset_seconds, w.reason),
            });
        }
        attach_gaze(&mut trials, &gaze, pipeline.post_seconds);
        for t in &mut trials {
            t.participant_id = id.clone();
        }
        reference_rate.get_or_insert(header.sampling_rate);
        manifest.participants.push(ParticipantEntry {
            id: id.clone(),
            dir: dir.clone(),
            sampling_rate: header.sampling_rate,
            n_trials: trials.len(),
        });
        all_trials.extend(trials);
    }

    // Between-participant order came from the sorted directory walk;
    // within a participant onsets are already increasing. Renumber so
    // ids are globally stable.
    all_trials.sort_by(|a, b| {
        (a.participant_id.as_str(), a.onset_seconds)
            .partial_cmp(&(b.participant_id.as_str(), b.onset_seconds))
            .unwrap()
    });
    for (i, t) in all_trials.iter_mut().enumerate() {
        t.trial_id = i;
    }
    manifest.n_trials = all_trials.len();
    Ok((manifest, all_trials))
}

/// One synthesized participant: a continuous recording plus the full
/// session gaze log, ready to write to disk or segment directly.
#[derive(Debug, Clone)]
pub struct SyntheticParticipant {
    pub id: String,
    pub recording: RawRecording,
    pub gaze: Vec<GazePoint>,
}

const TRIAL_SPACING_S: f64 = 5.0;
const FIRST_ONSET_S: f64 = 2.0;
const GAZE_POINTS_PER_TRIAL: usize = 40;

/// Synthesizes participants with a planted EEG-to-gaze coupling.
///
/// Each trial's gaze clusters on the left or right half of the screen.
/// During the stimulus window the EEG carries band-limited oscillations
/// whose amplitude is three times larger over the hemisphere opposite
/// the gaze side, so an image-to-map association exists by construction.
pub fn synthesize_participants(cfg: &SyntheticConfig) -> Result<Vec<SyntheticParticipant>> {
    if cfg.participants == 0 || cfg.trials_per_participant == 0 {
        return Err(Error::config("synthetic dataset needs positive counts"));
    }
    if cfg.electrodes != MontageGeometry::standard_32()?.n_electrodes() {
        return Err(Error::config("synthetic data is generated for the 32-channel montage"));
    }
    let montage = MontageGeometry::standard_32()?;
    let fs = cfg.sampling_rate;
    let n_trials = cfg.trials_per_participant;
    let session_s = FIRST_ONSET_S + TRIAL_SPACING_S * (n_trials - 1) as f64 + 4.0;
    let n_samples = (session_s * fs).round() as usize;

    // Hemisphere membership from the montage geometry: x < 0 is left.
    let lateral: Vec<f64> = (0..montage.n_electrodes())
        .map(|i| {
            let x = montage.positions_3d[[i, 0]];
            if x < -1e-9 {
                -1.0
            } else if x > 1e-9 {
                1.0
            } else {
                0.0
            }
        })
        .collect();

    let mut out = Vec::new();
    for p in 0..cfg.participants {
        let id = format!("p{:02}", p + 1);
        let mut prng = rng::indexed_substream(cfg.seed, "synthetic/participant", p as u64);
        // Participant-specific oscillation bank, all inside the low-pass band.
        let freqs: Vec<f64> = (0..3).map(|_| prng.gen_range(4.0..20.0)).collect();
        let noise = Normal::new(0.0, 2.0).unwrap();
        let mut samples = Array2::from_shape_fn((n_samples, cfg.electrodes), |_| {
            noise.sample(&mut prng)
        });

        let mut gaze = Vec::new();
        let mut onsets = Vec::new();
        for trial in 0..n_trials {
            let mut trng =
                rng::indexed_substream(cfg.seed, &format!("synthetic/{id}/trial"), trial as u64);
            let onset = FIRST_ONSET_S + TRIAL_SPACING_S * trial as f64;
            onsets.push(onset);
            let left_side = trng.gen_bool(0.5);

            // Contralateral amplification: left gaze drives the right
            // hemisphere and vice versa.
            let drive = if left_side { 1.0 } else { -1.0 };
            let phases: Vec<f64> = (0..freqs.len())
                .map(|_| trng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let start = (onset * fs).round() as usize;
            let stop = (((onset + 3.0) * fs).round() as usize).min(n_samples);
            for s in start..stop {
                let t = s as f64 / fs;
                let osc: f64 = freqs
                    .iter()
                    .zip(&phases)
                    .map(|(&f, &ph)| (std::f64::consts::TAU * f * t + ph).sin())
                    .sum();
                for c in 0..cfg.electrodes {
                    let scale = if lateral[c] == drive {
                        3.0
                    } else if lateral[c] == 0.0 {
                        1.5
                    } else {
                        1.0
                    };
                    samples[[s, c]] += 8.0 * scale * osc;
                }
            }

            let cx: f64 = if left_side { 0.25 } else { 0.75 } + trng.gen_range(-0.03..0.03);
            let cy: f64 = 0.5 + trng.gen_range(-0.05..0.05);
            let spread = Normal::new(0.0, 0.04).unwrap();
            for g in 0..GAZE_POINTS_PER_TRIAL {
                let frac = (g as f64 + 0.5) / GAZE_POINTS_PER_TRIAL as f64;
                gaze.push(GazePoint {
                    t: onset + 0.2 + 2.6 * frac,
                    x: (cx + spread.sample(&mut trng)).clamp(0.0, 1.0),
                    y: (cy + spread.sample(&mut trng)).clamp(0.0, 1.0),
                });
            }
        }
        out.push(SyntheticParticipant {
            id,
            recording: RawRecording {
                samples,
                sampling_rate: fs,
                electrode_names: montage.electrode_names.clone(),
                stimulus_onsets: onsets,
            },
            gaze,
        });
    }
    Ok(out)
}

/// Synthesizes, segments, and numbers trials in one step. Deterministic
/// under the config seed.
pub fn generate_synthetic(
    cfg: &SyntheticConfig,
    pipeline: &PipelineConfig,
) -> Result<Vec<Trial>> {
    let parts = synthesize_participants(cfg)?;
    let mut all = Vec::new();
    for part in parts {
        let (mut trials, warnings) =
            signal::segment_trials(&part.recording, pipeline.pre_seconds, pipeline.post_seconds)?;
        if let Some(w) = warnings.first() {
            return Err(Error::dataset(format!(
                "synthetic onset out of bounds: {}",
                w.reason
            )));
        }
        attach_gaze(&mut trials, &part.gaze, pipeline.post_seconds);
        for t in &mut trials {
            t.participant_id = part.id.clone();
        }
        all.extend(trials);
    }
    for (i, t) in all.iter_mut().enumerate() {
        t.trial_id = i;
    }
    Ok(all)
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

/// Writes participants in the canonical on-disk layout. Numeric text
/// fields use the shortest round-trip representation, so a write/load
/// cycle reproduces values bit-exactly.
pub fn write_canonical(root: &Path, parts: &[SyntheticParticipant]) -> Result<()> {
    for part in parts {
        let dir = root.join(&part.id);
        fs::create_dir_all(&dir)?;
        let rec = &part.recording;
        let header = EegHeader {
            sampling_rate: rec.sampling_rate,
            channels: rec.electrode_names.clone(),
            dtype: "f64".into(),
            n_samples: rec.samples.nrows(),
        };
        fs::write(dir.join("eeg.json"), serde_json::to_string_pretty(&header)?)?;
        let mut bytes = Vec::with_capacity(rec.samples.len() * 8);
        for &v in rec.samples.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join("eeg.bin"), bytes)?;
        write_csv(
            &dir.join("gaze.csv"),
            "t,x,y",
            part.gaze.iter().map(|g| format!("{},{},{}", g.t, g.x, g.y)),
        )?;
        write_csv(
            &dir.join("events.csv"),
            "onset",
            rec.stimulus_onsets.iter().map(|o| format!("{o}")),
        )?;
    }
    Ok(())
}

/// One trial after the full conditioning pipeline: the EEG-image input
/// (not yet normalized), the blurred padded ground-truth map, and the
/// raw fixated pixels on the padded grid.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub participant_id: String,
    pub trial_id: usize,
    pub image: EEGImage,
    pub target: SaliencyMap,
    pub fixations: Vec<[usize; 2]>,
}

/// Runs every trial through artifact suppression, low-pass filtering,
/// decimation, and rasterization, and builds its ground-truth map.
pub fn prepare_trials(
    trials: &[Trial],
    sampling_rate: f64,
    pipeline: &PipelineConfig,
    rasterizer: &Rasterizer,
) -> Result<Vec<PreparedTrial>> {
    let mut out = Vec::with_capacity(trials.len());
    for trial in trials {
        let cleaned = signal::suppress_artifacts(&trial.eeg, pipeline.clip_microvolts);
        let filtered = signal::lowpass_filter(&cleaned, sampling_rate, pipeline.lowpass_cutoff_hz)?;
        let decimated = signal::downsample(&filtered, pipeline.downsample_ratio)?;
        let image = rasterizer.build_eeg_image(&decimated, trial.trial_id)?;
        let stamped =
            saliency::rasterize_fixations(&trial.gaze, pipeline.error_radius_px, trial.trial_id)?;
        let blurred = saliency::gaussian_blur(&stamped, pipeline.blur_sigma_px)?;
        let target = saliency::pad_to_square(&blurred)?;
        out.push(PreparedTrial {
            participant_id: trial.participant_id.clone(),
            trial_id: trial.trial_id,
            image,
            target,
            fixations: saliency::fixation_pixels(&trial.gaze),
        });
    }
    Ok(out)
}

const PREPARED_MAGIC: &[u8] = b"NSALPREP v1\n";

/// Everything a prepare run leaves on disk: the prepared trials, the
/// whole-set normalization statistics (images themselves stay raw), the
/// source sampling rate, and a digest of the inputs for idempotence.
pub struct PreparedStore {
    pub trials: Vec<PreparedTrial>,
    pub norm: NormStats,
    pub sampling_rate: f64,
    pub source_digest: String,
}

#[derive(Serialize, Deserialize)]
struct PreparedTrialEntry {
    participant_id: String,
    trial_id: usize,
    n_fixations: usize,
    map_gaze_points: usize,
}

#[derive(Serialize, Deserialize)]
struct PreparedHeader {
    schema: u32,
    source_digest: String,
    sampling_rate: f64,
    norm: NormStats,
    frames: usize,
    grid: [usize; 2],
    map: [usize; 2],
    trials: Vec<PreparedTrialEntry>,
    payload_len: u64,
    payload_sha256: String,
}

fn push_f64s(payload: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes prepared trials into one binary file: JSON header, then a
/// digest-checked payload holding the shared electrode mask and per
/// trial the image frames, target map, and fixation pixels.
pub fn save_prepared(path: &Path, store: &PreparedStore) -> Result<()> {
    let first = store
        .trials
        .first()
        .ok_or_else(|| Error::dataset("nothing to save: no prepared trials"))?;
    let frames = first.image.frames.shape()[0];
    let (gh, gw) = first.image.zero_mask.dim();
    let (mh, mw) = first.target.pixels.dim();

    let mut payload = Vec::new();
    payload.extend(first.image.zero_mask.iter().map(|&m| m as u8));
    let mut entries = Vec::with_capacity(store.trials.len());
    for t in &store.trials {
        if t.image.frames.shape() != [frames, gh, gw] {
            return Err(Error::dataset(format!(
                "trial {}: inconsistent image shape {:?}",
                t.trial_id,
                t.image.frames.shape()
            )));
        }
        if t.image.zero_mask != first.image.zero_mask {
            return Err(Error::dataset(format!(
                "trial {}: electrode mask differs from the first trial",
                t.trial_id
            )));
        }
        push_f64s(&mut payload, t.image.frames.iter().cloned());
        push_f64s(&mut payload, t.target.pixels.iter().cloned());
        for px in &t.fixations {
            payload.extend_from_slice(&(px[0] as u32).to_le_bytes());
            payload.extend_from_slice(&(px[1] as u32).to_le_bytes());
        }
        entries.push(PreparedTrialEntry {
            participant_id: t.participant_id.clone(),
            trial_id: t.trial_id,
            n_fixations: t.fixations.len(),
            map_gaze_points: t.target.n_gaze_points,
        });
    }

    let mut hasher = Sha256::new();
    hasher.update(&payload);
    let digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let header = PreparedHeader {
        schema: 1,
        source_digest: store.source_digest.clone(),
        sampling_rate: store.sampling_rate,
        norm: store.norm,
        frames,
        grid: [gh, gw],
        map: [mh, mw],
        trials: entries,
        payload_len: payload.len() as u64,
        payload_sha256: digest,
    };
    let header_json = serde_json::to_vec(&header).map_err(|e| Error::Serde(e.to_string()))?;

    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(PREPARED_MAGIC)?;
        f.write_all(&(header_json.len() as u64).to_le_bytes())?;
        f.write_all(&header_json)?;
        f.write_all(&payload)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_prepared_header(bytes: &[u8], path: &Path) -> Result<(PreparedHeader, usize)> {
    let fail = |msg: &str| Error::dataset(format!("{}: {msg}", path.display()));
    if bytes.len() < PREPARED_MAGIC.len() + 8 || &bytes[..PREPARED_MAGIC.len()] != PREPARED_MAGIC {
        return Err(fail("not a prepared-trials file"));
    }
    let mut off = PREPARED_MAGIC.len();
    let header_len = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
    off += 8;
    if bytes.len() < off + header_len {
        return Err(fail("truncated header"));
    }
    let header: PreparedHeader = serde_json::from_slice(&bytes[off..off + header_len])
        .map_err(|e| fail(&format!("bad header: {e}")))?;
    if header.schema != 1 {
        return Err(fail("unsupported schema version"));
    }
    Ok((header, off + header_len))
}

/// Reads back only the source digest, for cheap up-to-date checks.
pub fn prepared_source_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let (header, _) = read_prepared_header(&bytes, path)?;
    Ok(header.source_digest)
}

pub fn load_prepared(path: &Path) -> Result<PreparedStore> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::dataset(format!("{}: {msg}", path.display()));
    let (header, payload_off) = read_prepared_header(&bytes, path)?;
    let payload = &bytes[payload_off..];
    if payload.len() as u64 != header.payload_len {
        return Err(fail("truncated payload"));
    }
    let mut hasher = Sha256::new();
    hasher.update(payload);
    let digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    if digest != header.payload_sha256 {
        return Err(fail("payload digest mismatch"));
    }

    let [gh, gw] = header.grid;
    let [mh, mw] = header.map;
    let mut off = 0usize;
    let mask = Array2::from_shape_fn((gh, gw), |(i, j)| payload[i * gw + j] != 0);
    off += gh * gw;

    let read_f64 = |off: &mut usize, n: usize| -> Result<Vec<f64>> {
        let end = *off + 8 * n;
        if payload.len() < end {
            return Err(fail("payload overrun"));
        }
        let vals = payload[*off..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *off = end;
        Ok(vals)
    };

    let mut trials = Vec::with_capacity(header.trials.len());
    for entry in &header.trials {
        let frames = ndarray::Array3::from_shape_vec(
            (header.frames, gh, gw),
            read_f64(&mut off, header.frames * gh * gw)?,
        )
        .map_err(|e| Error::dataset(e.to_string()))?;
        let pixels = Array2::from_shape_vec((mh, mw), read_f64(&mut off, mh * mw)?)
            .map_err(|e| Error::dataset(e.to_string()))?;
        let end = off + 8 * entry.n_fixations;
        if payload.len() < end {
            return Err(fail("payload overrun"));
        }
        let fixations = payload[off..end]
            .chunks_exact(8)
            .map(|c| {
                let r = u32::from_le_bytes(c[0..4].try_into().unwrap()) as usize;
                let col = u32::from_le_bytes(c[4..8].try_into().unwrap()) as usize;
                [r, col]
            })
            .collect();
        off = end;
        trials.push(PreparedTrial {
            participant_id: entry.participant_id.clone(),
            trial_id: entry.trial_id,
            image: EEGImage {
                frames,
                zero_mask: mask.clone(),
                trial_id: entry.trial_id,
            },
            target: SaliencyMap {
                pixels,
                is_padded: mh == mw,
                n_gaze_points: entry.map_gaze_points,
                trial_id: entry.trial_id,
            },
            fixations,
        });
    }
    if off != payload.len() {
        return Err(fail("trailing bytes after last trial"));
    }
    Ok(PreparedStore {
        trials,
        norm: header.norm,
        sampling_rate: header.sampling_rate,
        source_digest: header.source_digest,
    })
}
