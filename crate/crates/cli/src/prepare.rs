//! The `prepare` command: raw or synthetic recordings in, prepared
//! trials out. Re-running against unchanged inputs is a no-op keyed on
//! a digest of the source data and the preparation parameters.

use std::fs;
use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

use neurosal::config::{ExperimentConfig, PipelineConfig, SyntheticConfig};
use neurosal::data::{self, PreparedStore};
use neurosal::error::{Error, Result};
use neurosal::imaging::{compute_norm_stats, EEGImage, Rasterizer};
use neurosal::signal::Trial;
use neurosal::MontageGeometry;

use crate::rundir::{self, Context};

/// Applies `k=v` overrides from the `--synthetic` value onto the config
/// file's synthetic section.
fn parse_synthetic_spec(spec: &str, mut base: SyntheticConfig) -> Result<SyntheticConfig> {
    for pair in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(format!("synthetic entry '{pair}' is not key=value")))?;
        let value = value.trim();
        let parse_usize = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::config(format!("synthetic {key} '{value}' is not a count")))
        };
        match key.trim() {
            "n" | "participants" => base.participants = parse_usize()?,
            "trials" => base.trials_per_participant = parse_usize()?,
            "seed" => {
                base.seed = value
                    .parse()
                    .map_err(|_| Error::config(format!("synthetic seed '{value}' is not a u64")))?
            }
            "fs" => {
                base.sampling_rate = value.parse().map_err(|_| {
                    Error::config(format!("synthetic fs '{value}' is not a rate in Hz"))
                })?
            }
            other => {
                return Err(Error::config(format!(
                    "unknown synthetic key '{other}' (expected n, trials, seed, fs)"
                )))
            }
        }
    }
    Ok(base)
}

/// Digest of a synthetic source: the generator parameters plus every
/// preparation parameter that shapes the output.
fn synthetic_digest(cfg: &SyntheticConfig, pipeline: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"synthetic\n");
    h.update(serde_json::to_string(cfg)?.as_bytes());
    h.update(serde_json::to_string(pipeline)?.as_bytes());
    Ok(format!("{:x}", h.finalize()))
}

/// Digest of an on-disk dataset: relative path, length, and content
/// hash of every file under the root, plus the preparation parameters.
fn dataset_digest(root: &Path, pipeline: &PipelineConfig) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    h.update(b"dataset\n");
    for rel in &files {
        let bytes = fs::read(root.join(rel))?;
        h.update(rel.as_bytes());
        h.update(bytes.len().to_le_bytes());
        h.update(Sha256::digest(&bytes));
    }
    h.update(serde_json::to_string(pipeline)?.as_bytes());
    Ok(format!("{:x}", h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().into_owned());
        }
    }
    Ok(())
}

pub fn run(
    ctx: &Context,
    input: Option<&Path>,
    synthetic: Option<&str>,
    force: bool,
) -> Result<()> {
    let mut exp = ctx.load_config()?;

    // Work out the source and its digest before any heavy lifting so an
    // up-to-date rerun costs one hash.
    enum Source {
        Dataset,
        Synthetic,
    }
    let (source, digest) = match (input, synthetic) {
        (Some(dir), None) => {
            if !dir.is_dir() {
                return Err(Error::input(format!(
                    "input directory {} does not exist",
                    dir.display()
                )));
            }
            (Source::Dataset, dataset_digest(dir, &exp.pipeline)?)
        }
        (None, Some(spec)) => {
            exp.synthetic = parse_synthetic_spec(spec, exp.synthetic)?;
            exp.synthetic.validate()?;
            (Source::Synthetic, synthetic_digest(&exp.synthetic, &exp.pipeline)?)
        }
        (None, None) => {
            return Err(Error::config(
                "prepare needs a source: --input <dir> or --synthetic [k=v,...]",
            ))
        }
        // clap rejects the combination before we get here.
        (Some(_), Some(_)) => unreachable!(),
    };

    let trials_path = ctx.run.trials();
    if !force && trials_path.exists() {
        if let Ok(stored) = data::prepared_source_digest(&trials_path) {
            if stored == digest {
                println!("prepare: up to date ({})", trials_path.display());
                return Ok(());
            }
        }
    }

    let (trials, sampling_rate, source_json): (Vec<Trial>, f64, serde_json::Value) = match source {
        Source::Dataset => {
            let dir = input.unwrap();
            let (manifest, trials) = data::load_dataset(dir, &exp.pipeline)?;
            for d in &manifest.diagnostics {
                eprintln!("warning: {}/{}: {}", d.participant, d.file, d.message);
            }
            let rate = manifest
                .participants
                .first()
                .map(|p| p.sampling_rate)
                .ok_or_else(|| Error::dataset("no usable participants in the dataset"))?;
            let json = json!({
                "kind": "dataset",
                "root": dir.display().to_string(),
                "manifest": manifest,
            });
            (trials, rate, json)
        }
        Source::Synthetic => {
            let trials = data::generate_synthetic(&exp.synthetic, &exp.pipeline)?;
            let json = json!({ "kind": "synthetic", "config": exp.synthetic });
            (trials, exp.synthetic.sampling_rate, json)
        }
    };
    if trials.is_empty() {
        return Err(Error::dataset("the source produced no usable trials"));
    }

    ctx.progress(&format!(
        "preparing {} trials at {sampling_rate} Hz",
        trials.len()
    ));
    let rasterizer = Rasterizer::new(&MontageGeometry::standard_32()?)?;
    let prepared = data::prepare_trials(&trials, sampling_rate, &exp.pipeline, &rasterizer)?;
    let images: Vec<EEGImage> = prepared.iter().map(|t| t.image.clone()).collect();
    let norm = compute_norm_stats(&images)?;

    let store = PreparedStore {
        trials: prepared,
        norm,
        sampling_rate,
        source_digest: digest.clone(),
    };
    data::save_prepared(&trials_path, &store)?;

    let frames = store.trials[0].image.frames.dim();
    let map = store.trials[0].target.pixels.dim();
    let manifest = json!({
        "schema_version": 1,
        "source": source_json,
        "n_trials": store.trials.len(),
        "eeg_image": [frames.0, frames.1, frames.2],
        "map": [map.0, map.1],
        "norm": norm,
        "source_digest": digest,
    });
    rundir::write_json(&ctx.run.manifest(), &manifest)?;
    rundir::write_text(&ctx.run.config_snapshot(), &exp.to_toml()?)?;

    println!(
        "prepared {} trials ({}x{}x{} EEG-images, {}x{} maps) -> {}",
        store.trials.len(),
        frames.0,
        frames.1,
        frames.2,
        map.0,
        map.1,
        trials_path.display()
    );
    Ok(())
}
