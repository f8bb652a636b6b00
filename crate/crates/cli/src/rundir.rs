//! Run-directory layout and shared command plumbing.
//!
//! One run directory holds everything a workflow produces:
//!
//! ```text
//! run/
//!   config.toml              resolved config snapshot (written by prepare)
//!   prepared/trials.dat      EEG-images, maps, fixations, norm stats
//!   prepared/manifest.json   where the trials came from
//!   checkpoints/*.ckpt       one per trained phase
//!   logs/<phase>.jsonl       full training log, one record per epoch
//!   logs/<phase>.metrics.jsonl  the same minus wall time, byte-stable
//!   report/                  metrics, tables, figure panels
//!   folds/fold_<i>/          per-fold outputs of crossvalidate
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use neurosal::config::ExperimentConfig;
use neurosal::data::PreparedTrial;
use neurosal::error::{Error, Result};
use neurosal::imaging::{self, NormStats};
use neurosal::train::EpochRecord;

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: PathBuf) -> Self {
        RunDir { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn trials(&self) -> PathBuf {
        self.root.join("prepared").join("trials.dat")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("prepared").join("manifest.json")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.ckpt"))
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn fold_dir(&self, index: usize) -> PathBuf {
        self.root.join("folds").join(format!("fold_{index}"))
    }
}

/// Global flags shared by every command.
pub struct Context {
    pub run: RunDir,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Context {
    /// Resolves the effective config: an explicit `--config` file wins,
    /// otherwise the run's stored snapshot, otherwise defaults. A
    /// `--seed` flag then overrides the file seed and every phase seed.
    pub fn load_config(&self) -> Result<ExperimentConfig> {
        let mut exp = match &self.config_path {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::input(format!("cannot read config {}: {e}", path.display()))
                })?;
                ExperimentConfig::from_toml(&text)?
            }
            None => {
                let snap = self.run.config_snapshot();
                if snap.exists() {
                    let text = fs::read_to_string(&snap)?;
                    ExperimentConfig::from_toml(&text)?
                } else {
                    ExperimentConfig::default()
                }
            }
        };
        if let Some(seed) = self.seed {
            exp.seed = Some(seed);
            exp.vae_saliency.seed = seed;
            exp.vae_eeg.seed = seed;
            exp.gan.seed = seed;
        }
        Ok(exp)
    }

    /// Seed used for evaluation streams and reported in metrics files.
    pub fn eval_seed(&self, exp: &ExperimentConfig) -> u64 {
        self.seed.or(exp.seed).unwrap_or(0)
    }

    pub fn progress(&self, line: &str) {
        if !self.quiet {
            eprintln!("{line}");
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// The full log record minus wall time, so reruns of the same config
/// and seed produce byte-identical files.
#[derive(Serialize)]
struct MetricsRecord<'a> {
    phase: &'a str,
    epoch: usize,
    loss_total: f64,
    loss_content: f64,
    loss_kld: f64,
    loss_adv: f64,
    loss_disc: f64,
    val_total: f64,
    lr: f64,
}

impl<'a> From<&'a EpochRecord> for MetricsRecord<'a> {
    fn from(r: &'a EpochRecord) -> Self {
        MetricsRecord {
            phase: &r.phase,
            epoch: r.epoch,
            loss_total: r.loss_total,
            loss_content: r.loss_content,
            loss_kld: r.loss_kld,
            loss_adv: r.loss_adv,
            loss_disc: r.loss_disc,
            val_total: r.val_total,
            lr: r.lr,
        }
    }
}

/// Writes `<name>.jsonl` (every field, one record per line) and
/// `<name>.metrics.jsonl` (deterministic fields only) under `dir`.
pub fn write_epoch_logs(dir: &Path, name: &str, curve: &[EpochRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut full = String::new();
    let mut stable = String::new();
    for record in curve {
        full.push_str(&serde_json::to_string(record)?);
        full.push('\n');
        stable.push_str(&serde_json::to_string(&MetricsRecord::from(record))?);
        stable.push('\n');
    }
    fs::write(dir.join(format!("{name}.jsonl")), full)?;
    fs::write(dir.join(format!("{name}.metrics.jsonl")), stable)?;
    Ok(())
}

/// Clones trials with images normalized by `norm`; targets and
/// fixations pass through untouched.
pub fn normalized_trials(trials: &[PreparedTrial], norm: NormStats) -> Vec<PreparedTrial> {
    trials
        .iter()
        .map(|t| {
            let mut image = t.image.clone();
            imaging::apply_normalization(&mut image, norm);
            PreparedTrial {
                image,
                ..t.clone()
            }
        })
        .collect()
}

/// Loads the prepared store or explains how to create it.
pub fn load_prepared_or_hint(run: &RunDir) -> Result<neurosal::data::PreparedStore> {
    let path = run.trials();
    if !path.exists() {
        return Err(Error::input(format!(
            "no prepared trials at {}; run prepare first",
            path.display()
        )));
    }
    neurosal::data::load_prepared(&path)
}
