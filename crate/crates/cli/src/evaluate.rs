//! The `evaluate` command: scores every prepared trial with the trained
//! translator, writes a metrics report with the published reference
//! rows embedded, and renders ground-truth-vs-prediction panels. When
//! both the adversarial and the generator-only checkpoints exist, each
//! gets its own report and panel so the two stay comparable.

use std::path::Path;

use neurosal::checkpoint::{load_checkpoint, Checkpoint};
use neurosal::config::ExperimentConfig;
use neurosal::data::PreparedTrial;
use neurosal::error::{Error, Result};
use neurosal::metrics::{self, MetricsReport};
use neurosal::models::{self, Generator};
use neurosal::ndarray::Array2;
use neurosal::{rng, train as core_train};

use crate::panel;
use crate::rundir::{self, Context};
use crate::tables;

/// The two generator variants a run can hold, in report order.
const VARIANTS: [(&str, &str, &str, &str); 2] = [
    (
        "gan",
        "this run (with adversarial)",
        "metrics.json",
        "panel.png",
    ),
    (
        "gan_generator_only",
        "this run (generator only)",
        "metrics_generator_only.json",
        "panel_generator_only.png",
    ),
];

/// Rebuilds the generator a checkpoint was saved from, using the
/// architecture recorded inside the checkpoint.
fn revive_generator(ckpt: &Checkpoint) -> Result<Generator> {
    let saved = ExperimentConfig::from_toml(&ckpt.config_toml)?;
    let mut init = rng::seeded(0);
    let sal = models::saliency_vae(&saved.model, &mut init);
    let eeg = models::eeg_vae(&saved.model, &mut init);
    let mut gen = core_train::assemble_and_freeze(eeg, sal, &saved.model, &mut init)?;
    ckpt.restore_into(&gen.fingerprint(), &mut gen)?;
    Ok(gen)
}

/// Regenerates the predictions of the first `k` scoreable trials with
/// the same per-trial streams the metrics used, so the panel shows
/// exactly what was scored.
fn panel_rows(
    gen: &mut Generator,
    trials: &[PreparedTrial],
    seed: u64,
    k: usize,
) -> Vec<(Array2<f64>, Array2<f64>)> {
    trials
        .iter()
        .filter(|t| !t.fixations.is_empty())
        .take(k)
        .map(|t| {
            let label = format!("evaluate/{}", t.participant_id);
            let mut stream = rng::indexed_substream(seed, &label, t.trial_id as u64);
            let pred = gen.generate(&t.image, &mut stream);
            (t.target.pixels.clone(), pred)
        })
        .collect()
}

fn evaluate_variant(
    ctx: &Context,
    ckpt_path: &Path,
    seed: u64,
    panel_trials: usize,
    json_name: &str,
    panel_name: &str,
) -> Result<MetricsReport> {
    let ckpt = load_checkpoint(ckpt_path)?;
    let mut gen = revive_generator(&ckpt)?;
    let norm = ckpt
        .norm
        .ok_or_else(|| Error::checkpoint("generator checkpoint lacks normalization stats"))?;
    let store = rundir::load_prepared_or_hint(&ctx.run)?;
    let trials = rundir::normalized_trials(&store.trials, norm);

    let report = metrics::evaluate(&mut gen, &trials, seed)?;
    rundir::write_json(&ctx.run.report_dir().join(json_name), &report)?;

    let rows = panel_rows(&mut gen, &trials, seed, panel_trials);
    if !rows.is_empty() {
        panel::render(&rows, &ctx.run.report_dir().join(panel_name))?;
    }
    Ok(report)
}

pub fn run(ctx: &Context, trials_flag: Option<usize>) -> Result<()> {
    let exp = ctx.load_config()?;
    let seed = ctx.eval_seed(&exp);
    let panel_trials = trials_flag.unwrap_or(4).max(1);

    let mut reports: Vec<(String, MetricsReport)> = Vec::new();
    for (ckpt_name, label, json_name, panel_name) in VARIANTS {
        let path = ctx.run.checkpoint(ckpt_name);
        if !path.exists() {
            continue;
        }
        ctx.progress(&format!("scoring {}", path.display()));
        let report = evaluate_variant(ctx, &path, seed, panel_trials, json_name, panel_name)?;
        reports.push((label.to_string(), report));
    }
    if reports.is_empty() {
        return Err(Error::input(format!(
            "no generator checkpoint under {}; train the gan phase first",
            ctx.run.checkpoint("gan").parent().unwrap().display()
        )));
    }

    let pairs: Vec<(String, &MetricsReport)> = reports
        .iter()
        .map(|(label, report)| (label.clone(), report))
        .collect();
    let mut text = tables::comparison(&pairs);
    text.push('\n');
    text.push_str(&tables::per_trial(&reports[0].1));
    rundir::write_text(&ctx.run.report_dir().join("metrics.txt"), &text)?;
    print!("{text}");
    Ok(())
}
