//! The `crossvalidate` command: the full three-phase protocol once per
//! fold, participants never shared between train and test. Each fold
//! leaves a complete run directory behind; the aggregate summarizes the
//! fold means.

use serde::Serialize;

use neurosal::error::{Error, Result};
use neurosal::train::{self, EpochRecord};

use crate::rundir::{self, Context};
use crate::tables;

/// One line of `aggregate.json`: the fold's mean scores, enough to
/// recompute the aggregate without touching the fold directories.
#[derive(Serialize)]
struct FoldRow {
    fold_index: usize,
    participants: Vec<String>,
    n_trials: usize,
    auc_judd: f64,
    nss: f64,
    cc: f64,
    bce: f64,
}

#[derive(Serialize)]
struct AggregateFile {
    folds: Vec<FoldRow>,
    aggregate: train::Aggregate,
    seed: u64,
}

/// Splits a concatenated training curve back into per-phase logs.
fn phase_curves(curve: &[EpochRecord]) -> Vec<(String, Vec<EpochRecord>)> {
    let mut out: Vec<(String, Vec<EpochRecord>)> = Vec::new();
    for record in curve {
        match out.last_mut() {
            Some((phase, bucket)) if *phase == record.phase => bucket.push(record.clone()),
            _ => out.push((record.phase.clone(), vec![record.clone()])),
        }
    }
    out
}

pub fn run(ctx: &Context, folds: usize) -> Result<()> {
    let exp = {
        let mut exp = ctx.load_config()?;
        // The master seed feeds per-fold init streams; pin it so the
        // run is reproducible and the reports can quote it.
        exp.seed = Some(ctx.eval_seed(&exp));
        exp
    };
    let store = rundir::load_prepared_or_hint(&ctx.run)?;

    let mut participants: Vec<&str> = store
        .trials
        .iter()
        .map(|t| t.participant_id.as_str())
        .collect();
    participants.sort();
    participants.dedup();
    if participants.len() < folds {
        return Err(Error::input(format!(
            "{folds}-fold cross-validation needs at least {folds} participants, found {}",
            participants.len()
        )));
    }

    ctx.progress(&format!(
        "cross-validating {} trials from {} participants over {folds} folds",
        store.trials.len(),
        participants.len()
    ));
    let cv = train::crossvalidate(&store.trials, &exp)?;

    let mut rows = Vec::new();
    for fold in &cv.folds {
        let dir = ctx.run.fold_dir(fold.split.fold_index);
        rundir::write_json(&dir.join("split.json"), &fold.split)?;
        rundir::write_json(&dir.join("metrics.json"), &fold.report)?;
        rundir::write_json(&dir.join("norm.json"), &fold.norm)?;
        for (phase, curve) in phase_curves(&fold.curves) {
            rundir::write_epoch_logs(&dir.join("logs"), &phase, &curve)?;
        }
        for warning in &fold.warnings {
            eprintln!("warning: fold {}: {warning}", fold.split.fold_index);
        }
        rows.push(FoldRow {
            fold_index: fold.split.fold_index,
            participants: fold.split.participants.clone(),
            n_trials: fold.report.n_trials,
            auc_judd: fold.report.auc_judd.mean,
            nss: fold.report.nss.mean,
            cc: fold.report.cc.mean,
            bce: fold.report.bce.mean,
        });
    }

    let file = AggregateFile {
        folds: rows,
        aggregate: cv.aggregate.clone(),
        seed: exp.seed.unwrap(),
    };
    rundir::write_json(&ctx.run.report_dir().join("aggregate.json"), &file)?;

    let pairs: Vec<_> = cv
        .folds
        .iter()
        .map(|f| (f.split.clone(), &f.report))
        .collect();
    let text = tables::crossval(&pairs, &cv.aggregate);
    rundir::write_text(&ctx.run.report_dir().join("aggregate.txt"), &text)?;
    print!("{text}");
    Ok(())
}
