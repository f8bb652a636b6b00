//! The `train` command: one phase per invocation, prepared trials in,
//! checkpoint and logs out. The GAN phase consumes the two VAE
//! checkpoints and records which architecture it inherited, so a later
//! `evaluate` can rebuild the exact generator without the config file.

use neurosal::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use neurosal::config::{ExperimentConfig, TrainConfig, TrainPhase};
use neurosal::data::PreparedStore;
use neurosal::error::{Error, Result};
use neurosal::imaging::{EEGImage, NormStats};
use neurosal::models::{self, Vae};
use neurosal::saliency::SaliencyMap;
use neurosal::train::{train_gan, train_vae, TrainOutcome, VaeData};
use neurosal::{rng, train as core_train};

use crate::rundir::{self, Context};

/// Command-line knobs that beat the config file for the chosen phase.
pub struct Overrides {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub no_adversarial: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if self.no_adversarial {
            cfg.adversarial = false;
        }
    }
}

pub fn run(ctx: &Context, phase: TrainPhase, overrides: Overrides) -> Result<()> {
    let mut exp = ctx.load_config()?;
    {
        let cfg = match phase {
            TrainPhase::SaliencyVae => &mut exp.vae_saliency,
            TrainPhase::EegVae => &mut exp.vae_eeg,
            TrainPhase::Gan => &mut exp.gan,
        };
        overrides.apply(cfg);
    }
    exp.validate()?;
    let store = rundir::load_prepared_or_hint(&ctx.run)?;
    if store.trials.is_empty() {
        return Err(Error::input("the prepared store holds no trials"));
    }

    match phase {
        TrainPhase::SaliencyVae => train_saliency(ctx, &exp, &store),
        TrainPhase::EegVae => train_eeg(ctx, &exp, &store),
        TrainPhase::Gan => train_translator(ctx, &exp, &store),
    }
}

fn train_saliency(ctx: &Context, exp: &ExperimentConfig, store: &PreparedStore) -> Result<()> {
    let cfg = &exp.vae_saliency;
    let maps: Vec<SaliencyMap> = store.trials.iter().map(|t| t.target.clone()).collect();
    let mut vae = models::saliency_vae(&exp.model, &mut rng::seeded(cfg.seed));
    let outcome = train_vae(&mut vae, cfg, &exp.pipeline, &VaeData::Saliency(&maps))?;
    finish_phase(ctx, exp, cfg, outcome, &mut vae, "vae_saliency", None)
}

fn train_eeg(ctx: &Context, exp: &ExperimentConfig, store: &PreparedStore) -> Result<()> {
    let cfg = &exp.vae_eeg;
    // Images are stored raw; training uses the whole-set statistics
    // fitted at prepare time.
    let images: Vec<EEGImage> = rundir::normalized_trials(&store.trials, store.norm)
        .into_iter()
        .map(|t| t.image)
        .collect();
    let mut vae = models::eeg_vae(&exp.model, &mut rng::seeded(cfg.seed));
    vae.set_zero_mask(&images[0].zero_mask);
    let outcome = train_vae(&mut vae, cfg, &exp.pipeline, &VaeData::Eeg(&images))?;
    finish_phase(ctx, exp, cfg, outcome, &mut vae, "vae_eeg", Some(store.norm))
}

/// Loads a VAE checkpoint and rebuilds the VAE it was saved from, using
/// the architecture recorded inside the checkpoint itself.
fn revive_vae(
    ctx: &Context,
    name: &str,
    build: fn(&neurosal::config::ModelConfig, &mut rng::Rng) -> Vae,
) -> Result<(Vae, Checkpoint, ExperimentConfig)> {
    let path = ctx.run.checkpoint(name);
    if !path.exists() {
        return Err(Error::input(format!(
            "missing checkpoint {}; train VAEs first",
            path.display()
        )));
    }
    let ckpt = load_checkpoint(&path)?;
    let saved = ExperimentConfig::from_toml(&ckpt.config_toml)?;
    // Any seed works here; the restore overwrites every tensor.
    let mut vae = build(&saved.model, &mut rng::seeded(0));
    ckpt.restore_into(&vae.fingerprint(), &mut vae)?;
    Ok((vae, ckpt, saved))
}

fn train_translator(ctx: &Context, exp: &ExperimentConfig, store: &PreparedStore) -> Result<()> {
    let cfg = &exp.gan;
    let (sal, _, _) = revive_vae(ctx, "vae_saliency", models::saliency_vae)?;
    let (eeg, eeg_ckpt, saved) = revive_vae(ctx, "vae_eeg", models::eeg_vae)?;
    let norm = eeg_ckpt.norm.unwrap_or(store.norm);

    let mut init = rng::seeded(cfg.seed);
    let mut gen = core_train::assemble_and_freeze(eeg, sal, &saved.model, &mut init)?;
    let mut disc = models::discriminator(&saved.model, &mut init);

    let trials = rundir::normalized_trials(&store.trials, norm);
    let outcome = train_gan(&mut gen, &mut disc, cfg, &trials)?;
    report_outcome(ctx, cfg, &outcome);

    // The translator checkpoint must describe the architecture it was
    // assembled from, which is the VAEs', not necessarily the current
    // config file's. Only the gan section reflects this run.
    let mut snapshot = saved;
    snapshot.seed = exp.seed;
    snapshot.gan = cfg.clone();
    let config_toml = snapshot.to_toml()?;

    let name = if cfg.adversarial {
        "gan"
    } else {
        "gan_generator_only"
    };
    let epoch = outcome.best_epoch.unwrap_or(cfg.epochs);
    let fp = gen.fingerprint();
    let ckpt = Checkpoint::from_model(&mut gen, fp, "gan", epoch, Some(norm), config_toml.clone());
    save_checkpoint(&ckpt, &ctx.run.checkpoint(name))?;
    if cfg.adversarial {
        let fp = disc.fingerprint();
        let dckpt =
            Checkpoint::from_model(&mut disc, fp, "gan", epoch, Some(norm), config_toml);
        save_checkpoint(&dckpt, &ctx.run.checkpoint("discriminator"))?;
    }

    rundir::write_epoch_logs(&ctx.run.logs_dir(), name, &outcome.curve)?;
    summarize(ctx, name, &outcome, cfg.epochs);
    Ok(())
}

/// Shared tail of the two VAE phases: logs, checkpoint, summary line.
fn finish_phase(
    ctx: &Context,
    exp: &ExperimentConfig,
    cfg: &TrainConfig,
    outcome: TrainOutcome,
    vae: &mut Vae,
    name: &str,
    norm: Option<NormStats>,
) -> Result<()> {
    report_outcome(ctx, cfg, &outcome);
    let epoch = outcome.best_epoch.unwrap_or(cfg.epochs);
    let fp = vae.fingerprint();
    let ckpt = Checkpoint::from_model(vae, fp, name, epoch, norm, exp.to_toml()?);
    save_checkpoint(&ckpt, &ctx.run.checkpoint(name))?;
    rundir::write_epoch_logs(&ctx.run.logs_dir(), name, &outcome.curve)?;
    summarize(ctx, name, &outcome, cfg.epochs);
    Ok(())
}

fn report_outcome(ctx: &Context, cfg: &TrainConfig, outcome: &TrainOutcome) {
    for record in &outcome.curve {
        ctx.progress(&format!(
            "{} epoch {}/{} loss {:.6} val {:.6}",
            record.phase, record.epoch, cfg.epochs, record.loss_total, record.val_total
        ));
    }
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
}

fn summarize(ctx: &Context, name: &str, outcome: &TrainOutcome, epochs: usize) {
    let ran = outcome.curve.len();
    let stopped = if outcome.stopped_early {
        format!(" (stopped early after {ran}/{epochs})")
    } else {
        String::new()
    };
    match outcome.best_epoch {
        Some(best) => println!(
            "trained {name}: {ran} epochs, best val {:.6} at epoch {best}{stopped} -> {}",
            outcome.best_val,
            ctx.run.checkpoint(name).display()
        ),
        None => println!(
            "trained {name}: {ran} epochs -> {}",
            ctx.run.checkpoint(name).display()
        ),
    }
}
