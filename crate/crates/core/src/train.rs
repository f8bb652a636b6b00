//! Training loops: the two VAE phases, generator assembly with layer
//! freezing, adversarial training, and grouped cross-validation.
//!
//! Determinism contract: every random draw during training comes from
//! streams derived from the phase seed, so identical config and data
//! reproduce bit-identical loss curves. Wall-clock time is recorded per
//! epoch but is the only nondeterministic field.

use std::time::Instant;

use ndarray::{s, Array2, ArrayD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{collect_tensors, Checkpoint, NamedTensor};
use crate::config::{ExperimentConfig, ModelConfig, PipelineConfig, TrainConfig, TrainPhase};
use crate::data::PreparedTrial;
use crate::error::{Error, Result};
use crate::imaging::{self, EEGImage, NormStats};
use crate::losses;
use crate::metrics::{self, MetricsReport, MetricSummary};
use crate::models::{
    self, batch_images, batch_maps, draw_noise, sample_backward, sample_latent,
    Discriminator, Generator, Vae,
};
use crate::nn::{zero_grads, ParamVisit};
use crate::optim::Adam;
use crate::rng;
use crate::saliency::{self, SaliencyMap};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_content: f64,
    pub loss_kld: f64,
    pub loss_adv: f64,
    pub loss_disc: f64,
    pub val_total: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

impl EpochRecord {
    /// Everything except the wall clock, for determinism comparisons.
    pub fn deterministic_fields(&self) -> impl PartialEq + std::fmt::Debug {
        (
            self.phase.clone(),
            self.epoch,
            self.loss_total.to_bits(),
            self.loss_content.to_bits(),
            self.loss_kld.to_bits(),
            self.loss_adv.to_bits(),
            self.loss_disc.to_bits(),
            self.val_total.to_bits(),
            self.lr.to_bits(),
        )
    }
}

/// Result of one training phase. The model is left holding the weights
/// of the best validation epoch; `snapshot` holds the same tensors for
/// checkpointing.
#[derive(Debug)]
pub struct TrainOutcome {
    pub curve: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val: f64,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

/// Input of a VAE phase; must match `TrainConfig::phase`.
pub enum VaeData<'a> {
    /// Padded square ground-truth maps.
    Saliency(&'a [SaliencyMap]),
    /// Normalized EEG-images.
    Eeg(&'a [EEGImage]),
}

fn validate_common(cfg: &TrainConfig, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::training("no training samples"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::config("validation fraction must be in [0, 1)"));
    }
    Ok(())
}

/// Deterministic validation split: indices are shuffled once under the
/// phase seed, the head becomes validation. With one sample or a zero
/// fraction everything trains and validation reuses the training loss.
fn split_indices(n: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::substream(cfg.seed, "val_split");
    idx.shuffle(&mut r);
    let n_val = if cfg.val_fraction > 0.0 && n >= 2 {
        (((n as f64) * cfg.val_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

fn non_finite_snapshot(phase: &str, epoch: usize, batch: usize, terms: &[(&str, f64)]) -> Error {
    let detail: Vec<String> = terms.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Error::training(format!(
        "non-finite loss in {phase} at epoch {epoch}, batch {batch}: {}",
        detail.join(", ")
    ))
}

struct BestTracker {
    best_val: f64,
    best_epoch: Option<usize>,
    snapshot: Option<Vec<NamedTensor>>,
}

impl BestTracker {
    fn new() -> Self {
        BestTracker {
            best_val: f64::INFINITY,
            best_epoch: None,
            snapshot: None,
        }
    }

    fn observe<M: crate::nn::ParamVisit + ?Sized>(
        &mut self,
        val: f64,
        epoch: usize,
        model: &mut M,
    ) {
        if val < self.best_val {
            self.best_val = val;
            self.best_epoch = Some(epoch);
            self.snapshot = Some(collect_tensors(model));
        }
    }

    fn restore<M: crate::nn::ParamVisit + ?Sized>(&self, fingerprint: &str, model: &mut M) {
        if let Some(snap) = &self.snapshot {
            let ckpt = Checkpoint {
                fingerprint: fingerprint.to_string(),
                phase: String::new(),
                epoch: 0,
                norm: None,
                config_toml: String::new(),
                tensors: snap.clone(),
            };
            ckpt.restore_into(fingerprint, model)
                .expect("snapshot came from this very model");
        }
    }
}

/// Trains one VAE: per epoch, augment, forward with a sampled latent,
/// loss, Adam step. Validation runs deterministically (no augmentation,
/// latent = posterior mean) and the best validation epoch's weights are
/// restored into the model at the end.
pub fn train_vae(vae: &mut Vae, cfg: &TrainConfig, pipeline: &PipelineConfig, data: &VaeData)
    -> Result<TrainOutcome>
{
    let n = match data {
        VaeData::Saliency(maps) => {
            if cfg.phase != TrainPhase::SaliencyVae {
                return Err(Error::config("saliency maps given to a non-saliency phase"));
            }
            maps.len()
        }
        VaeData::Eeg(imgs) => {
            if cfg.phase != TrainPhase::EegVae {
                return Err(Error::config("EEG-images given to a non-EEG phase"));
            }
            imgs.len()
        }
    };
    validate_common(cfg, n)?;
    let phase = cfg.phase.as_str();
    let (train_idx, val_idx) = split_indices(n, cfg);
    let mut opt = Adam::new(cfg.learning_rate, cfg.weight_decay);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best = BestTracker::new();
    let fingerprint = vae.fingerprint();

    for epoch in 0..cfg.epochs {
        let clock = Instant::now();
        let mut erng = rng::indexed_substream(cfg.seed, "epoch", epoch as u64);
        let mut order = train_idx.clone();
        order.shuffle(&mut erng);

        let mut sum_content = 0.0;
        let mut sum_kld = 0.0;
        let mut seen = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // Augment, then reconstruct the augmented sample itself.
            let x: ArrayD<f64> = match data {
                VaeData::Saliency(maps) => {
                    let mut batch = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        batch.push(
                            saliency::augment_saliency_with(
                                &maps[i],
                                pipeline.flip_prob,
                                pipeline.max_shift_px,
                                &mut erng,
                            )?
                            .pixels,
                        );
                    }
                    let refs: Vec<&Array2<f64>> = batch.iter().collect();
                    batch_maps(&refs).into_dyn()
                }
                VaeData::Eeg(imgs) => {
                    let mut batch = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        batch.push(
                            imaging::add_training_noise(&imgs[i], pipeline.noise_std, &mut erng)?
                                .frames,
                        );
                    }
                    let refs: Vec<&ndarray::Array3<f64>> = batch.iter().collect();
                    batch_images(&refs).into_dyn()
                }
            };

            let dist = vae.encode(x.clone(), true);
            let (z, eps) = sample_latent(&dist, &mut erng);
            let y = vae.decode(&z, true);
            let terms = match data {
                VaeData::Saliency(_) => losses::saliency_vae_loss(&y, &x, &dist, cfg.kld_weight),
                VaeData::Eeg(_) => losses::eeg_vae_loss(&y, &x, &dist, cfg.kld_weight),
            };
            if !terms.total.is_finite() {
                return Err(non_finite_snapshot(
                    phase,
                    epoch,
                    batch_no,
                    &[
                        ("content", terms.content),
                        ("kld", terms.kld),
                        ("total", terms.total),
                    ],
                ));
            }

            zero_grads(vae);
            let dpred = match data {
                VaeData::Saliency(_) => losses::bce_grad(&y, &x),
                VaeData::Eeg(_) => losses::mse_grad(&y, &x),
            };
            let dz = vae.backward_decode(dpred);
            let (dmean_s, dlogvar_s) = sample_backward(&dist, &eps, &dz);
            let (dmean_k, dlogvar_k) = losses::kld_grad(&dist);
            let dmean = &dmean_s + &(cfg.kld_weight * &dmean_k);
            let dlogvar = &dlogvar_s + &(cfg.kld_weight * &dlogvar_k);
            vae.backward_encode(&dmean, &dlogvar);
            opt.step(vae);

            sum_content += terms.content * chunk.len() as f64;
            sum_kld += terms.kld * chunk.len() as f64;
            seen += chunk.len();
        }

        let train_content = sum_content / seen as f64;
        let train_kld = sum_kld / seen as f64;
        let train_total = train_content + cfg.kld_weight * train_kld;

        let val_total = if val_idx.is_empty() {
            train_total
        } else {
            validate_vae(vae, data, &val_idx, cfg.kld_weight)
        };
        best.observe(val_total, epoch, vae);
        curve.push(EpochRecord {
            phase: phase.to_string(),
            epoch,
            loss_total: train_total,
            loss_content: train_content,
            loss_kld: train_kld,
            loss_adv: 0.0,
            loss_disc: 0.0,
            val_total,
            lr: cfg.learning_rate,
            wall_ms: clock.elapsed().as_millis() as u64,
        });
    }

    best.restore(&fingerprint, vae);
    Ok(TrainOutcome {
        curve,
        best_epoch: best.best_epoch,
        best_val: best.best_val,
        stopped_early: false,
        warnings: Vec::new(),
    })
}

/// Deterministic held-out loss: eval mode, no augmentation, latent at
/// the posterior mean.
fn validate_vae(vae: &mut Vae, data: &VaeData, idx: &[usize], kld_weight: f64) -> f64 {
    let x: ArrayD<f64> = match data {
        VaeData::Saliency(maps) => {
            let refs: Vec<&Array2<f64>> = idx.iter().map(|&i| &maps[i].pixels).collect();
            batch_maps(&refs).into_dyn()
        }
        VaeData::Eeg(imgs) => {
            let refs: Vec<&ndarray::Array3<f64>> = idx.iter().map(|&i| &imgs[i].frames).collect();
            batch_images(&refs).into_dyn()
        }
    };
    let dist = vae.encode(x.clone(), false);
    let z = dist.mean.clone();
    let y = vae.decode(&z, false);
    let terms = match data {
        VaeData::Saliency(_) => losses::saliency_vae_loss(&y, &x, &dist, kld_weight),
        VaeData::Eeg(_) => losses::eeg_vae_loss(&y, &x, &dist, kld_weight),
    };
    terms.total
}

fn head_latent_dim(vae: &mut Vae, suffix: &str, axis: usize) -> Result<usize> {
    let mut dim = None;
    vae.visit_params(&mut |p| {
        if p.name.ends_with(suffix) {
            dim = Some(p.value.shape()[axis]);
        }
    });
    dim.ok_or_else(|| Error::training(format!("no parameter matching {suffix}")))
}

/// Builds the translator from two trained VAEs: the EEG encoder and the
/// saliency decoder move in, everything is frozen except the encoder
/// heads, the decoder seed layer, and the freshly initialized mapper.
pub fn assemble_and_freeze(
    mut eeg: Vae,
    mut saliency: Vae,
    cfg: &ModelConfig,
    rng: &mut rng::Rng,
) -> Result<Generator> {
    // Output rows of the mean head and input columns of the decoder seed
    // are the two latent widths that must agree.
    let enc_dim = head_latent_dim(&mut eeg, "mean.weight", 0)?;
    let dec_dim = head_latent_dim(&mut saliency, "seed.weight", 1)?;
    if enc_dim != dec_dim || enc_dim != cfg.latent_dim {
        return Err(Error::training(format!(
            "latent width mismatch: encoder {enc_dim}, decoder {dec_dim}, config {}",
            cfg.latent_dim
        )));
    }
    Ok(Generator::assemble(eeg, saliency, cfg, rng))
}

/// Number of scores below the saturation threshold that triggers the
/// collapsed-discriminator warning.
const SATURATION_EPS: f64 = 1e-6;

/// Adversarial phase: per batch, one discriminator step on real maps
/// and freshly generated fakes, then one generator step; two optimizers.
/// With `adversarial = false` the discriminator is never touched and the
/// generator trains on content + KL alone. Early stopping (when enabled)
/// watches the validation content BCE for a plateau.
pub fn train_gan(
    gen: &mut Generator,
    disc: &mut Discriminator,
    cfg: &TrainConfig,
    trials: &[PreparedTrial],
) -> Result<TrainOutcome> {
    if cfg.phase != TrainPhase::Gan {
        return Err(Error::config("train_gan requires the gan phase"));
    }
    validate_common(cfg, trials.len())?;
    let phase = cfg.phase.as_str();
    let (train_idx, val_idx) = split_indices(trials.len(), cfg);
    let mut opt_g = Adam::new(cfg.learning_rate, cfg.weight_decay);
    let mut opt_d = Adam::new(cfg.disc_learning_rate, cfg.disc_weight_decay);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut warnings = Vec::new();
    let mut best = BestTracker::new();
    let mut best_disc: Option<Vec<NamedTensor>> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let gen_fp = gen.fingerprint();
    let disc_fp = disc.fingerprint();

    for epoch in 0..cfg.epochs {
        let clock = Instant::now();
        let mut erng = rng::indexed_substream(cfg.seed, "epoch", epoch as u64);
        let mut order = train_idx.clone();
        order.shuffle(&mut erng);

        let mut sums = [0.0f64; 5]; // content, kld, adv, disc, total
        let mut seen = 0usize;
        let mut epoch_max_fake = f64::NEG_INFINITY;

        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let nb = chunk.len();
            let imgs: Vec<&ndarray::Array3<f64>> =
                chunk.iter().map(|&i| &trials[i].image.frames).collect();
            let maps: Vec<&Array2<f64>> =
                chunk.iter().map(|&i| &trials[i].target.pixels).collect();
            let x = batch_images(&imgs).into_dyn();
            let t = batch_maps(&maps).into_dyn();

            let mut d_real_scores = Array2::from_elem((nb, 1), 0.5);
            if cfg.adversarial {
                // Discriminator step: reals and current fakes in one
                // combined batch so one backward covers both terms.
                let fakes = {
                    let dist = gen.encode(x.clone(), false);
                    let (z, _) = sample_latent(&dist, &mut erng);
                    let noise = draw_noise(nb, gen.latent_dim, &mut erng);
                    let zs = gen.map(&z, &noise, false);
                    gen.decode(&zs, false)
                };
                let mut combined = ArrayD::zeros(
                    [2 * nb, 1, t.shape()[2], t.shape()[3]].to_vec(),
                );
                combined.slice_mut(s![0..nb, .., .., ..]).assign(&t);
                combined.slice_mut(s![nb..2 * nb, .., .., ..]).assign(&fakes);
                let scores = disc.forward(combined, true);
                let d_real = scores.slice(s![0..nb, ..]).to_owned();
                let d_fake = scores.slice(s![nb..2 * nb, ..]).to_owned();
                let terms = losses::discriminator_loss(&d_real, &d_fake);
                if !terms.total.is_finite() {
                    return Err(non_finite_snapshot(
                        phase,
                        epoch,
                        batch_no,
                        &[("disc_real", terms.real), ("disc_fake", terms.fake)],
                    ));
                }
                let (gr, gf) = losses::discriminator_grad(&d_real, &d_fake);
                let mut dscores = Array2::zeros((2 * nb, 1));
                dscores.slice_mut(s![0..nb, ..]).assign(&gr);
                dscores.slice_mut(s![nb..2 * nb, ..]).assign(&gf);
                zero_grads(disc);
                disc.backward(&dscores);
                opt_d.step(disc);
                sums[3] += terms.total * nb as f64;
                d_real_scores = d_real;
            }

            // Generator step.
            let dist = gen.encode(x, true);
            let (z, eps) = sample_latent(&dist, &mut erng);
            let noise = draw_noise(nb, gen.latent_dim, &mut erng);
            let zs = gen.map(&z, &noise, true);
            let y = gen.decode(&zs, true);

            let (terms_total, terms_content, terms_kld, terms_adv, dpred) = if cfg.adversarial {
                let d_fake = disc.forward(y.clone(), true);
                for &v in d_fake.iter() {
                    epoch_max_fake = epoch_max_fake.max(v);
                }
                let terms =
                    losses::generator_loss(&y, &t, &dist, &d_fake, &d_real_scores, cfg.kld_weight);
                if !terms.total.is_finite() {
                    return Err(non_finite_snapshot(
                        phase,
                        epoch,
                        batch_no,
                        &[
                            ("content", terms.content),
                            ("kld", terms.kld),
                            ("adversarial", terms.adversarial),
                        ],
                    ));
                }
                // The adversarial pull on the map arrives through the
                // discriminator; its own parameter grads are cleared at
                // the start of the next discriminator step.
                let dadv = disc.backward(&losses::generator_adv_grad(&d_fake));
                let dpred = losses::bce_grad(&y, &t) + &dadv;
                (terms.total, terms.content, terms.kld, terms.adversarial, dpred)
            } else {
                let content = losses::bce(&y, &t);
                let kld = losses::kld(&dist);
                let total = content + cfg.kld_weight * kld;
                if !total.is_finite() {
                    return Err(non_finite_snapshot(
                        phase,
                        epoch,
                        batch_no,
                        &[("content", content), ("kld", kld)],
                    ));
                }
                (total, content, kld, 0.0, losses::bce_grad(&y, &t))
            };

            zero_grads(gen);
            let dz_sal = gen.backward_decode(dpred);
            let dz = gen.backward_map(&dz_sal);
            let (dmean_s, dlogvar_s) = sample_backward(&dist, &eps, &dz);
            let (dmean_k, dlogvar_k) = losses::kld_grad(&dist);
            let dmean = &dmean_s + &(cfg.kld_weight * &dmean_k);
            let dlogvar = &dlogvar_s + &(cfg.kld_weight * &dlogvar_k);
            gen.backward_encode(&dmean, &dlogvar);
            opt_g.step(gen);

            sums[0] += terms_content * nb as f64;
            sums[1] += terms_kld * nb as f64;
            sums[2] += terms_adv * nb as f64;
            sums[4] += terms_total * nb as f64;
            seen += nb;
        }

        if cfg.adversarial && epoch_max_fake < SATURATION_EPS {
            warnings.push(format!(
                "epoch {epoch}: discriminator saturated, every fake score below {SATURATION_EPS}"
            ));
        }

        let val_total = if val_idx.is_empty() {
            sums[0] / seen as f64
        } else {
            validate_generator(gen, trials, &val_idx)
        };
        let improved = val_total < best.best_val - cfg.min_delta;
        best.observe(val_total, epoch, gen);
        if best.best_epoch == Some(epoch) {
            best_disc = Some(collect_tensors(disc));
        }
        curve.push(EpochRecord {
            phase: phase.to_string(),
            epoch,
            loss_total: sums[4] / seen as f64,
            loss_content: sums[0] / seen as f64,
            loss_kld: sums[1] / seen as f64,
            loss_adv: sums[2] / seen as f64,
            loss_disc: sums[3] / seen as f64,
            val_total,
            lr: cfg.learning_rate,
            wall_ms: clock.elapsed().as_millis() as u64,
        });

        if cfg.early_stop {
            if improved {
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    best.restore(&gen_fp, gen);
    if let Some(snap) = best_disc {
        let ckpt = Checkpoint {
            fingerprint: disc_fp.clone(),
            phase: String::new(),
            epoch: 0,
            norm: None,
            config_toml: String::new(),
            tensors: snap,
        };
        ckpt.restore_into(&disc_fp, disc)
            .expect("snapshot came from this very discriminator");
    }
    Ok(TrainOutcome {
        curve,
        best_epoch: best.best_epoch,
        best_val: best.best_val,
        stopped_early,
        warnings,
    })
}

/// Deterministic held-out content BCE: eval mode, latent at the mean,
/// zero mapper noise.
fn validate_generator(gen: &mut Generator, trials: &[PreparedTrial], idx: &[usize]) -> f64 {
    let imgs: Vec<&ndarray::Array3<f64>> = idx.iter().map(|&i| &trials[i].image.frames).collect();
    let maps: Vec<&Array2<f64>> = idx.iter().map(|&i| &trials[i].target.pixels).collect();
    let x = batch_images(&imgs).into_dyn();
    let t = batch_maps(&maps).into_dyn();
    let dist = gen.encode(x, false);
    let noise = Array2::zeros((idx.len(), gen.latent_dim));
    let zs = gen.map(&dist.mean.clone(), &noise, false);
    let y = gen.decode(&zs, false);
    losses::bce(&y, &t)
}

/// One cross-validation fold: which trials train and which test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub participants: Vec<String>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Groups participants into `n_folds` folds round-robin in sorted order.
/// Exactly five participants give classic leave-one-participant-out.
pub fn participant_folds(trials: &[PreparedTrial], n_folds: usize) -> Result<Vec<FoldSplit>> {
    let mut participants: Vec<String> = trials
        .iter()
        .map(|t| t.participant_id.clone())
        .collect();
    participants.sort();
    participants.dedup();
    if participants.len() < n_folds {
        return Err(Error::training(format!(
            "{}-fold cross-validation needs at least {} participants, found {}",
            n_folds,
            n_folds,
            participants.len()
        )));
    }
    let mut folds: Vec<FoldSplit> = (0..n_folds)
        .map(|i| FoldSplit {
            fold_index: i,
            participants: Vec::new(),
            train_ids: Vec::new(),
            test_ids: Vec::new(),
        })
        .collect();
    for (i, p) in participants.iter().enumerate() {
        folds[i % n_folds].participants.push(p.clone());
    }
    for trial in trials {
        let fold = participants
            .iter()
            .position(|p| p == &trial.participant_id)
            .unwrap()
            % n_folds;
        for (i, split) in folds.iter_mut().enumerate() {
            if i == fold {
                split.test_ids.push(trial.trial_id);
            } else {
                split.train_ids.push(trial.trial_id);
            }
        }
    }
    Ok(folds)
}

/// Everything produced while running one fold.
#[derive(Debug)]
pub struct FoldOutcome {
    pub split: FoldSplit,
    pub report: MetricsReport,
    pub curves: Vec<EpochRecord>,
    pub norm: NormStats,
    pub warnings: Vec<String>,
}

/// Per-metric mean and std across fold means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub auc_judd: MetricSummary,
    pub nss: MetricSummary,
    pub cc: MetricSummary,
    pub bce: MetricSummary,
    pub n_folds: usize,
}

#[derive(Debug)]
pub struct CrossValidation {
    pub folds: Vec<FoldOutcome>,
    pub aggregate: Aggregate,
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

/// Runs the full three-phase protocol on one training split and returns
/// the trained generator with the normalization fitted on that split.
pub fn train_full_pipeline(
    train: &[PreparedTrial],
    exp: &ExperimentConfig,
    init_seed: u64,
) -> Result<(Generator, Discriminator, NormStats, Vec<EpochRecord>, Vec<String>)> {
    let mut init = rng::seeded(init_seed);
    let mut curves = Vec::new();
    let mut warnings = Vec::new();

    // Normalization is fitted on the training images only.
    let mut images: Vec<EEGImage> = train.iter().map(|t| t.image.clone()).collect();
    let norm = imaging::normalize_dataset(&mut images)?;
    let maps: Vec<SaliencyMap> = train.iter().map(|t| t.target.clone()).collect();

    let mut sal = models::saliency_vae(&exp.model, &mut init);
    let out = train_vae(&mut sal, &exp.vae_saliency, &exp.pipeline, &VaeData::Saliency(&maps))?;
    curves.extend(out.curve);
    warnings.extend(out.warnings);

    let mut eeg = models::eeg_vae(&exp.model, &mut init);
    eeg.set_zero_mask(&images[0].zero_mask);
    let out = train_vae(&mut eeg, &exp.vae_eeg, &exp.pipeline, &VaeData::Eeg(&images))?;
    curves.extend(out.curve);
    warnings.extend(out.warnings);

    let mut gen = assemble_and_freeze(eeg, sal, &exp.model, &mut init)?;
    let mut disc = models::discriminator(&exp.model, &mut init);
    let normalized: Vec<PreparedTrial> = train
        .iter()
        .zip(images)
        .map(|(t, image)| PreparedTrial {
            image,
            ..t.clone()
        })
        .collect();
    let out = train_gan(&mut gen, &mut disc, &exp.gan, &normalized)?;
    curves.extend(out.curve);
    warnings.extend(out.warnings);
    Ok((gen, disc, norm, curves, warnings))
}

/// Grouped 5-fold cross-validation: per fold, train both VAEs and the
/// GAN on the training participants and evaluate on the held-out ones.
pub fn crossvalidate(prepared: &[PreparedTrial], exp: &ExperimentConfig) -> Result<CrossValidation> {
    let splits = participant_folds(prepared, 5)?;
    let seed = exp.seed.unwrap_or(0);
    let mut folds = Vec::with_capacity(splits.len());
    for split in splits {
        let train: Vec<PreparedTrial> = prepared
            .iter()
            .filter(|t| split.train_ids.contains(&t.trial_id))
            .cloned()
            .collect();
        let mut test: Vec<PreparedTrial> = prepared
            .iter()
            .filter(|t| split.test_ids.contains(&t.trial_id))
            .cloned()
            .collect();

        let fold_seed = seed.wrapping_add(split.fold_index as u64);
        let (mut gen, _disc, norm, curves, warnings) =
            train_full_pipeline(&train, exp, fold_seed)?;
        for t in &mut test {
            imaging::apply_normalization(&mut t.image, norm);
        }
        let report = metrics::evaluate(&mut gen, &test, seed)?;
        folds.push(FoldOutcome {
            split,
            report,
            curves,
            norm,
            warnings,
        });
    }
    let col = |f: fn(&MetricsReport) -> f64| folds.iter().map(|o| f(&o.report)).collect::<Vec<_>>();
    let aggregate = Aggregate {
        auc_judd: summarize(&col(|r| r.auc_judd.mean)),
        nss: summarize(&col(|r| r.nss.mean)),
        cc: summarize(&col(|r| r.cc.mean)),
        bce: summarize(&col(|r| r.bce.mean)),
        n_folds: folds.len(),
    };
    Ok(CrossValidation { folds, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ArchPreset, SyntheticConfig, UpsampleMode};
    use crate::models::sample_with_eps;
    use rand::Rng as _;

    fn tiny_model_cfg(frames: usize) -> ModelConfig {
        ModelConfig::tiny(frames)
    }

    fn quick_train_cfg(phase: TrainPhase, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            phase,
            epochs,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            disc_learning_rate: 1e-3,
            disc_weight_decay: 0.0,
            batch_size: 8,
            seed,
            kld_weight: 0.5,
            early_stop: false,
            patience: 100,
            min_delta: 1e-4,
            val_fraction: 0.25,
            adversarial: true,
        }
    }

    fn blob_map(row: usize, col: usize, id: usize) -> SaliencyMap {
        let mut pixels = Array2::from_elem((81, 81), 0.02);
        for r in 0..81usize {
            for c in 0..81usize {
                let d2 = (r as f64 - row as f64).powi(2) + (c as f64 - col as f64).powi(2);
                pixels[[r, c]] += 0.9 * (-d2 / 40.0).exp();
            }
        }
        SaliencyMap {
            pixels,
            is_padded: true,
            n_gaze_points: 5,
            trial_id: id,
        }
    }

    fn random_image(frames: usize, id: usize, rng: &mut crate::rng::Rng) -> EEGImage {
        EEGImage {
            frames: ndarray::Array3::from_shape_fn((frames, 32, 32), |_| rng.gen_range(-1.0..1.0)),
            zero_mask: Array2::from_elem((32, 32), false),
            trial_id: id,
        }
    }

    fn paired_trials(n: usize, frames: usize, seed: u64) -> Vec<PreparedTrial> {
        let mut r = crate::rng::seeded(seed);
        (0..n)
            .map(|i| {
                let left = i % 2 == 0;
                let col = if left { 20 } else { 60 };
                let mut image = random_image(frames, i, &mut r);
                // Plant a strong lateralized cue in the image content.
                let bias = if left { 1.5 } else { -1.5 };
                image.frames.slice_mut(s![.., .., 0..16]).mapv_inplace(|v| v + bias);
                PreparedTrial {
                    participant_id: format!("p{:02}", i % 4 + 1),
                    trial_id: i,
                    image,
                    target: blob_map(40, col, i),
                    fixations: vec![[40, col], [41, col + 1], [39, col - 1]],
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_return_initial_params_and_empty_curve() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(1);
        let mut vae = models::saliency_vae(&cfg, &mut r);
        let before = collect_tensors(&mut vae);
        let maps: Vec<SaliencyMap> = (0..4).map(|i| blob_map(40, 20 + i, i)).collect();
        let out = train_vae(
            &mut vae,
            &quick_train_cfg(TrainPhase::SaliencyVae, 0, 3),
            &PipelineConfig::default(),
            &VaeData::Saliency(&maps),
        )
        .unwrap();
        assert!(out.curve.is_empty());
        assert_eq!(out.best_epoch, None);
        let after = collect_tensors(&mut vae);
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn vae_training_is_deterministic_and_reduces_loss() {
        let maps: Vec<SaliencyMap> = (0..12)
            .map(|i| blob_map(30 + (i % 3) * 10, 20 + (i % 5) * 8, i))
            .collect();
        let run = || {
            let cfg = tiny_model_cfg(5);
            let mut r = crate::rng::seeded(2);
            let mut vae = models::saliency_vae(&cfg, &mut r);
            train_vae(
                &mut vae,
                &quick_train_cfg(TrainPhase::SaliencyVae, 25, 5),
                &PipelineConfig::default(),
                &VaeData::Saliency(&maps),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.curve.len(), 25);
        for (ra, rb) in a.curve.iter().zip(&b.curve) {
            assert_eq!(ra.deterministic_fields(), rb.deterministic_fields());
        }
        // Adam at 1e-3 on 12 maps must make clear progress in 25 epochs.
        let first = a.curve[0].loss_total;
        let last = a.curve.last().unwrap().loss_total;
        assert!(last < first * 0.9, "loss {first} -> {last}");
        assert!(a.best_epoch.is_some());
    }

    #[test]
    fn eeg_vae_trains_on_masked_images() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(4);
        let mut mask = Array2::from_elem((32, 32), false);
        for i in 0..32 {
            mask[[0, i]] = true;
            mask[[31, i]] = true;
        }
        let images: Vec<EEGImage> = (0..8)
            .map(|i| {
                let mut img = random_image(5, i, &mut r);
                for f in 0..5 {
                    for i2 in 0..32 {
                        img.frames[[f, 0, i2]] = 0.0;
                        img.frames[[f, 31, i2]] = 0.0;
                    }
                }
                img.zero_mask = mask.clone();
                img
            })
            .collect();
        let mut vae = models::eeg_vae(&cfg, &mut r);
        vae.set_zero_mask(&mask);
        let out = train_vae(
            &mut vae,
            &quick_train_cfg(TrainPhase::EegVae, 10, 6),
            &PipelineConfig::default(),
            &VaeData::Eeg(&images),
        )
        .unwrap();
        assert_eq!(out.curve.len(), 10);
        assert!(out.curve.iter().all(|r| r.loss_total.is_finite()));
    }

    #[test]
    fn non_finite_loss_aborts_with_a_diagnostic() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(5);
        let mut vae = models::saliency_vae(&cfg, &mut r);
        vae.visit_params(&mut |p| {
            if p.name == "sal_enc.mean.weight" {
                p.value.fill(f64::NAN);
            }
        });
        let maps: Vec<SaliencyMap> = (0..4).map(|i| blob_map(40, 30, i)).collect();
        let err = train_vae(
            &mut vae,
            &quick_train_cfg(TrainPhase::SaliencyVae, 3, 7),
            &PipelineConfig::default(),
            &VaeData::Saliency(&maps),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("non-finite"), "{err}");
        assert!(err.contains("epoch 0"), "{err}");
    }

    #[test]
    fn phase_and_data_must_agree() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(6);
        let mut vae = models::saliency_vae(&cfg, &mut r);
        let maps: Vec<SaliencyMap> = (0..2).map(|i| blob_map(40, 30, i)).collect();
        let err = train_vae(
            &mut vae,
            &quick_train_cfg(TrainPhase::EegVae, 1, 1),
            &PipelineConfig::default(),
            &VaeData::Saliency(&maps),
        );
        assert!(err.is_err());
    }

    /// Central finite differences through the full model forward plus
    /// loss, on a handful of randomly chosen parameter entries.
    fn fd_composite_loss<F>(
        probe_params: &[(String, usize)],
        get_set: &mut dyn FnMut(&str, usize, Option<f64>) -> f64,
        mut loss: F,
        grads: &std::collections::HashMap<(String, usize), f64>,
    ) where
        F: FnMut() -> f64,
    {
        for (name, flat) in probe_params {
            let base = get_set(name, *flat, None);
            // Small enough to dodge most ReLU kinks in the window, large
            // enough to stay clear of roundoff in the loss.
            let h = 1e-6 * (1.0 + base.abs());
            get_set(name, *flat, Some(base + h));
            let up = loss();
            get_set(name, *flat, Some(base - h));
            let down = loss();
            get_set(name, *flat, Some(base));
            let fd = (up - down) / (2.0 * h);
            let got = grads[&(name.clone(), *flat)];
            let tol = 1e-3 * (1.0 + fd.abs().max(got.abs()));
            assert!(
                (got - fd).abs() < tol,
                "{name}[{flat}]: analytic {got} vs fd {fd}"
            );
        }
    }

    fn pick_params<M: ParamVisit + ?Sized>(
        model: &mut M,
        count: usize,
        seed: u64,
    ) -> Vec<(String, usize)> {
        let mut all = Vec::new();
        model.visit_params(&mut |p| {
            if p.trainable {
                all.push((p.name.clone(), p.value.len()));
            }
        });
        let mut r = crate::rng::seeded(seed);
        (0..count)
            .map(|_| {
                let (name, len) = all[r.gen_range(0..all.len())].clone();
                (name, r.gen_range(0..len))
            })
            .collect()
    }

    fn param_access<M: ParamVisit + ?Sized>(
        model: &mut M,
        name: &str,
        flat: usize,
        set: Option<f64>,
    ) -> f64 {
        let mut out = 0.0;
        model.visit_params(&mut |p| {
            if p.name == name {
                let v = p.value.as_slice_mut().expect("params are contiguous");
                if let Some(new) = set {
                    v[flat] = new;
                }
                out = v[flat];
            }
        });
        out
    }

    fn grad_of<M: ParamVisit + ?Sized>(model: &mut M, name: &str, flat: usize) -> f64 {
        let mut out = 0.0;
        model.visit_params(&mut |p| {
            if p.name == name {
                out = p.grad.as_slice().expect("grads are contiguous")[flat];
            }
        });
        out
    }

    #[test]
    fn saliency_vae_loss_gradient_matches_finite_differences() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(11);
        let mut vae = models::saliency_vae(&cfg, &mut r);
        let maps: Vec<SaliencyMap> = (0..2).map(|i| blob_map(40, 25 + 30 * i, i)).collect();
        let refs: Vec<&Array2<f64>> = maps.iter().map(|m| &m.pixels).collect();
        let x = batch_maps(&refs).into_dyn();
        let eps = Array2::from_shape_fn((2, cfg.latent_dim), |_| r.gen_range(-1.0..1.0));

        // Analytic gradients from one backward pass at fixed eps.
        zero_grads(&mut vae);
        let dist = vae.encode(x.clone(), true);
        let z = sample_with_eps(&dist, &eps);
        let y = vae.decode(&z, true);
        let dpred = losses::bce_grad(&y, &x);
        let dz = vae.backward_decode(dpred);
        let (dm_s, dlv_s) = sample_backward(&dist, &eps, &dz);
        let (dm_k, dlv_k) = losses::kld_grad(&dist);
        let dm = &dm_s + &(0.5 * &dm_k);
        let dlv = &dlv_s + &(0.5 * &dlv_k);
        vae.backward_encode(&dm, &dlv);

        let probes = pick_params(&mut vae, 10, 77);
        let mut grads = std::collections::HashMap::new();
        for (n, f) in &probes {
            grads.insert((n.clone(), *f), grad_of(&mut vae, n, *f));
        }
        let vae_cell = std::cell::RefCell::new(&mut vae);
        fd_composite_loss(
            &probes,
            &mut |n, f, s| param_access(*vae_cell.borrow_mut(), n, f, s),
            || {
                let mut v = vae_cell.borrow_mut();
                let dist = v.encode(x.clone(), true);
                let z = sample_with_eps(&dist, &eps);
                let y = v.decode(&z, true);
                losses::saliency_vae_loss(&y, &x, &dist, 0.5).total
            },
            &grads,
        );
    }

    #[test]
    fn generator_and_discriminator_loss_gradients_match_finite_differences() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(13);
        let sal = models::saliency_vae(&cfg, &mut r);
        let eeg = models::eeg_vae(&cfg, &mut r);
        let mut gen = assemble_and_freeze(eeg, sal, &cfg, &mut r).unwrap();
        let mut disc = models::discriminator(&cfg, &mut r);

        let trials = paired_trials(2, 5, 21);
        let imgs: Vec<&ndarray::Array3<f64>> = trials.iter().map(|t| &t.image.frames).collect();
        let maps: Vec<&Array2<f64>> = trials.iter().map(|t| &t.target.pixels).collect();
        let x = batch_images(&imgs).into_dyn();
        let t = batch_maps(&maps).into_dyn();
        let eps = Array2::from_shape_fn((2, cfg.latent_dim), |_| r.gen_range(-1.0..1.0));
        let noise = Array2::from_shape_fn((2, cfg.latent_dim), |_| r.gen_range(-1.0..1.0));

        // Generator objective at fixed eps and noise.
        zero_grads(&mut gen);
        zero_grads(&mut disc);
        let dist = gen.encode(x.clone(), true);
        let z = sample_with_eps(&dist, &eps);
        let zs = gen.map(&z, &noise, true);
        let y = gen.decode(&zs, true);
        let d_fake = disc.forward(y.clone(), true);
        let dadv = disc.backward(&losses::generator_adv_grad(&d_fake));
        let dpred = losses::bce_grad(&y, &t) + &dadv;
        let dz_sal = gen.backward_decode(dpred);
        let dz = gen.backward_map(&dz_sal);
        let (dm_s, dlv_s) = sample_backward(&dist, &eps, &dz);
        let (dm_k, dlv_k) = losses::kld_grad(&dist);
        let dm = &dm_s + &(0.5 * &dm_k);
        let dlv = &dlv_s + &(0.5 * &dlv_k);
        gen.backward_encode(&dm, &dlv);

        let probes = pick_params(&mut gen, 10, 78);
        let mut grads = std::collections::HashMap::new();
        for (n, f) in &probes {
            grads.insert((n.clone(), *f), grad_of(&mut gen, n, *f));
        }
        {
            let gen_cell = std::cell::RefCell::new(&mut gen);
            let disc_cell = std::cell::RefCell::new(&mut disc);
            fd_composite_loss(
                &probes,
                &mut |n, f, s| param_access(*gen_cell.borrow_mut(), n, f, s),
                || {
                    let mut g = gen_cell.borrow_mut();
                    let mut d = disc_cell.borrow_mut();
                    let dist = g.encode(x.clone(), true);
                    let z = sample_with_eps(&dist, &eps);
                    let zs = g.map(&z, &noise, true);
                    let y = g.decode(&zs, true);
                    let d_fake = d.forward(y.clone(), true);
                    let ones = ArrayD::ones(vec![2, 1]);
                    losses::bce(&y, &t)
                        + 0.5 * losses::kld(&dist)
                        + losses::bce(&d_fake.into_dyn(), &ones)
                },
                &grads,
            );
        }

        // Discriminator objective on a fixed real/fake pair. Flat-plateau
        // inputs make whole channels change ReLU state in lockstep, which
        // no finite-difference step survives, so the probe uses maps with
        // every pixel distinct.
        let t = ArrayD::from_shape_fn([2usize, 1, 81, 81].to_vec(), |_| r.gen_range(0.05..0.95));
        let fake_input =
            ArrayD::from_shape_fn([2usize, 1, 81, 81].to_vec(), |_| r.gen_range(0.05..0.95));
        zero_grads(&mut disc);
        let d_real = disc.forward(t.clone(), true);
        let (gr, _) = losses::discriminator_grad(&d_real, &d_real);
        disc.backward(&gr);
        let d_fake = disc.forward(fake_input.clone(), true);
        let (_, gf) = losses::discriminator_grad(&d_fake, &d_fake);
        disc.backward(&gf);

        let probes = pick_params(&mut disc, 10, 79);
        let mut grads = std::collections::HashMap::new();
        for (n, f) in &probes {
            grads.insert((n.clone(), *f), grad_of(&mut disc, n, *f));
        }
        let disc_cell = std::cell::RefCell::new(&mut disc);
        fd_composite_loss(
            &probes,
            &mut |n, f, s| param_access(*disc_cell.borrow_mut(), n, f, s),
            || {
                let mut d = disc_cell.borrow_mut();
                let d_real = d.forward(t.clone(), true);
                let d_fake = d.forward(fake_input.clone(), true);
                losses::discriminator_loss(&d_real, &d_fake).total
            },
            &grads,
        );
    }

    #[test]
    fn assemble_and_freeze_partitions_parameters_and_rejects_mismatch() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(14);
        let sal = models::saliency_vae(&cfg, &mut r);
        let eeg = models::eeg_vae(&cfg, &mut r);
        let mut gen = assemble_and_freeze(eeg, sal, &cfg, &mut r).unwrap();
        let mut frozen = 0usize;
        let mut trainable = 0usize;
        let mut total = 0usize;
        gen.visit_params(&mut |p| {
            total += 1;
            if p.trainable {
                trainable += 1;
            } else {
                frozen += 1;
            }
        });
        assert_eq!(frozen + trainable, total);
        assert_eq!(trainable, 12); // two heads, seed layer, three mapper linears

        let mut narrow = cfg.clone();
        narrow.latent_dim = 8;
        let sal8 = models::saliency_vae(&narrow, &mut r);
        let eeg16 = models::eeg_vae(&cfg, &mut r);
        let err = match assemble_and_freeze(eeg16, sal8, &cfg, &mut r) {
            Ok(_) => panic!("mismatched latent widths were accepted"),
            Err(e) => e.to_string(),
        };
        assert!(err.contains("latent width mismatch"), "{err}");
    }

    #[test]
    fn one_gan_step_keeps_frozen_tensors_and_moves_unfrozen_ones() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(15);
        let sal = models::saliency_vae(&cfg, &mut r);
        let eeg = models::eeg_vae(&cfg, &mut r);
        let mut gen = assemble_and_freeze(eeg, sal, &cfg, &mut r).unwrap();
        let mut disc = models::discriminator(&cfg, &mut r);
        let before = collect_tensors(&mut gen);

        let trials = paired_trials(4, 5, 30);
        let mut cfg_t = quick_train_cfg(TrainPhase::Gan, 1, 9);
        cfg_t.batch_size = 4;
        cfg_t.val_fraction = 0.0;
        train_gan(&mut gen, &mut disc, &cfg_t, &trials).unwrap();

        // Frozen gradients are exactly zero after the step.
        gen.visit_params(&mut |p| {
            if !p.trainable {
                assert!(p.grad.iter().all(|&g| g == 0.0), "{} has gradient", p.name);
            }
        });
        // Freezing covers learnable parameters; batch-norm running
        // statistics are state and keep tracking train-mode batches.
        let after = collect_tensors(&mut gen);
        let mut trainable_names = std::collections::HashSet::new();
        let mut param_names = std::collections::HashSet::new();
        gen.visit_params(&mut |p| {
            param_names.insert(p.name.clone());
            if p.trainable {
                trainable_names.insert(p.name.clone());
            }
        });
        for (a, b) in before.iter().zip(&after) {
            if trainable_names.contains(&a.name) {
                assert_ne!(a.values, b.values, "{} did not move", a.name);
            } else if param_names.contains(&a.name) {
                assert_eq!(a.values, b.values, "{} moved while frozen", a.name);
            }
        }
    }

    #[test]
    fn zero_learning_rates_leave_both_networks_unchanged() {
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(16);
        let sal = models::saliency_vae(&cfg, &mut r);
        let eeg = models::eeg_vae(&cfg, &mut r);
        let mut gen = assemble_and_freeze(eeg, sal, &cfg, &mut r).unwrap();
        let mut disc = models::discriminator(&cfg, &mut r);
        let gen_before = collect_tensors(&mut gen);
        let disc_before = collect_tensors(&mut disc);

        let trials = paired_trials(4, 5, 31);
        let mut cfg_t = quick_train_cfg(TrainPhase::Gan, 3, 9);
        cfg_t.learning_rate = 0.0;
        cfg_t.disc_learning_rate = 0.0;
        cfg_t.val_fraction = 0.0;
        train_gan(&mut gen, &mut disc, &cfg_t, &trials).unwrap();

        let filter = |t: &NamedTensor| !t.name.contains("running_");
        let gen_after = collect_tensors(&mut gen);
        for (a, b) in gen_before.iter().zip(&gen_after) {
            if filter(a) {
                assert_eq!(a.values, b.values, "{} changed", a.name);
            }
        }
        let disc_after = collect_tensors(&mut disc);
        for (a, b) in disc_before.iter().zip(&disc_after) {
            assert_eq!(a.values, b.values, "{} changed", a.name);
        }
    }

    #[test]
    fn gan_training_is_deterministic_and_learns_the_pairing() {
        let trials = paired_trials(8, 5, 33);
        let run = || {
            let cfg = tiny_model_cfg(5);
            let mut r = crate::rng::seeded(17);
            let sal = models::saliency_vae(&cfg, &mut r);
            let eeg = models::eeg_vae(&cfg, &mut r);
            let mut gen = assemble_and_freeze(eeg, sal, &cfg, &mut r).unwrap();
            let mut disc = models::discriminator(&cfg, &mut r);
            let mut cfg_t = quick_train_cfg(TrainPhase::Gan, 12, 10);
            cfg_t.val_fraction = 0.0;
            train_gan(&mut gen, &mut disc, &cfg_t, &trials).unwrap()
        };
        let a = run();
        let b = run();
        for (ra, rb) in a.curve.iter().zip(&b.curve) {
            assert_eq!(ra.deterministic_fields(), rb.deterministic_fields());
        }
        let first = a.curve[0].loss_content;
        let last = a.curve.last().unwrap().loss_content;
        assert!(last < first, "content {first} -> {last}");
        assert!(a.curve.iter().all(|r| r.loss_disc > 0.0));
    }

    #[test]
    fn early_stop_triggers_on_a_plateau() {
        let trials = paired_trials(6, 5, 35);
        let cfg = tiny_model_cfg(5);
        let mut r = crate::rng::seeded(18);
        let sal = models::saliency_vae(&cfg, &mut r);
        let eeg = models::eeg_vae(&cfg, &mut r);
        let mut gen = assemble_and_freeze(eeg, sal, &cfg, &mut r).unwrap();
        let mut disc = models::discriminator(&cfg, &mut r);
        let mut cfg_t = quick_train_cfg(TrainPhase::Gan, 50, 11);
        // Zero learning keeps validation flat, so patience must fire.
        cfg_t.learning_rate = 0.0;
        cfg_t.disc_learning_rate = 0.0;
        cfg_t.early_stop = true;
        cfg_t.patience = 4;
        let out = train_gan(&mut gen, &mut disc, &cfg_t, &trials).unwrap();
        // Validation drifts only through running statistics here, so the
        // plateau detector must fire long before the epoch budget.
        assert!(out.stopped_early);
        assert!(out.curve.len() > cfg_t.patience);
        assert!(out.curve.len() < 30, "ran {} epochs", out.curve.len());
    }

    #[test]
    fn folds_partition_trials_by_participant() {
        let trials = paired_trials(20, 5, 36); // participants p01..p04
        assert!(participant_folds(&trials, 5).is_err());

        let mut five = trials;
        for (i, t) in five.iter_mut().enumerate() {
            t.participant_id = format!("p{:02}", i % 5 + 1);
        }
        let folds = participant_folds(&five, 5).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = std::collections::HashSet::new();
        for f in &folds {
            assert_eq!(f.participants.len(), 1);
            assert_eq!(f.test_ids.len(), 4);
            assert_eq!(f.train_ids.len(), 16);
            for id in &f.test_ids {
                assert!(seen.insert(*id), "trial {id} in two test sets");
                assert!(!f.train_ids.contains(id));
            }
        }
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn crossvalidate_aggregates_fold_means_exactly() {
        let mut trials = paired_trials(10, 5, 37);
        for (i, t) in trials.iter_mut().enumerate() {
            t.participant_id = format!("p{:02}", i % 5 + 1);
        }
        let mut exp = ExperimentConfig::default();
        exp.seed = Some(3);
        exp.model = ModelConfig {
            preset: ArchPreset::Tiny,
            latent_dim: 16,
            upsample: UpsampleMode::Nearest,
            eeg_frames: 5,
        };
        for cfg in [&mut exp.vae_saliency, &mut exp.vae_eeg, &mut exp.gan] {
            cfg.epochs = 1;
            cfg.learning_rate = 1e-3;
            cfg.disc_learning_rate = 1e-3;
            cfg.batch_size = 8;
            cfg.val_fraction = 0.0;
            cfg.early_stop = false;
        }
        let cv = crossvalidate(&trials, &exp).unwrap();
        assert_eq!(cv.folds.len(), 5);
        let mean: f64 = cv
            .folds
            .iter()
            .map(|f| f.report.auc_judd.mean)
            .sum::<f64>()
            / 5.0;
        assert!((cv.aggregate.auc_judd.mean - mean).abs() < 1e-12);
        for f in &cv.folds {
            assert_eq!(f.report.n_trials, 2);
        }
    }
}
