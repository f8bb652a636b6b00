//! The four networks of the pipeline: a saliency-map VAE, an EEG-image
//! VAE, the generator that translates EEG latent codes into saliency
//! latent codes, and the discriminator.
//!
//! Both encoders are residual conv stacks with max-pooling between
//! stacks, global average pooling, one shared linear layer and two
//! parallel linear heads for the latent mean and log-variance. The
//! decoders mirror the stacks with fixed-factor upsampling; the saliency
//! decoder grows 1x1 to 108x108 (factors 2,3,3,3,2), is center-cropped
//! to 81x81 and squashed by a sigmoid, while the EEG decoder ends in a
//! linear-output conv whose masked pixels are zeroed. The generator is
//! assembled from the two trained VAE halves with everything frozen
//! except the encoder heads, the first decoder layer and the latent
//! mapper itself.
//!
//! The `Paper` preset reproduces the published channel counts; `Tiny`
//! keeps the exact topology at a fraction of the width so the whole
//! pipeline trains in minutes on one core.

use ndarray::{concatenate, Array2, Array3, Array4, ArrayD, Axis, Ix2, s};
use rand::Rng as _;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::config::{ArchPreset, ModelConfig, UpsampleMode};
use crate::imaging::EEGImage;
use crate::nn::{
    BatchNorm2d, CenterCrop, Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2, Param, ParamVisit,
    ReLU, Reshape, ResStack, Sequential, Sigmoid, Upsample,
};
use crate::rng::Rng;

/// Latent Gaussian per batch row: mean and log-variance, [batch, dim].
#[derive(Debug, Clone)]
pub struct LatentDistribution {
    pub mean: Array2<f64>,
    pub log_variance: Array2<f64>,
}

impl LatentDistribution {
    pub fn dim(&self) -> usize {
        self.mean.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.log_variance.iter().all(|v| v.is_finite())
    }
}

/// Reparameterized draw: mean + exp(0.5 log_var) * eps, eps ~ N(0, I).
/// Returns the sample and the eps that produced it; the eps is what the
/// backward pass of the sampling step needs.
pub fn sample_latent(dist: &LatentDistribution, rng: &mut Rng) -> (Array2<f64>, Array2<f64>) {
    let eps = Array2::from_shape_fn(dist.mean.dim(), |_| rng.sample(StandardNormal));
    (sample_with_eps(dist, &eps), eps)
}

pub fn sample_with_eps(dist: &LatentDistribution, eps: &Array2<f64>) -> Array2<f64> {
    &dist.mean + &(eps * &dist.log_variance.mapv(|v| (0.5 * v).exp()))
}

/// Gradient of the sampling step: d sample/d mean = I and
/// d sample/d log_var = 0.5 * eps * exp(0.5 log_var), elementwise.
pub fn sample_backward(
    dist: &LatentDistribution,
    eps: &Array2<f64>,
    dz: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let dlogvar = dz * &(eps * &dist.log_variance.mapv(|v| 0.5 * (0.5 * v).exp()));
    (dz.clone(), dlogvar)
}

/// Standard-normal noise batch for the latent mapper.
pub fn draw_noise(n: usize, dim: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| rng.sample(StandardNormal))
}

/// Channel tables for one preset. Stacks list the output channels of
/// each conv; decoder groups pair an upsampling factor with a conv
/// group, the last group being a plain chain with a bare final conv.
struct Plan {
    sal_enc: Vec<Vec<usize>>,
    eeg_enc: Vec<Vec<usize>>,
    fc_width: usize,
    dec_seed: usize,
    sal_dec: Vec<(usize, Vec<usize>)>,
    eeg_dec: Vec<(usize, Vec<usize>)>,
    disc: Vec<Vec<usize>>,
    disc_fc: usize,
}

fn plan(cfg: &ModelConfig) -> Plan {
    let v = |xs: &[usize]| xs.to_vec();
    match cfg.preset {
        ArchPreset::Paper => Plan {
            sal_enc: vec![v(&[64, 64, 64]), v(&[128, 128, 128]), v(&[256, 256, 256]), v(&[512, 512, 512])],
            eeg_enc: vec![v(&[256, 256, 256, 256]), v(&[512, 512, 512]), v(&[512, 512])],
            fc_width: 256,
            dec_seed: 512,
            sal_dec: vec![
                (2, v(&[512, 512, 512])),
                (3, v(&[256, 256, 256])),
                (3, v(&[128, 128, 128])),
                (3, v(&[64, 64, 64])),
                (2, v(&[4, 4, 1])),
            ],
            eeg_dec: vec![
                (8, v(&[512, 512])),
                (2, v(&[512, 512, 256])),
                (2, vec![256, 256, 256, cfg.eeg_frames]),
            ],
            disc: vec![v(&[3, 32, 32, 32]), v(&[64, 64, 64]), v(&[128, 128, 128]), v(&[256, 256, 256])],
            disc_fc: 64,
        },
        ArchPreset::Tiny => Plan {
            sal_enc: vec![v(&[4, 4, 4]), v(&[8, 8, 8]), v(&[16, 16, 16]), v(&[32, 32, 32])],
            eeg_enc: vec![v(&[8, 8, 8, 8]), v(&[16, 16, 16]), v(&[16, 16])],
            fc_width: 16,
            dec_seed: 32,
            sal_dec: vec![
                (2, v(&[32, 32, 32])),
                (3, v(&[16, 16, 16])),
                (3, v(&[8, 8, 8])),
                (3, v(&[4, 4, 4])),
                (2, v(&[2, 2, 1])),
            ],
            eeg_dec: vec![
                (8, v(&[16, 16])),
                (2, v(&[16, 16, 8])),
                (2, vec![8, 8, 8, cfg.eeg_frames]),
            ],
            disc: vec![v(&[2, 4, 4, 4]), v(&[8, 8, 8]), v(&[16, 16, 16]), v(&[32, 32, 32])],
            disc_fc: 16,
        },
    }
}

/// Residual stacks with pooling between them, then global average
/// pooling and the shared pre-head linear layer.
fn encoder_trunk(
    prefix: &str,
    cin: usize,
    stacks: &[Vec<usize>],
    fc_width: usize,
    rng: &mut Rng,
) -> Sequential {
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    let mut prev = cin;
    for (i, stack) in stacks.iter().enumerate() {
        layers.push(Box::new(ResStack::new(
            &format!("{prefix}.stack{i}"),
            prev,
            stack,
            rng,
        )));
        prev = *stack.last().unwrap();
        if i + 1 < stacks.len() {
            layers.push(Box::new(MaxPool2::new()));
        }
    }
    layers.push(Box::new(GlobalAvgPool::new()));
    layers.push(Box::new(Linear::new(
        &format!("{prefix}.fc"),
        prev,
        fc_width,
        rng,
    )));
    Sequential::new(layers)
}

/// Conv chain for the final decoder group: conv + batch-norm + ReLU
/// units with a bare final conv producing the output logits.
fn output_chain(prefix: &str, cin: usize, channels: &[usize], rng: &mut Rng) -> Vec<Box<dyn Layer>> {
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    let mut prev = cin;
    for (j, &cout) in channels.iter().enumerate() {
        layers.push(Box::new(Conv2d::new(
            &format!("{prefix}.conv{j}"),
            prev,
            cout,
            3,
            1,
            rng,
        )));
        if j + 1 < channels.len() {
            layers.push(Box::new(BatchNorm2d::new(&format!("{prefix}.bn{j}"), cout, rng)));
            layers.push(Box::new(ReLU::new()));
        }
        prev = cout;
    }
    layers
}

/// Seed linear + unflatten, then upsample/conv groups. Interior groups
/// are residual stacks, the last is an output chain with a bare conv.
fn decoder_net(
    prefix: &str,
    latent_dim: usize,
    seed: usize,
    groups: &[(usize, Vec<usize>)],
    mode: UpsampleMode,
    rng: &mut Rng,
) -> Sequential {
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    layers.push(Box::new(Linear::new(
        &format!("{prefix}.seed"),
        latent_dim,
        seed,
        rng,
    )));
    layers.push(Box::new(Reshape::new(&[seed, 1, 1])));
    let mut prev = seed;
    for (i, (factor, channels)) in groups.iter().enumerate() {
        layers.push(Box::new(Upsample::new(*factor, mode)));
        if i + 1 < groups.len() {
            layers.push(Box::new(ResStack::new(
                &format!("{prefix}.stack{i}"),
                prev,
                channels,
                rng,
            )));
        } else {
            layers.extend(output_chain(&format!("{prefix}.out"), prev, channels, rng));
        }
        prev = *channels.last().unwrap();
    }
    Sequential::new(layers)
}

/// Encoder trunk plus the two parallel latent heads.
pub struct VaeEncoder {
    pub trunk: Sequential,
    pub head_mean: Linear,
    pub head_logvar: Linear,
}

impl VaeEncoder {
    fn new(
        prefix: &str,
        cin: usize,
        stacks: &[Vec<usize>],
        fc_width: usize,
        latent_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        VaeEncoder {
            trunk: encoder_trunk(prefix, cin, stacks, fc_width, rng),
            head_mean: Linear::new(&format!("{prefix}.mean"), fc_width, latent_dim, rng),
            head_logvar: Linear::new(&format!("{prefix}.logvar"), fc_width, latent_dim, rng),
        }
    }

    pub fn forward(&mut self, x: ArrayD<f64>, train: bool) -> LatentDistribution {
        let h = self.trunk.forward(x, train);
        let mean = self
            .head_mean
            .forward(h.clone(), train)
            .into_dimensionality::<Ix2>()
            .unwrap();
        let log_variance = self
            .head_logvar
            .forward(h, train)
            .into_dimensionality::<Ix2>()
            .unwrap();
        LatentDistribution {
            mean,
            log_variance,
        }
    }

    /// Backward from gradients on the two heads down to the input.
    pub fn backward(&mut self, dmean: &Array2<f64>, dlogvar: &Array2<f64>) -> ArrayD<f64> {
        let gm = self.head_mean.backward(dmean.clone().into_dyn());
        let gl = self.head_logvar.backward(dlogvar.clone().into_dyn());
        self.trunk.backward(gm + gl)
    }
}

impl ParamVisit for VaeEncoder {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.trunk.visit_params(f);
        self.head_mean.visit_params(f);
        self.head_logvar.visit_params(f);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.trunk.visit_state(f);
    }
}

/// One VAE: encoder with latent heads plus a decoder. The EEG variant
/// carries the zero mask of its rasterization grid and multiplies it
/// into every decoded image, so pixels outside the electrode hull stay
/// exactly zero.
pub struct Vae {
    pub encoder: VaeEncoder,
    pub decoder: Sequential,
    zero_mask: Option<Array2<f64>>,
    tag: &'static str,
}

pub fn saliency_vae(cfg: &ModelConfig, rng: &mut Rng) -> Vae {
    let p = plan(cfg);
    let mut decoder = decoder_net("sal_dec", cfg.latent_dim, p.dec_seed, &p.sal_dec, cfg.upsample, rng);
    decoder.layers.push(Box::new(CenterCrop::new(81, 81)));
    decoder.layers.push(Box::new(Sigmoid::new()));
    Vae {
        encoder: VaeEncoder::new("sal_enc", 1, &p.sal_enc, p.fc_width, cfg.latent_dim, rng),
        decoder,
        zero_mask: None,
        tag: "saliency_vae",
    }
}

pub fn eeg_vae(cfg: &ModelConfig, rng: &mut Rng) -> Vae {
    let p = plan(cfg);
    Vae {
        encoder: VaeEncoder::new("eeg_enc", cfg.eeg_frames, &p.eeg_enc, p.fc_width, cfg.latent_dim, rng),
        decoder: decoder_net("eeg_dec", cfg.latent_dim, p.dec_seed, &p.eeg_dec, cfg.upsample, rng),
        zero_mask: None,
        tag: "eeg_vae",
    }
}

impl Vae {
    pub fn encode(&mut self, x: ArrayD<f64>, train: bool) -> LatentDistribution {
        self.encoder.forward(x, train)
    }

    pub fn decode(&mut self, z: &Array2<f64>, train: bool) -> ArrayD<f64> {
        let mut y = self.decoder.forward(z.clone().into_dyn(), train);
        if let Some(mask) = &self.zero_mask {
            let (h, w) = mask.dim();
            let mut y4 = y.view_mut().into_dimensionality::<ndarray::Ix4>().unwrap();
            for mut img in y4.axis_iter_mut(Axis(0)) {
                for mut ch in img.axis_iter_mut(Axis(0)) {
                    for i in 0..h {
                        for j in 0..w {
                            ch[[i, j]] *= mask[[i, j]];
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward_decode(&mut self, mut grad: ArrayD<f64>) -> Array2<f64> {
        if let Some(mask) = &self.zero_mask {
            let (h, w) = mask.dim();
            let mut g4 = grad.view_mut().into_dimensionality::<ndarray::Ix4>().unwrap();
            for mut img in g4.axis_iter_mut(Axis(0)) {
                for mut ch in img.axis_iter_mut(Axis(0)) {
                    for i in 0..h {
                        for j in 0..w {
                            ch[[i, j]] *= mask[[i, j]];
                        }
                    }
                }
            }
        }
        self.decoder
            .backward(grad)
            .into_dimensionality::<Ix2>()
            .unwrap()
    }

    pub fn backward_encode(&mut self, dmean: &Array2<f64>, dlogvar: &Array2<f64>) -> ArrayD<f64> {
        self.encoder.backward(dmean, dlogvar)
    }

    /// Full reconstruction pass: encode, sample, decode.
    pub fn reconstruct(
        &mut self,
        x: ArrayD<f64>,
        rng: &mut Rng,
        train: bool,
    ) -> (ArrayD<f64>, LatentDistribution, Array2<f64>) {
        let dist = self.encode(x, train);
        let (z, eps) = sample_latent(&dist, rng);
        let y = self.decode(&z, train);
        (y, dist, eps)
    }

    pub fn set_zero_mask(&mut self, mask: &Array2<bool>) {
        self.zero_mask = Some(mask.mapv(|b| if b { 0.0 } else { 1.0 }));
    }

    pub fn fingerprint(&mut self) -> String {
        let tag = self.tag;
        architecture_fingerprint(tag, self)
    }
}

impl ParamVisit for Vae {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.encoder.visit_params(f);
        self.decoder.visit_params(f);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.encoder.visit_state(f);
        self.decoder.visit_state(f);
    }
}

/// Latent translator: linear on the EEG code, concatenation with fresh
/// noise, then two linear layers back to the latent width (matching the
/// published fully-connected block, which lists no activations).
pub struct LatentMapper {
    l1: Linear,
    l2: Linear,
    l3: Linear,
    dim: usize,
}

impl LatentMapper {
    pub fn new(prefix: &str, dim: usize, rng: &mut Rng) -> Self {
        LatentMapper {
            l1: Linear::new(&format!("{prefix}.l1"), dim, dim, rng),
            l2: Linear::new(&format!("{prefix}.l2"), 2 * dim, 4 * dim, rng),
            l3: Linear::new(&format!("{prefix}.l3"), 4 * dim, dim, rng),
            dim,
        }
    }

    pub fn forward(&mut self, z: &Array2<f64>, noise: &Array2<f64>, train: bool) -> Array2<f64> {
        let h1 = self
            .l1
            .forward(z.clone().into_dyn(), train)
            .into_dimensionality::<Ix2>()
            .unwrap();
        let cat = concatenate(Axis(1), &[h1.view(), noise.view()]).unwrap();
        let h2 = self.l2.forward(cat.into_dyn(), train);
        self.l3
            .forward(h2, train)
            .into_dimensionality::<Ix2>()
            .unwrap()
    }

    /// Returns the gradient on the EEG code; the noise is an input, not
    /// a parameter, so its gradient is dropped.
    pub fn backward(&mut self, dout: &Array2<f64>) -> Array2<f64> {
        let dh2 = self.l3.backward(dout.clone().into_dyn());
        let dcat = self.l2.backward(dh2).into_dimensionality::<Ix2>().unwrap();
        let dh1 = dcat.slice(s![.., 0..self.dim]).to_owned();
        self.l1
            .backward(dh1.into_dyn())
            .into_dimensionality::<Ix2>()
            .unwrap()
    }
}

impl ParamVisit for LatentMapper {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.l1.visit_params(f);
        self.l2.visit_params(f);
        self.l3.visit_params(f);
    }
}

/// EEG-to-saliency generator assembled from the trained VAE halves.
/// Every transplanted tensor is frozen except the encoder's latent
/// heads and the decoder's seed linear; the mapper is fresh and fully
/// trainable.
pub struct Generator {
    pub encoder: VaeEncoder,
    pub mapper: LatentMapper,
    pub decoder: Sequential,
    pub latent_dim: usize,
}

fn unfrozen_in_generator(name: &str) -> bool {
    name.starts_with("eeg_enc.mean")
        || name.starts_with("eeg_enc.logvar")
        || name.starts_with("sal_dec.seed")
        || name.starts_with("mapper.")
}

impl Generator {
    pub fn assemble(eeg: Vae, saliency: Vae, cfg: &ModelConfig, rng: &mut Rng) -> Generator {
        let mut g = Generator {
            encoder: eeg.encoder,
            mapper: LatentMapper::new("mapper", cfg.latent_dim, rng),
            decoder: saliency.decoder,
            latent_dim: cfg.latent_dim,
        };
        g.visit_params(&mut |p| p.trainable = unfrozen_in_generator(&p.name));
        g
    }

    pub fn frozen_parameter_names(&mut self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |p| {
            if !p.trainable {
                names.push(p.name.clone());
            }
        });
        names
    }

    pub fn encode(&mut self, x: ArrayD<f64>, train: bool) -> LatentDistribution {
        self.encoder.forward(x, train)
    }

    pub fn map(&mut self, z: &Array2<f64>, noise: &Array2<f64>, train: bool) -> Array2<f64> {
        self.mapper.forward(z, noise, train)
    }

    pub fn decode(&mut self, z_sal: &Array2<f64>, train: bool) -> ArrayD<f64> {
        self.decoder.forward(z_sal.clone().into_dyn(), train)
    }

    pub fn backward_decode(&mut self, grad: ArrayD<f64>) -> Array2<f64> {
        self.decoder
            .backward(grad)
            .into_dimensionality::<Ix2>()
            .unwrap()
    }

    pub fn backward_map(&mut self, dout: &Array2<f64>) -> Array2<f64> {
        self.mapper.backward(dout)
    }

    pub fn backward_encode(&mut self, dmean: &Array2<f64>, dlogvar: &Array2<f64>) -> ArrayD<f64> {
        self.encoder.backward(dmean, dlogvar)
    }

    /// Inference: one EEG-image to one 81x81 saliency prediction. The
    /// sampling eps and the mapper noise both come from `rng`, so one
    /// seed fixes the output.
    pub fn generate(&mut self, img: &EEGImage, rng: &mut Rng) -> Array2<f64> {
        let (c, h, w) = img.frames.dim();
        let mut x = Array4::zeros((1, c, h, w));
        x.index_axis_mut(Axis(0), 0).assign(&img.frames);
        let dist = self.encode(x.into_dyn(), false);
        let (z, _eps) = sample_latent(&dist, rng);
        let noise = draw_noise(1, self.latent_dim, rng);
        let zs = self.map(&z, &noise, false);
        let y = self.decode(&zs, false);
        y.index_axis(Axis(0), 0)
            .index_axis(Axis(0), 0)
            .to_owned()
            .into_dimensionality::<Ix2>()
            .unwrap()
    }

    pub fn fingerprint(&mut self) -> String {
        architecture_fingerprint("generator", self)
    }
}

impl ParamVisit for Generator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.encoder.visit_params(f);
        self.mapper.visit_params(f);
        self.decoder.visit_params(f);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.encoder.visit_state(f);
        self.decoder.visit_state(f);
    }
}

/// Convolutional real/fake classifier on 81x81 maps: plain conv + ReLU
/// groups with pooling, global average pooling and two linear layers
/// into a sigmoid probability.
pub struct Discriminator {
    net: Sequential,
}

pub fn discriminator(cfg: &ModelConfig, rng: &mut Rng) -> Discriminator {
    let p = plan(cfg);
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    let mut prev = 1;
    for (i, group) in p.disc.iter().enumerate() {
        for (j, &cout) in group.iter().enumerate() {
            layers.push(Box::new(Conv2d::new(
                &format!("disc.stack{i}.conv{j}"),
                prev,
                cout,
                3,
                1,
                rng,
            )));
            layers.push(Box::new(ReLU::new()));
            prev = cout;
        }
        if i + 1 < p.disc.len() {
            layers.push(Box::new(MaxPool2::new()));
        }
    }
    layers.push(Box::new(GlobalAvgPool::new()));
    layers.push(Box::new(Linear::new("disc.fc1", prev, p.disc_fc, rng)));
    layers.push(Box::new(Linear::new("disc.fc2", p.disc_fc, 1, rng)));
    layers.push(Box::new(Sigmoid::new()));
    Discriminator {
        net: Sequential::new(layers),
    }
}

impl Discriminator {
    /// Maps [n, 1, 81, 81] to per-sample probabilities [n, 1].
    pub fn forward(&mut self, maps: ArrayD<f64>, train: bool) -> Array2<f64> {
        self.net
            .forward(maps, train)
            .into_dimensionality::<Ix2>()
            .unwrap()
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> ArrayD<f64> {
        self.net.backward(grad.clone().into_dyn())
    }

    pub fn fingerprint(&mut self) -> String {
        architecture_fingerprint("discriminator", self)
    }
}

impl ParamVisit for Discriminator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.net.visit_params(f);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.net.visit_state(f);
    }
}

/// Digest of the parameter and state layout (names and shapes, not
/// values). Checkpoints store it and refuse to load into a model whose
/// fingerprint differs.
pub fn architecture_fingerprint<M: ParamVisit + ?Sized>(tag: &str, model: &mut M) -> String {
    let mut desc = tag.to_string();
    model.visit_params(&mut |p| {
        desc.push_str(&format!("|{} {:?}", p.name, p.value.shape()));
    });
    model.visit_state(&mut |name, t| {
        desc.push_str(&format!("|{} {:?}", name, t.shape()));
    });
    let mut hasher = Sha256::new();
    hasher.update(desc.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Stacks per-trial EEG frames into a batch tensor [n, frames, h, w].
pub fn batch_images(imgs: &[&Array3<f64>]) -> Array4<f64> {
    let (c, h, w) = imgs[0].dim();
    let mut out = Array4::zeros((imgs.len(), c, h, w));
    for (i, img) in imgs.iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(img);
    }
    out
}

/// Stacks 81x81 maps into a single-channel batch tensor [n, 1, 81, 81].
pub fn batch_maps(maps: &[&Array2<f64>]) -> Array4<f64> {
    let (h, w) = maps[0].dim();
    let mut out = Array4::zeros((maps.len(), 1, h, w));
    for (i, m) in maps.iter().enumerate() {
        out.slice_mut(s![i, 0, .., ..]).assign(m);
    }
    out
}
