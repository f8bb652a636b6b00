//! Minimal f64 layer library with explicit forward and backward passes.
//!
//! Image tensors are channels-first [batch, channels, height, width],
//! vectors are [batch, features]. Each layer caches what its backward
//! pass needs during forward, accumulates parameter gradients on
//! backward, and exposes parameters through a visitor in a fixed order,
//! which keeps optimizer state, freezing and checkpoints deterministic.
//! Setting a parameter non-trainable skips its gradient accumulation
//! entirely (the gradient stays exactly zero) while the input gradient
//! still flows through the layer.

use crate::config::UpsampleMode;
use crate::rng::Rng;
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayD, ArrayView3, Axis, Ix2, Ix4};
use rand::Rng as _;

/// A named tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: &str, value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            name: name.to_string(),
            value,
            grad,
            trainable: true,
        }
    }
}

/// Kaiming-uniform initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
/// The sqrt(2) rectifier gain keeps activation magnitudes roughly flat
/// through deep ReLU stacks; smaller scales decay geometrically with
/// depth and leave the discriminator emitting numerical dust.
/// Entries are drawn in row-major order, so one seed gives one tensor.
fn init_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> ArrayD<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    ArrayD::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
}

/// Parameter traversal for layers and for composite models that are not
/// themselves layers. Optimizers, freezing and checkpoints talk to this
/// trait only. `visit_state` exposes non-parameter tensors that still
/// belong in a checkpoint (batch-norm running statistics).
pub trait ParamVisit {
    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
    fn visit_state(&mut self, _f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {}
}

pub trait Layer: ParamVisit {
    fn forward(&mut self, x: ArrayD<f64>, train: bool) -> ArrayD<f64>;
    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64>;
}

pub fn zero_grads<M: ParamVisit + ?Sized>(model: &mut M) {
    model.visit_params(&mut |p| p.grad.fill(0.0));
}

pub fn param_count<M: ParamVisit + ?Sized>(model: &mut M) -> usize {
    let mut n = 0;
    model.visit_params(&mut |p| n += p.value.len());
    n
}

/// 2-D convolution with square kernel, unit stride and symmetric zero
/// padding. Kernel 3 with padding 1 and kernel 1 with padding 0 both
/// preserve the spatial size.
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    k: usize,
    pad: usize,
    cached_x: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, pad: usize, rng: &mut Rng) -> Self {
        let w = Param::new(
            &format!("{name}.weight"),
            init_uniform(&[cout, cin, k, k], cin * k * k, rng),
        );
        let b = Param::new(&format!("{name}.bias"), ArrayD::zeros(vec![cout]));
        Conv2d {
            w,
            b,
            k,
            pad,
            cached_x: None,
        }
    }
}

fn im2col(x: ArrayView3<f64>, k: usize, pad: usize) -> Array2<f64> {
    let (cin, h, w) = x.dim();
    let oh = h + 2 * pad - k + 1;
    let ow = w + 2 * pad - k + 1;
    let mut col = Array2::zeros((cin * k * k, oh * ow));
    for c in 0..cin {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                for oy in 0..oh {
                    let iy = oy + ki;
                    if iy < pad || iy >= h + pad {
                        continue;
                    }
                    let iy = iy - pad;
                    for ox in 0..ow {
                        let ix = ox + kj;
                        if ix < pad || ix >= w + pad {
                            continue;
                        }
                        col[[row, oy * ow + ox]] = x[[c, iy, ix - pad]];
                    }
                }
            }
        }
    }
    col
}

fn col2im(dcol: &Array2<f64>, cin: usize, h: usize, w: usize, k: usize, pad: usize) -> Array3<f64> {
    let oh = h + 2 * pad - k + 1;
    let ow = w + 2 * pad - k + 1;
    let mut dx = Array3::zeros((cin, h, w));
    for c in 0..cin {
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                for oy in 0..oh {
                    let iy = oy + ki;
                    if iy < pad || iy >= h + pad {
                        continue;
                    }
                    let iy = iy - pad;
                    for ox in 0..ow {
                        let ix = ox + kj;
                        if ix < pad || ix >= w + pad {
                            continue;
                        }
                        dx[[c, iy, ix - pad]] += dcol[[row, oy * ow + ox]];
                    }
                }
            }
        }
    }
    dx
}

impl Layer for Conv2d {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        let x4 = x.into_dimensionality::<Ix4>().expect("conv expects NCHW");
        let (n, cin, h, w) = x4.dim();
        let cout = self.w.value.shape()[0];
        let oh = h + 2 * self.pad - self.k + 1;
        let ow = w + 2 * self.pad - self.k + 1;
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((cout, cin * self.k * self.k))
            .unwrap();
        let bias = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let mut out = Array4::zeros((n, cout, oh, ow));
        for i in 0..n {
            let col = im2col(x4.index_axis(Axis(0), i), self.k, self.pad);
            let mut y2 = w2.dot(&col);
            y2 += &bias.view().insert_axis(Axis(1));
            out.index_axis_mut(Axis(0), i)
                .assign(&y2.into_shape_with_order((cout, oh, ow)).unwrap());
        }
        self.cached_x = Some(x4);
        out.into_dyn()
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g4 = grad.into_dimensionality::<Ix4>().unwrap();
        let x4 = self.cached_x.as_ref().expect("backward before forward");
        let (n, cin, h, w) = x4.dim();
        let (_, cout, oh, ow) = g4.dim();
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((cout, cin * self.k * self.k))
            .unwrap()
            .to_owned();
        let mut dx = Array4::zeros((n, cin, h, w));
        for i in 0..n {
            let g2 = g4
                .index_axis(Axis(0), i)
                .into_shape_with_order((cout, oh * ow))
                .unwrap()
                .to_owned();
            let col = im2col(x4.index_axis(Axis(0), i), self.k, self.pad);
            if self.w.trainable {
                let dw2 = g2.dot(&col.t());
                let mut dwv = self
                    .w
                    .grad
                    .view_mut()
                    .into_shape_with_order((cout, cin * self.k * self.k))
                    .unwrap();
                dwv += &dw2;
                let mut dbv = self.b.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
                dbv += &g2.sum_axis(Axis(1));
            }
            let dcol = w2.t().dot(&g2);
            dx.index_axis_mut(Axis(0), i)
                .assign(&col2im(&dcol, cin, h, w, self.k, self.pad));
        }
        dx.into_dyn()
    }
}

impl ParamVisit for Conv2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Batch normalization over the channel axis. Training mode normalizes
/// with batch statistics and updates the running estimates with momentum
/// 0.1 (unbiased variance, matching common framework behavior);
/// evaluation mode normalizes with the running estimates.
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    name: String,
    running_mean: ArrayD<f64>,
    running_var: ArrayD<f64>,
    momentum: f64,
    eps: f64,
    cached: Option<BnCache>,
}

struct BnCache {
    xhat: Array4<f64>,
    inv_std: Array1<f64>,
    train: bool,
}

impl BatchNorm2d {
    pub fn new(name: &str, c: usize, rng: &mut Rng) -> Self {
        let _ = rng;
        BatchNorm2d {
            gamma: Param::new(&format!("{name}.gamma"), ArrayD::ones(vec![c])),
            beta: Param::new(&format!("{name}.beta"), ArrayD::zeros(vec![c])),
            name: name.to_string(),
            running_mean: ArrayD::zeros(vec![c]),
            running_var: ArrayD::ones(vec![c]),
            momentum: 0.1,
            eps: 1e-5,
            cached: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: ArrayD<f64>, train: bool) -> ArrayD<f64> {
        let x4 = x.into_dimensionality::<Ix4>().expect("batchnorm expects NCHW");
        let (n, c, h, w) = x4.dim();
        let m = (n * h * w) as f64;
        let mut out = Array4::zeros((n, c, h, w));
        let mut xhat = Array4::zeros((n, c, h, w));
        let mut inv_std = Array1::zeros(c);
        for ci in 0..c {
            let ch = x4.slice(s![.., ci, .., ..]);
            let (mean, var) = if train {
                let mean = ch.sum() / m;
                let var = ch.mapv(|v| (v - mean) * (v - mean)).sum() / m;
                let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
                self.running_mean[ci] =
                    (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
                self.running_var[ci] =
                    (1.0 - self.momentum) * self.running_var[ci] + self.momentum * unbiased;
                (mean, var)
            } else {
                (self.running_mean[ci], self.running_var[ci])
            };
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = is;
            let g = self.gamma.value[ci];
            let b = self.beta.value[ci];
            let xh = ch.mapv(|v| (v - mean) * is);
            out.slice_mut(s![.., ci, .., ..]).assign(&xh.mapv(|v| g * v + b));
            xhat.slice_mut(s![.., ci, .., ..]).assign(&xh);
        }
        self.cached = Some(BnCache {
            xhat,
            inv_std,
            train,
        });
        out.into_dyn()
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g4 = grad.into_dimensionality::<Ix4>().unwrap();
        let cache = self.cached.as_ref().expect("backward before forward");
        let (n, c, h, w) = g4.dim();
        let m = (n * h * w) as f64;
        let mut dx = Array4::zeros((n, c, h, w));
        for ci in 0..c {
            let dy = g4.slice(s![.., ci, .., ..]);
            let xh = cache.xhat.slice(s![.., ci, .., ..]);
            let dgamma: f64 = (&dy * &xh).sum();
            let dbeta: f64 = dy.sum();
            if self.gamma.trainable {
                self.gamma.grad[ci] += dgamma;
                self.beta.grad[ci] += dbeta;
            }
            let gis = self.gamma.value[ci] * cache.inv_std[ci];
            if cache.train {
                // d xhat = dy * gamma; batch statistics depend on x.
                let dxc = dy.mapv(|v| v * m) - dbeta - &xh.mapv(|v| v * dgamma);
                dx.slice_mut(s![.., ci, .., ..]).assign(&dxc.mapv(|v| v * gis / m));
            } else {
                dx.slice_mut(s![.., ci, .., ..]).assign(&dy.mapv(|v| v * gis));
            }
        }
        dx.into_dyn()
    }
}

impl ParamVisit for BatchNorm2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        let name = self.name.clone();
        f(&format!("{name}.running_mean"), &mut self.running_mean);
        f(&format!("{name}.running_var"), &mut self.running_var);
    }
}

pub struct ReLU {
    mask: Option<ArrayD<f64>>,
}

impl ReLU {
    pub fn new() -> Self {
        ReLU { mask: None }
    }
}

impl Default for ReLU {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVisit for ReLU {}

impl Layer for ReLU {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let out = &x * &mask;
        self.mask = Some(mask);
        out
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        &grad * self.mask.as_ref().expect("backward before forward")
    }
}

pub struct Sigmoid {
    out: Option<ArrayD<f64>>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Sigmoid { out: None }
    }
}

impl Default for Sigmoid {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVisit for Sigmoid {}

impl Layer for Sigmoid {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        // Logits are clamped to +-36 before the transfer: identical below
        // saturation, and the output stays strictly inside (0, 1) in f64
        // instead of rounding to exactly 1.
        let out = x.mapv(|v| 1.0 / (1.0 + (-v.clamp(-36.0, 36.0)).exp()));
        self.out = Some(out.clone());
        out
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let y = self.out.as_ref().expect("backward before forward");
        &grad * &y.mapv(|v| v * (1.0 - v))
    }
}

/// 2x2 max pooling with stride 2; a trailing odd row or column is
/// dropped (floor semantics), so 81 pools to 40.
pub struct MaxPool2 {
    argmax: Option<Array4<u8>>,
    in_hw: (usize, usize),
}

impl MaxPool2 {
    pub fn new() -> Self {
        MaxPool2 {
            argmax: None,
            in_hw: (0, 0),
        }
    }
}

impl Default for MaxPool2 {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVisit for MaxPool2 {}

impl Layer for MaxPool2 {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        let x4 = x.into_dimensionality::<Ix4>().expect("pool expects NCHW");
        let (n, c, h, w) = x4.dim();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Array4::zeros((n, c, oh, ow));
        let mut argmax = Array4::zeros((n, c, oh, ow));
        for i in 0..n {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut which = 0u8;
                        for dy in 0..2 {
                            for dxo in 0..2 {
                                let v = x4[[i, ci, oy * 2 + dy, ox * 2 + dxo]];
                                if v > best {
                                    best = v;
                                    which = (dy * 2 + dxo) as u8;
                                }
                            }
                        }
                        out[[i, ci, oy, ox]] = best;
                        argmax[[i, ci, oy, ox]] = which;
                    }
                }
            }
        }
        self.argmax = Some(argmax);
        self.in_hw = (h, w);
        out.into_dyn()
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g4 = grad.into_dimensionality::<Ix4>().unwrap();
        let argmax = self.argmax.as_ref().expect("backward before forward");
        let (n, c, oh, ow) = g4.dim();
        let (h, w) = self.in_hw;
        let mut dx = Array4::zeros((n, c, h, w));
        for i in 0..n {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let which = argmax[[i, ci, oy, ox]] as usize;
                        let (dy, dxo) = (which / 2, which % 2);
                        dx[[i, ci, oy * 2 + dy, ox * 2 + dxo]] += g4[[i, ci, oy, ox]];
                    }
                }
            }
        }
        dx.into_dyn()
    }
}

/// Integer-factor spatial upsampling, nearest or bilinear. Bilinear uses
/// half-pixel-center source mapping, so constants are preserved exactly
/// in both modes.
pub struct Upsample {
    factor: usize,
    mode: UpsampleMode,
    in_hw: (usize, usize),
}

impl Upsample {
    pub fn new(factor: usize, mode: UpsampleMode) -> Self {
        Upsample {
            factor,
            mode,
            in_hw: (0, 0),
        }
    }
}

/// Source index pair and blend weight for one output position along one
/// axis: out = (1 - t) * src[i0] + t * src[i1].
fn lin_taps(n_out: usize, n_in: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let pos = ((i as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

impl ParamVisit for Upsample {}

impl Layer for Upsample {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        let x4 = x.into_dimensionality::<Ix4>().expect("upsample expects NCHW");
        let (n, c, h, w) = x4.dim();
        let (oh, ow) = (h * self.factor, w * self.factor);
        self.in_hw = (h, w);
        let mut out = Array4::zeros((n, c, oh, ow));
        match self.mode {
            UpsampleMode::Nearest => {
                for i in 0..n {
                    for ci in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                out[[i, ci, oy, ox]] =
                                    x4[[i, ci, oy / self.factor, ox / self.factor]];
                            }
                        }
                    }
                }
            }
            UpsampleMode::Bilinear => {
                let th = lin_taps(oh, h, self.factor);
                let tw = lin_taps(ow, w, self.factor);
                for i in 0..n {
                    for ci in 0..c {
                        for (oy, &(y0, y1, ty)) in th.iter().enumerate() {
                            for (ox, &(x0, x1, tx)) in tw.iter().enumerate() {
                                let a = x4[[i, ci, y0, x0]] * (1.0 - tx) + x4[[i, ci, y0, x1]] * tx;
                                let b = x4[[i, ci, y1, x0]] * (1.0 - tx) + x4[[i, ci, y1, x1]] * tx;
                                out[[i, ci, oy, ox]] = a * (1.0 - ty) + b * ty;
                            }
                        }
                    }
                }
            }
        }
        out.into_dyn()
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g4 = grad.into_dimensionality::<Ix4>().unwrap();
        let (n, c, oh, ow) = g4.dim();
        let (h, w) = self.in_hw;
        let mut dx = Array4::zeros((n, c, h, w));
        match self.mode {
            UpsampleMode::Nearest => {
                for i in 0..n {
                    for ci in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                dx[[i, ci, oy / self.factor, ox / self.factor]] +=
                                    g4[[i, ci, oy, ox]];
                            }
                        }
                    }
                }
            }
            UpsampleMode::Bilinear => {
                let th = lin_taps(oh, h, self.factor);
                let tw = lin_taps(ow, w, self.factor);
                for i in 0..n {
                    for ci in 0..c {
                        for (oy, &(y0, y1, ty)) in th.iter().enumerate() {
                            for (ox, &(x0, x1, tx)) in tw.iter().enumerate() {
                                let g = g4[[i, ci, oy, ox]];
                                dx[[i, ci, y0, x0]] += g * (1.0 - ty) * (1.0 - tx);
                                dx[[i, ci, y0, x1]] += g * (1.0 - ty) * tx;
                                dx[[i, ci, y1, x0]] += g * ty * (1.0 - tx);
                                dx[[i, ci, y1, x1]] += g * ty * tx;
                            }
                        }
                    }
                }
            }
        }
        dx.into_dyn()
    }
}

pub struct Linear {
    pub w: Param,
    pub b: Param,
    cached_x: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Linear {
            w: Param::new(
                &format!("{name}.weight"),
                init_uniform(&[fan_out, fan_in], fan_in, rng),
            ),
            b: Param::new(&format!("{name}.bias"), ArrayD::zeros(vec![fan_out])),
            cached_x: None,
        }
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        let x2 = x.into_dimensionality::<Ix2>().expect("linear expects NF");
        let w2 = self.w.value.view().into_dimensionality::<Ix2>().unwrap();
        let b1 = self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let out = x2.dot(&w2.t()) + &b1;
        self.cached_x = Some(x2);
        out.into_dyn()
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g2 = grad.into_dimensionality::<Ix2>().unwrap();
        let x2 = self.cached_x.as_ref().expect("backward before forward");
        if self.w.trainable {
            let dw = g2.t().dot(x2);
            let mut dwv = self.w.grad.view_mut().into_dimensionality::<Ix2>().unwrap();
            dwv += &dw;
            let mut dbv = self.b.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            dbv += &g2.sum_axis(Axis(0));
        }
        let w2 = self.w.value.view().into_dimensionality::<Ix2>().unwrap();
        g2.dot(&w2).into_dyn()
    }
}

impl ParamVisit for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Mean over the spatial axes: [n, c, h, w] -> [n, c].
pub struct GlobalAvgPool {
    in_hw: (usize, usize),
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { in_hw: (0, 0) }
    }
}

impl Default for GlobalAvgPool {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVisit for GlobalAvgPool {}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        let x4 = x.into_dimensionality::<Ix4>().expect("gap expects NCHW");
        let (_, _, h, w) = x4.dim();
        self.in_hw = (h, w);
        let out = x4.sum_axis(Axis(3)).sum_axis(Axis(2)) / (h * w) as f64;
        out.into_dyn()
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g2 = grad.into_dimensionality::<Ix2>().unwrap();
        let (n, c) = g2.dim();
        let (h, w) = self.in_hw;
        let mut dx = Array4::zeros((n, c, h, w));
        let scale = 1.0 / (h * w) as f64;
        for i in 0..n {
            for ci in 0..c {
                dx.slice_mut(s![i, ci, .., ..]).fill(g2[[i, ci]] * scale);
            }
        }
        dx.into_dyn()
    }
}

/// Reshapes the per-sample content, keeping the batch axis. Used to
/// unflatten a feature vector into a [c, 1, 1] image.
pub struct Reshape {
    target: Vec<usize>,
    in_shape: Vec<usize>,
}

impl Reshape {
    pub fn new(target: &[usize]) -> Self {
        Reshape {
            target: target.to_vec(),
            in_shape: Vec::new(),
        }
    }
}

impl ParamVisit for Reshape {}

impl Layer for Reshape {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        self.in_shape = x.shape().to_vec();
        let mut shape = vec![x.shape()[0]];
        shape.extend_from_slice(&self.target);
        // Matrix products inherit their operand's memory order, so the
        // input is not necessarily contiguous.
        let x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        x.into_shape_with_order(shape).expect("reshape size mismatch")
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let grad = if grad.is_standard_layout() {
            grad
        } else {
            grad.as_standard_layout().into_owned()
        };
        grad.into_shape_with_order(self.in_shape.clone()).unwrap()
    }
}

/// Center crop of the spatial axes; the offset rounds down, so cropping
/// 108 to 81 keeps rows 13..94. Backward zero-pads back.
pub struct CenterCrop {
    th: usize,
    tw: usize,
    in_shape: Vec<usize>,
}

impl CenterCrop {
    pub fn new(th: usize, tw: usize) -> Self {
        CenterCrop {
            th,
            tw,
            in_shape: Vec::new(),
        }
    }
}

impl ParamVisit for CenterCrop {}

impl Layer for CenterCrop {
    fn forward(&mut self, x: ArrayD<f64>, _train: bool) -> ArrayD<f64> {
        let x4 = x.into_dimensionality::<Ix4>().expect("crop expects NCHW");
        let (_, _, h, w) = x4.dim();
        self.in_shape = x4.shape().to_vec();
        let (oy, ox) = ((h - self.th) / 2, (w - self.tw) / 2);
        x4.slice(s![.., .., oy..oy + self.th, ox..ox + self.tw])
            .to_owned()
            .into_dyn()
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g4 = grad.into_dimensionality::<Ix4>().unwrap();
        let (h, w) = (self.in_shape[2], self.in_shape[3]);
        let mut dx = Array4::zeros((self.in_shape[0], self.in_shape[1], h, w));
        let (oy, ox) = ((h - self.th) / 2, (w - self.tw) / 2);
        dx.slice_mut(s![.., .., oy..oy + self.th, ox..ox + self.tw])
            .assign(&g4);
        dx.into_dyn()
    }
}

/// A plain chain of layers applied in order.
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Self {
        Sequential { layers }
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: ArrayD<f64>, train: bool) -> ArrayD<f64> {
        self.layers
            .iter_mut()
            .fold(x, |acc, l| l.forward(acc, train))
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        self.layers
            .iter_mut()
            .rev()
            .fold(grad, |acc, l| l.backward(acc))
    }
}

impl ParamVisit for Sequential {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for l in &mut self.layers {
            l.visit_params(f);
        }
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        for l in &mut self.layers {
            l.visit_state(f);
        }
    }
}

/// Residual stack: a run of conv + batch-norm units with one identity
/// skip from the stack input to its output. The last unit omits its
/// activation; the skip is added and a final activation follows, with a
/// 1x1 convolution on the skip path when the channel count changes.
pub struct ResStack {
    convs: Vec<Conv2d>,
    bns: Vec<BatchNorm2d>,
    relus: Vec<ReLU>,
    skip: Option<Conv2d>,
    final_relu: ReLU,
    cached_in: Option<ArrayD<f64>>,
}

impl ResStack {
    pub fn new(name: &str, cin: usize, channels: &[usize], rng: &mut Rng) -> Self {
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut prev = cin;
        for (i, &c) in channels.iter().enumerate() {
            convs.push(Conv2d::new(&format!("{name}.conv{i}"), prev, c, 3, 1, rng));
            bns.push(BatchNorm2d::new(&format!("{name}.bn{i}"), c, rng));
            prev = c;
        }
        let relus = (0..channels.len().saturating_sub(1))
            .map(|_| ReLU::new())
            .collect();
        let skip = (cin != prev)
            .then(|| Conv2d::new(&format!("{name}.skip"), cin, prev, 1, 0, rng));
        ResStack {
            convs,
            bns,
            relus,
            skip,
            final_relu: ReLU::new(),
            cached_in: None,
        }
    }
}

impl Layer for ResStack {
    fn forward(&mut self, x: ArrayD<f64>, train: bool) -> ArrayD<f64> {
        self.cached_in = Some(x.clone());
        let mut h = x.clone();
        let last = self.convs.len() - 1;
        for i in 0..self.convs.len() {
            h = self.convs[i].forward(h, train);
            h = self.bns[i].forward(h, train);
            if i < last {
                h = self.relus[i].forward(h, train);
            }
        }
        let skip_out = match &mut self.skip {
            Some(conv) => conv.forward(x, train),
            None => x,
        };
        self.final_relu.forward(h + skip_out, train)
    }

    fn backward(&mut self, grad: ArrayD<f64>) -> ArrayD<f64> {
        let g = self.final_relu.backward(grad);
        let mut gb = g.clone();
        let last = self.convs.len() - 1;
        for i in (0..self.convs.len()).rev() {
            if i < last {
                gb = self.relus[i].backward(gb);
            }
            gb = self.bns[i].backward(gb);
            gb = self.convs[i].backward(gb);
        }
        let gs = match &mut self.skip {
            Some(conv) => conv.backward(g),
            None => g,
        };
        gb + gs
    }
}

impl ParamVisit for ResStack {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for i in 0..self.convs.len() {
            self.convs[i].visit_params(f);
            self.bns[i].visit_params(f);
        }
        if let Some(conv) = &mut self.skip {
            conv.visit_params(f);
        }
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        for bn in &mut self.bns {
            bn.visit_state(f);
        }
    }
}
