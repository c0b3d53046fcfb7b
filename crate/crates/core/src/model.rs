//! The translation network: a strided convolutional encoder to a latent
//! vector, a mirrored transposed-convolution decoder back to a range image,
//! and a 6-layer sigmoid MLP discriminator that scores latent pairs (or a
//! single latent in the vanilla ablation).
//!
//! All gradients are hand-derived; every backward pass is validated against
//! central finite differences in the test suite.

use crate::math;
use crate::sensor::{RangeImage, SensorConfig, INVALID_RANGE};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;
const OUT_PAD: usize = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("image {0}x{1} is not divisible by 2^{2} (one halving per conv layer)")]
    BadImageSize(usize, usize, usize),
    #[error("encoder needs at least one conv layer")]
    NoConvLayers,
    #[error("discriminator needs exactly 5 hidden widths (6 layers with the output)")]
    BadDiscDepth,
    #[error("latent dimension must be at least 1")]
    BadLatent,
    #[error("{0} does not match the model's expected {1}")]
    ShapeMismatch(usize, usize),
}

/// Architecture hyperparameters; spatial sizes must survive the conv stack.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    /// Range normalization scale; decoder outputs land in (0, r_max).
    pub r_max: f64,
    /// Latent dimensionality L.
    pub latent: usize,
    /// Output channels of each stride-2 encoder conv.
    pub enc_channels: Vec<usize>,
    /// Hidden widths of the discriminator MLP (5 entries; output layer is 1).
    pub disc_hidden: Vec<usize>,
}

impl ModelConfig {
    /// Desk-scale default: 32x64 images, latent 128.
    pub fn desk(r_max: f64) -> Self {
        Self {
            height: 32,
            width: 64,
            r_max,
            latent: 128,
            enc_channels: vec![4, 8, 16],
            disc_hidden: vec![96, 64, 48, 32, 16],
        }
    }

    /// Tiny configuration for gradient checks (8x16 images, latent 16).
    pub fn tiny(r_max: f64) -> Self {
        Self {
            height: 8,
            width: 16,
            r_max,
            latent: 16,
            enc_channels: vec![3, 5],
            disc_hidden: vec![12, 10, 8, 6, 4],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.enc_channels.len();
        if n == 0 {
            return Err(ModelError::NoConvLayers);
        }
        let div = 1usize << n;
        if self.height % div != 0 || self.width % div != 0 || self.height < div || self.width < div
        {
            return Err(ModelError::BadImageSize(self.height, self.width, n));
        }
        if self.disc_hidden.len() != 5 {
            return Err(ModelError::BadDiscDepth);
        }
        if self.latent == 0 {
            return Err(ModelError::BadLatent);
        }
        Ok(())
    }

    /// Spatial size after the conv stack.
    pub fn bottom_hw(&self) -> (usize, usize) {
        let n = self.enc_channels.len();
        (self.height >> n, self.width >> n)
    }

    fn bottom_flat(&self) -> usize {
        let (h, w) = self.bottom_hw();
        self.enc_channels[self.enc_channels.len() - 1] * h * w
    }
}

/// Dense row-major (C, H, W) activation buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    #[inline]
    pub fn add(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] += v;
    }
}

/// Normalizes a range image into the 2-channel network input:
/// channel 0 = range / r_max (0 where invalid), channel 1 = validity.
pub fn image_to_tensor(img: &RangeImage, r_max: f64) -> Tensor3 {
    let (h, w) = (img.height(), img.width());
    let mut t = Tensor3::zeros(2, h, w);
    for y in 0..h {
        for x in 0..w {
            let r = img.get(y, x);
            if r != INVALID_RANGE {
                t.set(0, y, x, r as f64 / r_max);
                t.set(1, y, x, 1.0);
            }
        }
    }
    t
}

/// Converts a decoded 1-channel tensor of ranges (meters) into an all-valid
/// range image, clamping away float-underflow at the bottom of the domain.
pub fn tensor_to_image(t: &Tensor3, sensor: &SensorConfig) -> RangeImage {
    debug_assert_eq!(t.c, 1);
    debug_assert_eq!((t.h, t.w), (sensor.height, sensor.width));
    let mut img = RangeImage::new_invalid(*sensor);
    let r_max = sensor.r_max as f32;
    for y in 0..t.h {
        for x in 0..t.w {
            let r = (t.at(0, y, x) as f32).clamp(1e-6, r_max);
            img.set_range(y, x, r);
        }
    }
    img
}

// ---------------------------------------------------------------------------
// layers

pub(crate) fn init_uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let a = math::sqrt(1.0 / fan_in as f64);
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    in_c: usize,
    out_c: usize,
    /// [out_c][in_c][KERNEL][KERNEL]
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub(crate) fn new(in_c: usize, out_c: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_c * KERNEL * KERNEL;
        Self {
            in_c,
            out_c,
            weight: init_uniform(rng, out_c * fan_in, fan_in),
            bias: vec![0.0; out_c],
        }
    }

    pub(crate) fn out_hw(h: usize, w: usize) -> (usize, usize) {
        ((h + 2 * PAD - KERNEL) / STRIDE + 1, (w + 2 * PAD - KERNEL) / STRIDE + 1)
    }

    pub(crate) fn forward(&self, x: &Tensor3) -> Tensor3 {
        debug_assert_eq!(x.c, self.in_c);
        let (oh, ow) = Self::out_hw(x.h, x.w);
        let mut out = Tensor3::zeros(self.out_c, oh, ow);
        for oc in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[oc];
                    for ic in 0..self.in_c {
                        for ky in 0..KERNEL {
                            let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            for kx in 0..KERNEL {
                                let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                let wi = ((oc * self.in_c + ic) * KERNEL + ky) * KERNEL + kx;
                                acc += self.weight[wi] * x.at(ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.set(oc, oy, ox, acc);
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(
        &self,
        x: &Tensor3,
        gout: &Tensor3,
        gw: &mut [f64],
        gb: &mut [f64],
    ) -> Tensor3 {
        let mut gx = Tensor3::zeros(x.c, x.h, x.w);
        for oc in 0..self.out_c {
            for oy in 0..gout.h {
                for ox in 0..gout.w {
                    let g = gout.at(oc, oy, ox);
                    gb[oc] += g;
                    for ic in 0..self.in_c {
                        for ky in 0..KERNEL {
                            let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            for kx in 0..KERNEL {
                                let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                let wi = ((oc * self.in_c + ic) * KERNEL + ky) * KERNEL + kx;
                                gw[wi] += g * x.at(ic, iy as usize, ix as usize);
                                gx.add(ic, iy as usize, ix as usize, g * self.weight[wi]);
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvT2d {
    in_c: usize,
    out_c: usize,
    /// [in_c][out_c][KERNEL][KERNEL]
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvT2d {
    fn new(in_c: usize, out_c: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_c * KERNEL * KERNEL;
        Self {
            in_c,
            out_c,
            weight: init_uniform(rng, in_c * out_c * KERNEL * KERNEL, fan_in),
            bias: vec![0.0; out_c],
        }
    }

    fn out_hw(h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * STRIDE + KERNEL + OUT_PAD - 2 * PAD,
            (w - 1) * STRIDE + KERNEL + OUT_PAD - 2 * PAD,
        )
    }

    fn forward(&self, x: &Tensor3) -> Tensor3 {
        debug_assert_eq!(x.c, self.in_c);
        let (oh, ow) = Self::out_hw(x.h, x.w);
        let mut out = Tensor3::zeros(self.out_c, oh, ow);
        for oc in 0..self.out_c {
            let b = self.bias[oc];
            for v in &mut out.data[oc * oh * ow..(oc + 1) * oh * ow] {
                *v = b;
            }
        }
        for ic in 0..self.in_c {
            for iy in 0..x.h {
                for ix in 0..x.w {
                    let xv = x.at(ic, iy, ix);
                    for oc in 0..self.out_c {
                        for ky in 0..KERNEL {
                            let oy = (iy * STRIDE + ky) as isize - PAD as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            for kx in 0..KERNEL {
                                let ox = (ix * STRIDE + kx) as isize - PAD as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                let wi = ((ic * self.out_c + oc) * KERNEL + ky) * KERNEL + kx;
                                out.add(oc, oy as usize, ox as usize, self.weight[wi] * xv);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(
        &self,
        x: &Tensor3,
        gout: &Tensor3,
        gw: &mut [f64],
        gb: &mut [f64],
    ) -> Tensor3 {
        let (oh, ow) = (gout.h, gout.w);
        for oc in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    gb[oc] += gout.at(oc, oy, ox);
                }
            }
        }
        let mut gx = Tensor3::zeros(x.c, x.h, x.w);
        for ic in 0..self.in_c {
            for iy in 0..x.h {
                for ix in 0..x.w {
                    let xv = x.at(ic, iy, ix);
                    let mut acc = 0.0;
                    for oc in 0..self.out_c {
                        for ky in 0..KERNEL {
                            let oy = (iy * STRIDE + ky) as isize - PAD as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            for kx in 0..KERNEL {
                                let ox = (ix * STRIDE + kx) as isize - PAD as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                let wi = ((ic * self.out_c + oc) * KERNEL + ky) * KERNEL + kx;
                                let g = gout.at(oc, oy as usize, ox as usize);
                                gw[wi] += g * xv;
                                acc += g * self.weight[wi];
                            }
                        }
                    }
                    gx.add(ic, iy, ix, acc);
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    /// [out][in]
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub(crate) fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: init_uniform(rng, in_dim * out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = self.bias.clone();
        for o in 0..self.out_dim {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x.iter()) {
                acc += w * v;
            }
            out[o] += acc;
        }
        out
    }

    pub(crate) fn backward(&self, x: &[f64], gout: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let g = gout[o];
            gb[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
        gx
    }
}

pub(crate) fn tanh_forward(data: &mut [f64]) {
    for v in data.iter_mut() {
        *v = math::tanh(*v);
    }
}

/// d tanh = 1 - y^2, expressed via the cached output y.
pub(crate) fn tanh_backward(grad: &mut [f64], act: &[f64]) {
    for (g, y) in grad.iter_mut().zip(act.iter()) {
        *g *= 1.0 - y * y;
    }
}

fn sigmoid_forward(data: &mut [f64]) {
    for v in data.iter_mut() {
        *v = math::sigmoid(*v);
    }
}

fn sigmoid_backward(grad: &mut [f64], act: &[f64]) {
    for (g, y) in grad.iter_mut().zip(act.iter()) {
        *g *= y * (1.0 - y);
    }
}

// ---------------------------------------------------------------------------
// gradients container

/// Per-parameter-array gradients, aligned with a network's `param_refs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros_like(refs: &[&Vec<f64>]) -> Self {
        Grads(refs.iter().map(|r| vec![0.0; r.len()]).collect())
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.0.iter_mut() {
            for x in a.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// FNV-1a hash over the raw bits of every parameter, used to assert that an
/// optimizer phase touched exactly the parameters it was supposed to.
pub fn param_hash(refs: &[&Vec<f64>]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for arr in refs {
        for v in arr.iter() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

// ---------------------------------------------------------------------------
// encoder

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    convs: Vec<Conv2d>,
    fc: Dense,
    cfg: ModelConfig,
}

pub struct EncCache {
    /// Input to each conv layer (the image, then activated maps).
    inputs: Vec<Tensor3>,
    /// tanh outputs of each conv layer.
    acts: Vec<Tensor3>,
}

impl Encoder {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let mut convs = Vec::new();
        let mut in_c = 2;
        for &out_c in &cfg.enc_channels {
            convs.push(Conv2d::new(in_c, out_c, rng));
            in_c = out_c;
        }
        let fc = Dense::new(cfg.bottom_flat(), cfg.latent, rng);
        Self {
            convs,
            fc,
            cfg: cfg.clone(),
        }
    }

    pub fn forward(&self, x: &Tensor3) -> (Vec<f64>, EncCache) {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut acts = Vec::with_capacity(self.convs.len());
        let mut cur = x.clone();
        for conv in &self.convs {
            inputs.push(cur.clone());
            let mut t = conv.forward(&cur);
            tanh_forward(&mut t.data);
            acts.push(t.clone());
            cur = t;
        }
        let z = self.fc.forward(&cur.data);
        (z, EncCache { inputs, acts })
    }

    /// Convenience forward without keeping the cache.
    pub fn encode(&self, x: &Tensor3) -> Vec<f64> {
        self.forward(x).0
    }

    /// Backpropagates `dz`, accumulating into `grads`; returns the input
    /// gradient (2, H, W).
    pub fn backward(&self, cache: &EncCache, dz: &[f64], grads: &mut Grads) -> Tensor3 {
        let n = self.convs.len();
        let bottom = &cache.acts[n - 1];
        let (gw_fc, gb_fc) = (2 * n, 2 * n + 1);
        let mut gflat = {
            let (gw_slice, gb_slice): (&mut [f64], &mut [f64]) = {
                let (a, b) = grads.0.split_at_mut(gb_fc);
                (&mut a[gw_fc], &mut b[0])
            };
            self.fc.backward(&bottom.data, dz, gw_slice, gb_slice)
        };
        let mut gcur = Tensor3 {
            c: bottom.c,
            h: bottom.h,
            w: bottom.w,
            data: core::mem::take(&mut gflat),
        };
        for i in (0..n).rev() {
            tanh_backward(&mut gcur.data, &cache.acts[i].data);
            let (gw_slice, gb_slice): (&mut [f64], &mut [f64]) = {
                let (a, b) = grads.0.split_at_mut(2 * i + 1);
                (&mut a[2 * i], &mut b[0])
            };
            gcur = self.convs[i].backward(&cache.inputs[i], &gcur, gw_slice, gb_slice);
        }
        gcur
    }

    pub fn param_refs(&self) -> Vec<&Vec<f64>> {
        let mut v = Vec::new();
        for c in &self.convs {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        v.push(&self.fc.weight);
        v.push(&self.fc.bias);
        v
    }

    pub fn param_slots(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::new();
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v.push(&mut self.fc.weight);
        v.push(&mut self.fc.bias);
        v
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        for i in 0..self.convs.len() {
            v.push(alloc::format!("{prefix}.conv{i}.weight"));
            v.push(alloc::format!("{prefix}.conv{i}.bias"));
        }
        v.push(alloc::format!("{prefix}.fc.weight"));
        v.push(alloc::format!("{prefix}.fc.bias"));
        v
    }
}

// ---------------------------------------------------------------------------
// decoder

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    fc: Dense,
    tconvs: Vec<ConvT2d>,
    cfg: ModelConfig,
}

pub struct DecCache {
    z: Vec<f64>,
    fc_act: Vec<f64>,
    /// Input to each tconv layer.
    inputs: Vec<Tensor3>,
    /// Activation outputs: tanh for hidden tconvs, sigmoid for the last.
    acts: Vec<Tensor3>,
}

impl Decoder {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let fc = Dense::new(cfg.latent, cfg.bottom_flat(), rng);
        let mut tconvs = Vec::new();
        let n = cfg.enc_channels.len();
        let mut in_c = cfg.enc_channels[n - 1];
        for i in (0..n).rev() {
            let out_c = if i == 0 { 1 } else { cfg.enc_channels[i - 1] };
            tconvs.push(ConvT2d::new(in_c, out_c, rng));
            in_c = out_c;
        }
        Self {
            fc,
            tconvs,
            cfg: cfg.clone(),
        }
    }

    /// Decodes a latent into a (1, H, W) tensor of ranges in meters,
    /// bounded to (0, r_max) by a scaled sigmoid.
    pub fn forward(&self, z: &[f64]) -> (Tensor3, DecCache) {
        let mut fc_act = self.fc.forward(z);
        tanh_forward(&mut fc_act);
        let (bh, bw) = self.cfg.bottom_hw();
        let c0 = self.cfg.enc_channels[self.cfg.enc_channels.len() - 1];
        let mut cur = Tensor3 {
            c: c0,
            h: bh,
            w: bw,
            data: fc_act.clone(),
        };
        let mut inputs = Vec::with_capacity(self.tconvs.len());
        let mut acts = Vec::with_capacity(self.tconvs.len());
        let last = self.tconvs.len() - 1;
        for (i, tc) in self.tconvs.iter().enumerate() {
            inputs.push(cur.clone());
            let mut t = tc.forward(&cur);
            if i == last {
                sigmoid_forward(&mut t.data);
            } else {
                tanh_forward(&mut t.data);
            }
            acts.push(t.clone());
            cur = t;
        }
        let mut out = cur;
        for v in out.data.iter_mut() {
            *v *= self.cfg.r_max;
        }
        (
            out,
            DecCache {
                z: z.to_vec(),
                fc_act,
                inputs,
                acts,
            },
        )
    }

    pub fn decode(&self, z: &[f64]) -> Tensor3 {
        self.forward(z).0
    }

    /// Backpropagates the gradient w.r.t. the output ranges (meters);
    /// returns the latent gradient.
    pub fn backward(&self, cache: &DecCache, dout: &Tensor3, grads: &mut Grads) -> Vec<f64> {
        let n = self.tconvs.len();
        let mut gcur = dout.clone();
        for v in gcur.data.iter_mut() {
            *v *= self.cfg.r_max;
        }
        for i in (0..n).rev() {
            if i == n - 1 {
                sigmoid_backward(&mut gcur.data, &cache.acts[i].data);
            } else {
                tanh_backward(&mut gcur.data, &cache.acts[i].data);
            }
            let (gw_slice, gb_slice): (&mut [f64], &mut [f64]) = {
                let (a, b) = grads.0.split_at_mut(2 + 2 * i + 1);
                (&mut a[2 + 2 * i], &mut b[0])
            };
            gcur = self.tconvs[i].backward(&cache.inputs[i], &gcur, gw_slice, gb_slice);
        }
        tanh_backward(&mut gcur.data, &cache.fc_act);
        let (gw_slice, gb_slice): (&mut [f64], &mut [f64]) = {
            let (a, b) = grads.0.split_at_mut(1);
            (&mut a[0], &mut b[0])
        };
        self.fc.backward(&cache.z, &gcur.data, gw_slice, gb_slice)
    }

    pub fn param_refs(&self) -> Vec<&Vec<f64>> {
        let mut v = vec![&self.fc.weight, &self.fc.bias];
        for t in &self.tconvs {
            v.push(&t.weight);
            v.push(&t.bias);
        }
        v
    }

    pub fn param_slots(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = vec![&mut self.fc.weight, &mut self.fc.bias];
        for t in &mut self.tconvs {
            v.push(&mut t.weight);
            v.push(&mut t.bias);
        }
        v
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut v = vec![
            alloc::format!("{prefix}.fc.weight"),
            alloc::format!("{prefix}.fc.bias"),
        ];
        for i in 0..self.tconvs.len() {
            v.push(alloc::format!("{prefix}.tconv{i}.weight"));
            v.push(alloc::format!("{prefix}.tconv{i}.bias"));
        }
        v
    }
}

// ---------------------------------------------------------------------------
// discriminator

/// Whether the discriminator scores latent pairs or single latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum DiscKind {
    Couple,
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    layers: Vec<Dense>,
    pub kind: DiscKind,
    input_dim: usize,
}

pub struct DiscCache {
    inputs: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

impl Discriminator {
    pub fn new(cfg: &ModelConfig, kind: DiscKind, rng: &mut impl Rng) -> Self {
        let input_dim = match kind {
            DiscKind::Couple => 2 * cfg.latent,
            DiscKind::Single => cfg.latent,
        };
        let mut dims = vec![input_dim];
        dims.extend_from_slice(&cfg.disc_hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|d| Dense::new(d[0], d[1], rng))
            .collect();
        Self {
            layers,
            kind,
            input_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Scores a flat input (a latent or a concatenated latent pair) in [0, 1].
    pub fn forward(&self, input: &[f64]) -> (f64, DiscCache) {
        debug_assert_eq!(input.len(), self.input_dim);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        for layer in &self.layers {
            inputs.push(cur.clone());
            let mut t = layer.forward(&cur);
            sigmoid_forward(&mut t);
            acts.push(t.clone());
            cur = t;
        }
        (cur[0], DiscCache { inputs, acts })
    }

    pub fn score(&self, input: &[f64]) -> f64 {
        self.forward(input).0
    }

    /// Scores the ordered pair (a, b); couple kind only.
    pub fn score_pair(&self, a: &[f64], b: &[f64]) -> (f64, DiscCache) {
        debug_assert_eq!(self.kind, DiscKind::Couple);
        let mut input = Vec::with_capacity(a.len() + b.len());
        input.extend_from_slice(a);
        input.extend_from_slice(b);
        self.forward(&input)
    }

    /// Backpropagates `dscore`, accumulating into `grads`; returns the
    /// gradient w.r.t. the flat input.
    pub fn backward(&self, cache: &DiscCache, dscore: f64, grads: &mut Grads) -> Vec<f64> {
        let mut gcur = vec![dscore];
        for i in (0..self.layers.len()).rev() {
            sigmoid_backward(&mut gcur, &cache.acts[i]);
            let (gw_slice, gb_slice): (&mut [f64], &mut [f64]) = {
                let (a, b) = grads.0.split_at_mut(2 * i + 1);
                (&mut a[2 * i], &mut b[0])
            };
            gcur = self.layers[i].backward(&cache.inputs[i], &gcur, gw_slice, gb_slice);
        }
        gcur
    }

    pub fn param_refs(&self) -> Vec<&Vec<f64>> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.push(&l.weight);
            v.push(&l.bias);
        }
        v
    }

    pub fn param_slots(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::new();
        for l in &mut self.layers {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| {
                [
                    alloc::format!("{prefix}.fc{i}.weight"),
                    alloc::format!("{prefix}.fc{i}.bias"),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// full model

/// Generator (encoder phi + decoder theta), couple/single discriminator, and
/// an optional target-domain generator (gamma, lambda) for adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub enc: Encoder,
    pub dec: Decoder,
    pub disc: Discriminator,
    pub target: Option<TargetGen>,
    /// Completed optimizer steps.
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetGen {
    pub enc: Encoder,
    pub dec: Decoder,
}

impl Model {
    /// Builds a fresh model. Generator and discriminator draw from
    /// independent seeded streams so ablation modes that drop one component
    /// leave the other's initialization untouched.
    pub fn new(cfg: &ModelConfig, kind: DiscKind, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut gen_rng = crate::train::rng_stream(seed, crate::train::STREAM_GEN_INIT);
        let enc = Encoder::new(cfg, &mut gen_rng);
        let dec = Decoder::new(cfg, &mut gen_rng);
        let mut disc_rng = crate::train::rng_stream(seed, crate::train::STREAM_DISC_INIT);
        let disc = Discriminator::new(cfg, kind, &mut disc_rng);
        Ok(Self {
            config: cfg.clone(),
            enc,
            dec,
            disc,
            target: None,
            step: 0,
        })
    }

    /// Clones the source generator into the target slot (adaptation init).
    pub fn init_target_from_source(&mut self) {
        self.target = Some(TargetGen {
            enc: self.enc.clone(),
            dec: self.dec.clone(),
        });
    }

    /// Translates a scan through the source generator.
    pub fn reconstruct(&self, img: &RangeImage) -> RangeImage {
        let x = image_to_tensor(img, self.config.r_max);
        let z = self.enc.encode(&x);
        let out = self.dec.decode(&z);
        tensor_to_image(&out, img.config())
    }

    /// Translates a scan through the target generator if present, falling
    /// back to the source generator.
    pub fn reconstruct_target(&self, img: &RangeImage) -> RangeImage {
        match &self.target {
            Some(t) => {
                let x = image_to_tensor(img, self.config.r_max);
                let z = t.enc.encode(&x);
                let out = t.dec.decode(&z);
                tensor_to_image(&out, img.config())
            }
            None => self.reconstruct(img),
        }
    }

    /// Total scalar parameter count (target generator included if present).
    pub fn param_count(&self) -> usize {
        let mut n: usize = self
            .enc
            .param_refs()
            .iter()
            .chain(self.dec.param_refs().iter())
            .chain(self.disc.param_refs().iter())
            .map(|v| v.len())
            .sum();
        if let Some(t) = &self.target {
            n += t
                .enc
                .param_refs()
                .iter()
                .chain(t.dec.param_refs().iter())
                .map(|v| v.len())
                .sum::<usize>();
        }
        n
    }

    /// Stable (name, values) listing of every parameter array.
    pub fn named_params(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out: Vec<(String, &Vec<f64>)> = Vec::new();
        out.extend(
            self.enc
                .param_names("enc")
                .into_iter()
                .zip(self.enc.param_refs()),
        );
        out.extend(
            self.dec
                .param_names("dec")
                .into_iter()
                .zip(self.dec.param_refs()),
        );
        out.extend(
            self.disc
                .param_names("disc")
                .into_iter()
                .zip(self.disc.param_refs()),
        );
        if let Some(t) = &self.target {
            out.extend(
                t.enc
                    .param_names("tgt_enc")
                    .into_iter()
                    .zip(t.enc.param_refs()),
            );
            out.extend(
                t.dec
                    .param_names("tgt_dec")
                    .into_iter()
                    .zip(t.dec.param_refs()),
            );
        }
        out
    }

    /// Mutable parameter arrays in `named_params` order.
    pub fn param_slots(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        out.extend(self.enc.param_slots());
        out.extend(self.dec.param_slots());
        out.extend(self.disc.param_slots());
        if let Some(t) = &mut self.target {
            out.extend(t.enc.param_slots());
            out.extend(t.dec.param_slots());
        }
        out
    }

    /// Hash of the generator parameters (encoder + decoder).
    pub fn gen_hash(&self) -> u64 {
        let mut refs = self.enc.param_refs();
        refs.extend(self.dec.param_refs());
        param_hash(&refs)
    }

    /// Hash of the discriminator parameters.
    pub fn disc_hash(&self) -> u64 {
        param_hash(&self.disc.param_refs())
    }

    /// Hash of the target generator parameters (0 when absent).
    pub fn target_hash(&self) -> u64 {
        match &self.target {
            Some(t) => {
                let mut refs = t.enc.param_refs();
                refs.extend(t.dec.param_refs());
                param_hash(&refs)
            }
            None => 0,
        }
    }
}
