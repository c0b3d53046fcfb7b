//! Learned quality indicator (LQI): a no-reference scan quality score.
//!
//! A small convolutional regressor is fit to predict the fraction of
//! dynamic cells in a range image; at evaluation time its sigmoid output
//! serves as the quality score (lower = more static, always in `[0, 1]`).
//! This is a documented proxy: it preserves the metric's contract — ranking
//! scans by how much moving-object contamination they carry — without
//! claiming architectural fidelity to any particular network.
//!
//! Fit-before-score is enforced by construction: an [`LqiModel`] can only be
//! obtained from [`lqi_fit`] (or rebuilt from a checkpoint written from one).

use crate::math;
use crate::model::{image_to_tensor, tanh_backward, tanh_forward, Conv2d, Dense, Tensor3};
use crate::sensor::RangeImage;

/// Input channels: normalized range, validity, and a row-coordinate ramp.
/// The ramp restores absolute elevation, which strided convs otherwise
/// cannot see and which separates floating movers from floor-seated clutter.
const LQI_IN_C: usize = 3;

fn lqi_input(img: &RangeImage, r_max: f64) -> Tensor3 {
    let base = image_to_tensor(img, r_max);
    let (h, w) = (base.h, base.w);
    let mut out = Tensor3::zeros(LQI_IN_C, h, w);
    out.data[..2 * h * w].copy_from_slice(&base.data);
    let denom = (h.max(2) - 1) as f64;
    for y in 0..h {
        let ramp = y as f64 / denom;
        for x in 0..w {
            out.set(2, y, x, ramp);
        }
    }
    out
}
use crate::train::{rng_stream, RmsProp, STREAM_LQI};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LqiError {
    #[error("need at least {need} training scans, got {got}")]
    TooFewScans { need: usize, got: usize },
    #[error("training scan {index} is {got_h}x{got_w}, expected {want_h}x{want_w}")]
    ShapeMismatch {
        index: usize,
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("training target {index} is {value}, expected a fraction in [0, 1]")]
    BadTarget { index: usize, value: f64 },
    #[error("image too small: {0}x{1} collapses before the final layer")]
    ImageTooSmall(usize, usize),
    #[error("scored scan is {got_h}x{got_w}, model expects {want_h}x{want_w}")]
    ScoreShapeMismatch {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("checkpoint parameter arrays do not match the declared architecture")]
    BadCheckpoint,
}

/// Fit hyper-parameters for the quality regressor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct LqiConfig {
    /// Channel widths of the strided conv stack (input has [`LQI_IN_C`] channels).
    pub channels: Vec<usize>,
    /// Full passes over the training scans.
    pub epochs: usize,
    /// RMSprop learning rate.
    pub lr: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for LqiConfig {
    fn default() -> Self {
        Self {
            channels: vec![6, 12],
            epochs: 150,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// The fitted quality regressor: a strided conv stack followed by global
/// average pooling and a scalar head. Averaging matches the target's
/// structure (a fraction of contaminated cells is itself a spatial mean of
/// local evidence) and keeps the parameter count too small to memorize
/// individual rooms.
#[derive(Debug, Clone, PartialEq)]
pub struct LqiModel {
    convs: Vec<Conv2d>,
    fc: Dense,
    height: usize,
    width: usize,
    r_max: f64,
    channels: Vec<usize>,
}

struct LqiCache {
    /// Input plus every post-tanh conv activation.
    acts: Vec<Tensor3>,
    /// Per-channel global average of the last activation.
    pooled: Vec<f64>,
    /// Pre-sigmoid scalar.
    logit: f64,
}

impl LqiModel {
    fn bottom_hw(height: usize, width: usize, n_layers: usize) -> (usize, usize) {
        let mut hw = (height, width);
        for _ in 0..n_layers {
            hw = Conv2d::out_hw(hw.0, hw.1);
        }
        hw
    }

    fn forward(&self, img: &RangeImage) -> LqiCache {
        let mut acts = Vec::with_capacity(self.convs.len() + 1);
        acts.push(lqi_input(img, self.r_max));
        for conv in &self.convs {
            let mut out = conv.forward(acts.last().expect("non-empty"));
            tanh_forward(&mut out.data);
            acts.push(out);
        }
        let last = acts.last().expect("non-empty");
        let hw = (last.h * last.w) as f64;
        let pooled: Vec<f64> = (0..last.c)
            .map(|c| last.data[c * last.h * last.w..(c + 1) * last.h * last.w]
                .iter()
                .sum::<f64>()
                / hw)
            .collect();
        let logit = self.fc.forward(&pooled)[0];
        LqiCache { acts, pooled, logit }
    }

    /// Scores one scan: the predicted dynamic-cell fraction in `[0, 1]`.
    /// Lower means more static.
    pub fn score(&self, img: &RangeImage) -> Result<f64, LqiError> {
        if img.height() != self.height || img.width() != self.width {
            return Err(LqiError::ScoreShapeMismatch {
                got_h: img.height(),
                got_w: img.width(),
                want_h: self.height,
                want_w: self.width,
            });
        }
        Ok(math::sigmoid(self.forward(img).logit))
    }

    /// Expected scan height.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Expected scan width.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Range normalization used on inputs.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Conv channel widths (for checkpoint round-trips).
    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// Flattened views of every parameter array, conv-first then the head.
    pub fn param_refs(&self) -> Vec<&Vec<f64>> {
        let mut refs = Vec::new();
        for c in &self.convs {
            refs.push(&c.weight);
            refs.push(&c.bias);
        }
        refs.push(&self.fc.weight);
        refs.push(&self.fc.bias);
        refs
    }

    fn param_slots(&mut self) -> Vec<&mut Vec<f64>> {
        let mut slots = Vec::new();
        for c in &mut self.convs {
            slots.push(&mut c.weight);
            slots.push(&mut c.bias);
        }
        slots.push(&mut self.fc.weight);
        slots.push(&mut self.fc.bias);
        slots
    }

    /// Stable parameter-array names aligned with [`Self::param_refs`].
    pub fn param_names(&self) -> Vec<String> {
        use alloc::format;
        let mut names = Vec::new();
        for i in 0..self.convs.len() {
            names.push(format!("lqi.conv{i}.weight"));
            names.push(format!("lqi.conv{i}.bias"));
        }
        names.push(String::from("lqi.fc.weight"));
        names.push(String::from("lqi.fc.bias"));
        names
    }

    /// Rebuilds a model from checkpointed parameter arrays (same order as
    /// [`Self::param_refs`]). Used by the file-format layer.
    pub fn from_parts(
        height: usize,
        width: usize,
        r_max: f64,
        channels: Vec<usize>,
        params: &[Vec<f64>],
    ) -> Result<Self, LqiError> {
        let mut model = init_model(height, width, r_max, &channels, 0)?;
        let expected: Vec<usize> = model.param_refs().iter().map(|p| p.len()).collect();
        if params.len() != expected.len()
            || params.iter().zip(expected.iter()).any(|(p, &e)| p.len() != e)
        {
            return Err(LqiError::BadCheckpoint);
        }
        for (slot, src) in model.param_slots().into_iter().zip(params.iter()) {
            slot.copy_from_slice(src);
        }
        Ok(model)
    }
}

fn init_model(
    height: usize,
    width: usize,
    r_max: f64,
    channels: &[usize],
    seed: u64,
) -> Result<LqiModel, LqiError> {
    if channels.is_empty() {
        return Err(LqiError::ImageTooSmall(height, width));
    }
    let (bh, bw) = LqiModel::bottom_hw(height, width, channels.len());
    if bh == 0 || bw == 0 {
        return Err(LqiError::ImageTooSmall(height, width));
    }
    let mut rng = rng_stream(seed, STREAM_LQI);
    let mut convs = Vec::with_capacity(channels.len());
    let mut in_c = LQI_IN_C;
    for &out_c in channels {
        convs.push(Conv2d::new(in_c, out_c, &mut rng));
        in_c = out_c;
    }
    let fc = Dense::new(in_c, 1, &mut rng);
    Ok(LqiModel {
        convs,
        fc,
        height,
        width,
        r_max,
        channels: channels.to_vec(),
    })
}

/// Fits the quality regressor on `(scan, dynamic fraction)` pairs with MSE
/// loss. Deterministic for a fixed seed: initialization draws from a
/// dedicated stream and epochs sweep the scans in the given order.
pub fn lqi_fit(
    scans: &[(&RangeImage, f64)],
    r_max: f64,
    cfg: &LqiConfig,
) -> Result<LqiModel, LqiError> {
    if scans.len() < 4 {
        return Err(LqiError::TooFewScans {
            need: 4,
            got: scans.len(),
        });
    }
    let height = scans[0].0.height();
    let width = scans[0].0.width();
    for (i, (img, target)) in scans.iter().enumerate() {
        if img.height() != height || img.width() != width {
            return Err(LqiError::ShapeMismatch {
                index: i,
                got_h: img.height(),
                got_w: img.width(),
                want_h: height,
                want_w: width,
            });
        }
        if !target.is_finite() || *target < 0.0 || *target > 1.0 {
            return Err(LqiError::BadTarget {
                index: i,
                value: *target,
            });
        }
    }

    let mut model = init_model(height, width, r_max, &cfg.channels, cfg.seed)?;
    let shapes: Vec<usize> = model.param_refs().iter().map(|p| p.len()).collect();
    let mut opt = RmsProp::new(cfg.lr, &shapes);
    let n_convs = model.convs.len();

    for _ in 0..cfg.epochs {
        for (img, target) in scans {
            let cache = model.forward(img);
            let pred = math::sigmoid(cache.logit);
            // d/dlogit of (pred - target)^2
            let dlogit = 2.0 * (pred - target) * pred * (1.0 - pred);

            let mut grads: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
            let (conv_g, head_g) = grads.split_at_mut(2 * n_convs);
            let (head_w, head_b) = head_g.split_at_mut(1);
            let gpooled =
                model
                    .fc
                    .backward(&cache.pooled, &[dlogit], &mut head_w[0], &mut head_b[0]);
            let last = &cache.acts[n_convs];
            let hw = (last.h * last.w) as f64;
            let mut gflat = vec![0.0; last.data.len()];
            for c in 0..last.c {
                let g = gpooled[c] / hw;
                for v in &mut gflat[c * last.h * last.w..(c + 1) * last.h * last.w] {
                    *v = g;
                }
            }
            for l in (0..n_convs).rev() {
                let act = &cache.acts[l + 1];
                tanh_backward(&mut gflat, &act.data);
                let mut gout = Tensor3::zeros(act.c, act.h, act.w);
                gout.data.copy_from_slice(&gflat);
                let (gw, gb) = conv_g[2 * l..2 * l + 2].split_at_mut(1);
                let gx = model.convs[l].backward(&cache.acts[l], &gout, &mut gw[0], &mut gb[0]);
                gflat = gx.data;
            }

            let grad_refs: Vec<&Vec<f64>> = grads.iter().collect();
            opt.step(model.param_slots(), &grad_refs);
        }
    }
    Ok(model)
}
