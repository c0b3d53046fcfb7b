//! Adversarial training of the translator. Each step alternates a
//! discriminator phase (least-squares couple loss, discriminator parameters
//! only) and a generator phase (adversarial + reconstruction + triplet,
//! encoder/decoder parameters only). A separate adaptation stage aligns an
//! unpaired target domain to the source latent space with a kernel
//! discrepancy penalty.

use crate::loss::{self, LossWeights};
use crate::math;
use crate::metrics;
use crate::model::{
    image_to_tensor, DiscKind, Grads, Model, ModelConfig, ModelError, Tensor3,
};
use crate::sensor::{unproject, PointCloud, RangeImage};
use crate::world::ScanPair;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic substream ids: every consumer of randomness gets its own
/// stream so ablations that drop a consumer leave the others untouched.
pub const STREAM_GEN_INIT: u64 = 1;
pub const STREAM_DISC_INIT: u64 = 2;
pub const STREAM_SAMPLER: u64 = 3;
pub const STREAM_WORLDGEN: u64 = 4;
pub const STREAM_LQI: u64 = 5;

/// Seeded generator on an independent stream.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("need at least 2 training pairs, got {0}")]
    DatasetTooSmall(usize),
    #[error("batch size must be at least 1")]
    BadBatchSize,
    #[error("epochs must be at least 1")]
    BadEpochs,
    #[error("data is {0}x{1} but the model expects {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("model r_max {0} does not match sensor r_max {1}")]
    RangeScaleMismatch(f64, f64),
    #[error("domain adaptation requires a couple discriminator")]
    NeedCoupleDisc,
    #[error("adaptation needs at least one target scan")]
    EmptyTarget,
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// optimizer

/// Root-mean-square propagation with decay 0.9 and epsilon 1e-8.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub beta: f64,
    pub eps: f64,
    cache: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Self {
            lr,
            beta: 0.9,
            eps: 1e-8,
            cache: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: &[&Vec<f64>]) {
        debug_assert_eq!(params.len(), self.cache.len());
        debug_assert_eq!(grads.len(), self.cache.len());
        for ((p, g), c) in params.into_iter().zip(grads).zip(self.cache.iter_mut()) {
            for i in 0..p.len() {
                let gi = g[i];
                c[i] = self.beta * c[i] + (1.0 - self.beta) * gi * gi;
                p[i] -= self.lr * gi / (math::sqrt(c[i]) + self.eps);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// configuration

/// Which objective the run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum TrainMode {
    /// Couple discriminator plus the hard-negative triplet term.
    Moves,
    /// Couple discriminator only.
    Cod,
    /// Single-latent discriminator, no triplet.
    Vanilla,
    /// Reconstruction only.
    Ae,
}

impl TrainMode {
    pub fn disc_kind(self) -> DiscKind {
        match self {
            TrainMode::Vanilla => DiscKind::Single,
            _ => DiscKind::Couple,
        }
    }

    pub fn uses_disc(self) -> bool {
        !matches!(self, TrainMode::Ae)
    }

    pub fn uses_triplet(self) -> bool {
        matches!(self, TrainMode::Moves)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weights: LossWeights,
    /// Replace the least-squares terms with their relativistic-average form.
    pub relativistic: bool,
    /// Stop when the validation metric has not improved for this many epochs.
    pub patience: Option<usize>,
    pub seed: u64,
    /// Validation pairs used for the per-epoch transport metric.
    pub eval_pairs: usize,
    /// Cloud subsample size for the per-epoch transport metric.
    pub eval_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Moves,
            epochs: 1,
            batch_size: 64,
            lr: 1e-4,
            weights: LossWeights::default(),
            relativistic: false,
            patience: None,
            seed: 0,
            eval_pairs: 16,
            eval_points: 64,
        }
    }
}

// ---------------------------------------------------------------------------
// batch sampling

/// (anchor, positive) index pairs; the anchor's own dynamic scan is the
/// hard negative.
pub type Batch = Vec<(usize, usize)>;

/// One shuffled pass over the dataset in batches. Every anchor appears
/// exactly once per epoch; its positive is uniform over the other indices.
pub fn sample_epoch<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Batch> {
    debug_assert!(n >= 2 && batch_size >= 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let j = loop {
                        let j = rng.gen_range(0..n);
                        if j != i {
                            break j;
                        }
                    };
                    (i, j)
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// trainer

struct DataCache<'a> {
    pairs: &'a [ScanPair],
    stat_t: Vec<Tensor3>,
    dyn_t: Vec<Tensor3>,
}

impl<'a> DataCache<'a> {
    fn new(pairs: &'a [ScanPair], r_max: f64) -> Self {
        Self {
            pairs,
            stat_t: pairs.iter().map(|p| image_to_tensor(&p.static_img, r_max)).collect(),
            dyn_t: pairs.iter().map(|p| image_to_tensor(&p.dynamic_img, r_max)).collect(),
        }
    }
}

/// Per-step batch-mean loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub disc_adv: f64,
    pub triplet: f64,
    pub disc_obj: f64,
    pub gen_adv: f64,
    pub recon: f64,
    pub gen_obj: f64,
}

pub struct Trainer {
    pub model: Model,
    cfg: TrainConfig,
    opt_gen: RmsProp,
    opt_disc: RmsProp,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, model: Model) -> Self {
        let gen_shapes: Vec<usize> = model
            .enc
            .param_refs()
            .iter()
            .chain(model.dec.param_refs().iter())
            .map(|v| v.len())
            .collect();
        let disc_shapes: Vec<usize> =
            model.disc.param_refs().iter().map(|v| v.len()).collect();
        Self {
            model,
            cfg: cfg.clone(),
            opt_gen: RmsProp::new(cfg.lr, &gen_shapes),
            opt_disc: RmsProp::new(cfg.lr, &disc_shapes),
        }
    }

    fn train_step(&mut self, data: &DataCache, batch: &Batch) -> StepStats {
        let mut stats = StepStats::default();
        if self.cfg.mode.uses_disc() {
            let (adv, tri) = self.disc_phase(data, batch);
            stats.disc_adv = adv;
            stats.triplet = tri;
            let w_tri = if self.cfg.mode.uses_triplet() {
                self.cfg.weights.tri
            } else {
                0.0
            };
            stats.disc_obj = adv + w_tri * tri;
        }
        let (gen_adv, recon, tri_g) = self.gen_phase(data, batch);
        stats.gen_adv = gen_adv;
        stats.recon = recon;
        let w = &self.cfg.weights;
        stats.gen_obj = w.adv_g * gen_adv + w.recon * recon + w.tri * tri_g;
        self.model.step += 1;
        stats
    }

    /// Updates the discriminator on real couples (static-positive, static)
    /// versus fake couples (dynamic, static). Returns the batch-mean
    /// adversarial loss and the (couple modes only) triplet value, which
    /// carries no discriminator gradient.
    fn disc_phase(&mut self, data: &DataCache, batch: &Batch) -> (f64, f64) {
        #[cfg(debug_assertions)]
        let gen_before = self.model.gen_hash();
        let n = batch.len() as f64;
        let enc = &self.model.enc;
        let lat_si: Vec<Vec<f64>> =
            batch.iter().map(|&(i, _)| enc.encode(&data.stat_t[i])).collect();
        let lat_di: Vec<Vec<f64>> =
            batch.iter().map(|&(i, _)| enc.encode(&data.dyn_t[i])).collect();
        let lat_sj: Vec<Vec<f64>> = match self.model.disc.kind {
            DiscKind::Couple => batch
                .iter()
                .map(|&(_, j)| enc.encode(&data.stat_t[j]))
                .collect(),
            DiscKind::Single => Vec::new(),
        };

        let disc = &self.model.disc;
        let mut grads = Grads::zeros_like(&disc.param_refs());
        let forward = |k: usize, fake: bool| match disc.kind {
            DiscKind::Couple => {
                if fake {
                    disc.score_pair(&lat_di[k], &lat_si[k])
                } else {
                    disc.score_pair(&lat_sj[k], &lat_si[k])
                }
            }
            DiscKind::Single => {
                if fake {
                    disc.forward(&lat_di[k])
                } else {
                    disc.forward(&lat_si[k])
                }
            }
        };
        let disc_adv;
        if self.cfg.relativistic {
            let reals: Vec<_> = (0..batch.len()).map(|k| forward(k, false)).collect();
            let fakes: Vec<_> = (0..batch.len()).map(|k| forward(k, true)).collect();
            let rs: Vec<f64> = reals.iter().map(|r| r.0).collect();
            let fs: Vec<f64> = fakes.iter().map(|f| f.0).collect();
            let (l, gr, gf) = loss::ra_disc_loss(&rs, &fs);
            disc_adv = l;
            for (k, (_, cache)) in reals.iter().enumerate() {
                disc.backward(cache, gr[k], &mut grads);
            }
            for (k, (_, cache)) in fakes.iter().enumerate() {
                disc.backward(cache, gf[k], &mut grads);
            }
        } else {
            let mut sum = 0.0;
            for k in 0..batch.len() {
                let (sr, cr) = forward(k, false);
                let (sf, cf) = forward(k, true);
                sum += loss::disc_adversarial(sr, sf);
                disc.backward(&cr, loss::lsgan_grad(sr, 1.0) / n, &mut grads);
                disc.backward(&cf, loss::lsgan_grad(sf, 0.0) / n, &mut grads);
            }
            disc_adv = sum / n;
        }

        // reported with the objective; gradient w.r.t. discriminator is zero
        let triplet = if self.model.disc.kind == DiscKind::Couple {
            (0..batch.len())
                .map(|k| loss::triplet(&lat_si[k], &lat_sj[k], &lat_di[k], self.cfg.weights.margin))
                .sum::<f64>()
                / n
        } else {
            0.0
        };

        let grefs: Vec<&Vec<f64>> = grads.0.iter().collect();
        self.opt_disc.step(self.model.disc.param_slots(), &grefs);
        #[cfg(debug_assertions)]
        debug_assert_eq!(
            gen_before,
            self.model.gen_hash(),
            "discriminator phase must not touch generator parameters"
        );
        (disc_adv, triplet)
    }

    /// Updates the encoder/decoder on reconstruction plus (where enabled)
    /// the adversarial and triplet terms. The conditioning static latent is
    /// detached in the adversarial term: its gradient flows through the
    /// dynamic encoding only.
    fn gen_phase(&mut self, data: &DataCache, batch: &Batch) -> (f64, f64, f64) {
        #[cfg(debug_assertions)]
        let disc_before = self.model.disc_hash();
        let n = batch.len() as f64;
        let w = self.cfg.weights;
        let mode = self.cfg.mode;
        let use_adv = mode.uses_disc() && w.adv_g != 0.0;
        let use_tri = mode.uses_triplet() && w.tri != 0.0;
        let couple = self.model.disc.kind == DiscKind::Couple;
        let latent = self.model.config.latent;

        let mut enc_grads = Grads::zeros_like(&self.model.enc.param_refs());
        let mut dec_grads = Grads::zeros_like(&self.model.dec.param_refs());
        let mut disc_sink = Grads::zeros_like(&self.model.disc.param_refs());

        let enc = &self.model.enc;
        let dec = &self.model.dec;
        let disc = &self.model.disc;

        let mut recon_sum = 0.0;
        let mut tri_sum = 0.0;

        // forward pass, keeping per-sample caches
        let mut z_di = Vec::with_capacity(batch.len());
        let mut cache_di = Vec::with_capacity(batch.len());
        let mut dec_caches = Vec::with_capacity(batch.len());
        let mut dpreds = Vec::with_capacity(batch.len());
        let mut z_si = Vec::new();
        let mut cache_si = Vec::new();
        let mut z_sj = Vec::new();
        let mut cache_sj = Vec::new();
        let mut fake_scores = Vec::new();
        let mut fake_caches = Vec::new();
        let mut real_scores = Vec::new();

        let need_si = use_tri || (use_adv && couple) || (use_adv && self.cfg.relativistic);
        let need_sj = use_tri || (use_adv && self.cfg.relativistic && couple);

        for &(i, j) in batch {
            let (z, c) = enc.forward(&data.dyn_t[i]);
            let (out, dc) = dec.forward(&z);
            let (rv, mut dpred) =
                loss::recon_loss_grad(&out, &data.pairs[i].static_img, self.model.config.r_max);
            recon_sum += rv / n;
            for g in dpred.data.iter_mut() {
                *g *= w.recon / n;
            }
            z_di.push(z);
            cache_di.push(c);
            dec_caches.push(dc);
            dpreds.push(dpred);
            if need_si {
                if use_tri {
                    let (zs, cs) = enc.forward(&data.stat_t[i]);
                    z_si.push(zs);
                    cache_si.push(cs);
                } else {
                    z_si.push(enc.encode(&data.stat_t[i]));
                }
            }
            if need_sj {
                if use_tri {
                    let (zs, cs) = enc.forward(&data.stat_t[j]);
                    z_sj.push(zs);
                    cache_sj.push(cs);
                } else {
                    z_sj.push(enc.encode(&data.stat_t[j]));
                }
            }
        }
        if use_adv {
            for k in 0..batch.len() {
                let (s, c) = if couple {
                    disc.score_pair(&z_di[k], &z_si[k])
                } else {
                    disc.forward(&z_di[k])
                };
                fake_scores.push(s);
                fake_caches.push(c);
                if self.cfg.relativistic {
                    let sr = if couple {
                        disc.score_pair(&z_sj[k], &z_si[k]).0
                    } else {
                        disc.score(&z_si[k])
                    };
                    real_scores.push(sr);
                }
            }
        }

        // adversarial value and per-sample score gradients
        let mut gen_adv = 0.0;
        let mut dscores = vec![0.0; batch.len()];
        if use_adv {
            if self.cfg.relativistic {
                let (l, gf) = loss::ra_gen_loss(&fake_scores, &real_scores);
                gen_adv = l;
                for (k, g) in gf.into_iter().enumerate() {
                    dscores[k] = w.adv_g * g;
                }
            } else {
                for k in 0..batch.len() {
                    gen_adv += loss::lsgan_term(fake_scores[k], 1.0) / n;
                    dscores[k] = w.adv_g * loss::lsgan_grad(fake_scores[k], 1.0) / n;
                }
            }
        }

        // backward pass
        for k in 0..batch.len() {
            let mut dz = dec.backward(&dec_caches[k], &dpreds[k], &mut dec_grads);
            if use_adv {
                let gin = disc.backward(&fake_caches[k], dscores[k], &mut disc_sink);
                for (d, g) in dz.iter_mut().zip(gin.iter().take(latent)) {
                    *d += g;
                }
            }
            if use_tri {
                let (tv, ga, gp, gn) =
                    loss::triplet_grad(&z_si[k], &z_sj[k], &z_di[k], w.margin);
                tri_sum += tv / n;
                if tv > 0.0 {
                    let scale = w.tri / n;
                    for (d, g) in dz.iter_mut().zip(gn.iter()) {
                        *d += scale * g;
                    }
                    let ga: Vec<f64> = ga.iter().map(|g| g * scale).collect();
                    enc.backward(&cache_si[k], &ga, &mut enc_grads);
                    let gp: Vec<f64> = gp.iter().map(|g| g * scale).collect();
                    enc.backward(&cache_sj[k], &gp, &mut enc_grads);
                }
            }
            enc.backward(&cache_di[k], &dz, &mut enc_grads);
        }

        let mut slots = self.model.enc.param_slots();
        slots.extend(self.model.dec.param_slots());
        let grefs: Vec<&Vec<f64>> =
            enc_grads.0.iter().chain(dec_grads.0.iter()).collect();
        self.opt_gen.step(slots, &grefs);
        #[cfg(debug_assertions)]
        debug_assert_eq!(
            disc_before,
            self.model.disc_hash(),
            "generator phase must not touch discriminator parameters"
        );
        (gen_adv, recon_sum, tri_sum)
    }
}

// ---------------------------------------------------------------------------
// training loop

/// Batch-mean losses and validation metrics for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub disc_adv: f64,
    pub triplet: f64,
    pub disc_obj: f64,
    pub gen_adv: f64,
    pub recon: f64,
    pub gen_obj: f64,
    pub val_chamfer: Option<f64>,
    pub val_emd: Option<f64>,
}

#[derive(Debug)]
pub struct TrainReport {
    /// Model with the best validation transport cost (last model when no
    /// validation pairs were given).
    pub best: Model,
    pub last: Model,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn subsampled(cloud: &PointCloud, k: usize) -> PointCloud {
    let idx = metrics::farthest_point_sample(cloud.points(), k, 0xE4D);
    PointCloud::from_points(idx.into_iter().map(|i| cloud.points()[i]).collect())
}

/// Mean static-reference transport metrics of the translated validation
/// scans: summed nearest-neighbor cost on the full clouds, assignment cost
/// on subsampled clouds for the first `eval_pairs` entries.
pub fn validate_model(
    model: &Model,
    val: &[ScanPair],
    eval_pairs: usize,
    eval_points: usize,
) -> (Option<f64>, Option<f64>) {
    if val.is_empty() {
        return (None, None);
    }
    let mut ch = 0.0;
    let mut emds = Vec::new();
    for (idx, p) in val.iter().enumerate() {
        let recon = model.reconstruct(&p.dynamic_img);
        let rc = unproject(&recon);
        let sc = unproject(&p.static_img);
        ch += metrics::chamfer(&rc, &sc).unwrap_or(f64::INFINITY);
        if idx < eval_pairs {
            let a = subsampled(&rc, eval_points);
            let b = subsampled(&sc, eval_points);
            if !a.is_empty() && a.len() == b.len() {
                if let Ok(e) = metrics::emd(&a, &b) {
                    emds.push(e);
                }
            }
        }
    }
    let emd = if emds.is_empty() {
        None
    } else {
        Some(emds.iter().sum::<f64>() / emds.len() as f64)
    };
    (Some(ch / val.len() as f64), emd)
}

/// Trains a fresh model. The observer runs once per epoch.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train_pairs: &[ScanPair],
    val_pairs: &[ScanPair],
    mut observer: impl FnMut(&EpochLog),
) -> Result<TrainReport, TrainError> {
    if cfg.batch_size == 0 {
        return Err(TrainError::BadBatchSize);
    }
    if cfg.epochs == 0 {
        return Err(TrainError::BadEpochs);
    }
    if train_pairs.len() < 2 {
        return Err(TrainError::DatasetTooSmall(train_pairs.len()));
    }
    let sensor = *train_pairs[0].static_img.config();
    if (sensor.height, sensor.width) != (model_cfg.height, model_cfg.width) {
        return Err(TrainError::ShapeMismatch(
            sensor.height,
            sensor.width,
            model_cfg.height,
            model_cfg.width,
        ));
    }
    if sensor.r_max != model_cfg.r_max {
        return Err(TrainError::RangeScaleMismatch(model_cfg.r_max, sensor.r_max));
    }

    let model = Model::new(model_cfg, cfg.mode.disc_kind(), cfg.seed)?;
    let mut trainer = Trainer::new(cfg, model);
    let data = DataCache::new(train_pairs, model_cfg.r_max);
    let mut sampler = rng_stream(cfg.seed, STREAM_SAMPLER);

    let mut best: Option<(f64, Model, usize)> = None;
    let mut history: Vec<EpochLog> = Vec::new();
    for epoch in 0..cfg.epochs {
        let batches = sample_epoch(train_pairs.len(), cfg.batch_size, &mut sampler);
        let mut agg = StepStats::default();
        for batch in &batches {
            let s = trainer.train_step(&data, batch);
            agg.disc_adv += s.disc_adv;
            agg.triplet += s.triplet;
            agg.disc_obj += s.disc_obj;
            agg.gen_adv += s.gen_adv;
            agg.recon += s.recon;
            agg.gen_obj += s.gen_obj;
        }
        let steps = batches.len() as f64;
        let (val_chamfer, val_emd) =
            validate_model(&trainer.model, val_pairs, cfg.eval_pairs, cfg.eval_points);
        let log = EpochLog {
            epoch,
            disc_adv: agg.disc_adv / steps,
            triplet: agg.triplet / steps,
            disc_obj: agg.disc_obj / steps,
            gen_adv: agg.gen_adv / steps,
            recon: agg.recon / steps,
            gen_obj: agg.gen_obj / steps,
            val_chamfer,
            val_emd,
        };
        observer(&log);
        history.push(log);
        if let Some(vc) = val_chamfer {
            if best.as_ref().is_none_or(|(b, _, _)| vc < *b) {
                best = Some((vc, trainer.model.clone(), epoch));
            }
        }
        if let (Some(p), Some((_, _, be))) = (cfg.patience, best.as_ref()) {
            if epoch - be >= p {
                break;
            }
        }
    }
    let best_epoch = best.as_ref().map_or(history.len() - 1, |(_, _, e)| *e);
    let best_model = best.map_or_else(|| trainer.model.clone(), |(_, m, _)| m);
    Ok(TrainReport {
        best: best_model,
        last: trainer.model,
        history,
        best_epoch,
    })
}

// ---------------------------------------------------------------------------
// domain adaptation

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub w_mmd: f64,
    pub seed: u64,
    pub patience: Option<usize>,
    /// Source static scans used as the fixed latent reference set.
    pub max_source_ref: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 64,
            lr: 1e-4,
            w_mmd: 1.0,
            seed: 0,
            patience: None,
            max_source_ref: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptEpochLog {
    pub epoch: usize,
    pub disc_adv: f64,
    pub gen_adv: f64,
    pub self_recon: f64,
    pub mmd: f64,
    pub val_mmd: f64,
    pub val_self_recon: f64,
    pub val_obj: f64,
}

#[derive(Debug)]
pub struct AdaptReport {
    /// Best model (by validation objective), target generator populated.
    pub best: Model,
    pub last: Model,
    pub history: Vec<AdaptEpochLog>,
    pub best_epoch: usize,
    /// Latent discrepancy between target scans and source statics before
    /// and after adaptation, at the fixed initial bandwidth.
    pub mmd_before: f64,
    pub mmd_after: f64,
    pub sigma: f64,
}

/// Adapts a trained source model to an unpaired target domain: a cloned
/// generator is fitted to the target scans with self-reconstruction, an
/// adversarial couple term against source statics, and a kernel discrepancy
/// pulling target latents onto the source static latent distribution.
/// Source generator parameters stay frozen.
pub fn adapt(
    cfg: &AdaptConfig,
    base: &Model,
    source_pairs: &[ScanPair],
    target_train: &[RangeImage],
    target_val: &[RangeImage],
) -> Result<AdaptReport, TrainError> {
    if cfg.batch_size == 0 {
        return Err(TrainError::BadBatchSize);
    }
    if cfg.epochs == 0 {
        return Err(TrainError::BadEpochs);
    }
    if base.disc.kind != DiscKind::Couple {
        return Err(TrainError::NeedCoupleDisc);
    }
    if source_pairs.len() < 2 {
        return Err(TrainError::DatasetTooSmall(source_pairs.len()));
    }
    if target_train.is_empty() {
        return Err(TrainError::EmptyTarget);
    }
    let r_max = base.config.r_max;
    let mcfg = &base.config;
    for img in target_train.iter().chain(target_val.iter()) {
        if (img.height(), img.width()) != (mcfg.height, mcfg.width) {
            return Err(TrainError::ShapeMismatch(
                img.height(),
                img.width(),
                mcfg.height,
                mcfg.width,
            ));
        }
    }

    let mut model = base.clone();
    model.init_target_from_source();
    #[cfg(debug_assertions)]
    let src_hash = model.gen_hash();

    let src_stat_t: Vec<Tensor3> = source_pairs
        .iter()
        .map(|p| image_to_tensor(&p.static_img, r_max))
        .collect();
    let src_dyn_t: Vec<Tensor3> = source_pairs
        .iter()
        .map(|p| image_to_tensor(&p.dynamic_img, r_max))
        .collect();
    let tgt_t: Vec<Tensor3> = target_train
        .iter()
        .map(|img| image_to_tensor(img, r_max))
        .collect();
    let val_imgs: &[RangeImage] = if target_val.is_empty() {
        target_train
    } else {
        target_val
    };
    let val_t: Vec<Tensor3> = val_imgs.iter().map(|img| image_to_tensor(img, r_max)).collect();

    // fixed latent reference: source statics through the frozen encoder
    let n_ref = cfg.max_source_ref.min(src_stat_t.len()).max(1);
    let src_ref: Vec<Vec<f64>> =
        src_stat_t[..n_ref].iter().map(|t| model.enc.encode(t)).collect();
    let tgt_val_latents = |m: &Model| -> Vec<Vec<f64>> {
        let enc = &m.target.as_ref().expect("target generator present").enc;
        val_t.iter().map(|t| enc.encode(t)).collect()
    };
    let init_val = tgt_val_latents(&model);
    let sigma = loss::median_sigma(&init_val, &src_ref);
    let mmd_before = loss::mmd_gaussian(&init_val, &src_ref, sigma);

    let disc_shapes: Vec<usize> = model.disc.param_refs().iter().map(|v| v.len()).collect();
    let mut opt_disc = RmsProp::new(cfg.lr, &disc_shapes);
    let tgt_shapes: Vec<usize> = {
        let t = model.target.as_ref().unwrap();
        t.enc
            .param_refs()
            .iter()
            .chain(t.dec.param_refs().iter())
            .map(|v| v.len())
            .collect()
    };
    let mut opt_tgt = RmsProp::new(cfg.lr, &tgt_shapes);
    let mut sampler = rng_stream(cfg.seed, STREAM_SAMPLER);

    let n_src = source_pairs.len();
    let mut best: Option<(f64, Model, usize)> = None;
    let mut history: Vec<AdaptEpochLog> = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..tgt_t.len()).collect();
        order.shuffle(&mut sampler);
        let mut ep_disc = 0.0;
        let mut ep_gen_adv = 0.0;
        let mut ep_recon = 0.0;
        let mut ep_mmd = 0.0;
        let mut steps = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len() as f64;
            // source draws: anchor i plus a distinct positive j per element
            let src_idx: Vec<(usize, usize)> = chunk
                .iter()
                .map(|_| {
                    let i = sampler.gen_range(0..n_src);
                    let j = loop {
                        let j = sampler.gen_range(0..n_src);
                        if j != i {
                            break j;
                        }
                    };
                    (i, j)
                })
                .collect();

            let z_si: Vec<Vec<f64>> =
                src_idx.iter().map(|&(i, _)| model.enc.encode(&src_stat_t[i])).collect();
            let z_sj: Vec<Vec<f64>> =
                src_idx.iter().map(|&(_, j)| model.enc.encode(&src_stat_t[j])).collect();
            let z_di: Vec<Vec<f64>> =
                src_idx.iter().map(|&(i, _)| model.enc.encode(&src_dyn_t[i])).collect();

            // discriminator phase
            {
                #[cfg(debug_assertions)]
                let tgt_before = model.target_hash();
                let tgt_enc = &model.target.as_ref().unwrap().enc;
                let z_kl: Vec<Vec<f64>> =
                    chunk.iter().map(|&l| tgt_enc.encode(&tgt_t[l])).collect();
                let disc = &model.disc;
                let mut grads = Grads::zeros_like(&disc.param_refs());
                let mut sum = 0.0;
                for k in 0..chunk.len() {
                    let (sr, cr) = disc.score_pair(&z_sj[k], &z_si[k]);
                    let (sf, cf) = disc.score_pair(&z_di[k], &z_si[k]);
                    let (st, ct) = disc.score_pair(&z_kl[k], &z_sj[k]);
                    sum += loss::disc_total_adapt(sr, sf, st);
                    disc.backward(&cr, loss::lsgan_grad(sr, 1.0) / n, &mut grads);
                    disc.backward(&cf, loss::lsgan_grad(sf, 0.0) / n, &mut grads);
                    disc.backward(&ct, loss::lsgan_grad(st, 0.0) / n, &mut grads);
                }
                ep_disc += sum / n;
                let grefs: Vec<&Vec<f64>> = grads.0.iter().collect();
                opt_disc.step(model.disc.param_slots(), &grefs);
                #[cfg(debug_assertions)]
                debug_assert_eq!(tgt_before, model.target_hash());
            }

            // target generator phase
            {
                #[cfg(debug_assertions)]
                let disc_before = model.disc_hash();
                let tgt = model.target.as_ref().unwrap();
                let mut enc_grads = Grads::zeros_like(&tgt.enc.param_refs());
                let mut dec_grads = Grads::zeros_like(&tgt.dec.param_refs());
                let mut disc_sink = Grads::zeros_like(&model.disc.param_refs());

                let mut z_kl = Vec::with_capacity(chunk.len());
                let mut caches = Vec::with_capacity(chunk.len());
                let mut dec_caches = Vec::with_capacity(chunk.len());
                let mut dpreds = Vec::with_capacity(chunk.len());
                for &l in chunk {
                    let (z, c) = tgt.enc.forward(&tgt_t[l]);
                    let (out, dc) = tgt.dec.forward(&z);
                    let (rv, mut dpred) =
                        loss::recon_loss_grad(&out, &target_train[l], r_max);
                    ep_recon += rv / n;
                    for g in dpred.data.iter_mut() {
                        *g /= n;
                    }
                    z_kl.push(z);
                    caches.push(c);
                    dec_caches.push(dc);
                    dpreds.push(dpred);
                }
                let sigma_b = loss::median_sigma(&z_kl, &z_sj);
                let (mval, mgrads) = loss::mmd_gaussian_grad(&z_kl, &z_sj, sigma_b);
                ep_mmd += mval;
                for k in 0..chunk.len() {
                    let (sf, cf) = model.disc.score_pair(&z_kl[k], &z_sj[k]);
                    ep_gen_adv += loss::lsgan_term(sf, 1.0) / n;
                    let mut dz = tgt.dec.backward(&dec_caches[k], &dpreds[k], &mut dec_grads);
                    let gin =
                        model
                            .disc
                            .backward(&cf, loss::lsgan_grad(sf, 1.0) / n, &mut disc_sink);
                    for ((d, g), m) in dz
                        .iter_mut()
                        .zip(gin.iter().take(mcfg.latent))
                        .zip(mgrads[k].iter())
                    {
                        *d += g + cfg.w_mmd * m;
                    }
                    tgt.enc.backward(&caches[k], &dz, &mut enc_grads);
                }
                let grefs: Vec<&Vec<f64>> =
                    enc_grads.0.iter().chain(dec_grads.0.iter()).collect();
                let t = model.target.as_mut().unwrap();
                let mut slots = t.enc.param_slots();
                slots.extend(t.dec.param_slots());
                opt_tgt.step(slots, &grefs);
                model.step += 1;
                #[cfg(debug_assertions)]
                debug_assert_eq!(disc_before, model.disc_hash());
            }
            steps += 1.0;
        }
        #[cfg(debug_assertions)]
        debug_assert_eq!(src_hash, model.gen_hash(), "source generator must stay frozen");

        let val_lat = tgt_val_latents(&model);
        let val_mmd = loss::mmd_gaussian(&val_lat, &src_ref, sigma);
        let val_self_recon = val_imgs
            .iter()
            .map(|img| loss::recon_loss(&model.reconstruct_target(img), img))
            .sum::<f64>()
            / val_imgs.len() as f64;
        let val_obj = val_self_recon + cfg.w_mmd * val_mmd;
        let log = AdaptEpochLog {
            epoch,
            disc_adv: ep_disc / steps,
            gen_adv: ep_gen_adv / steps,
            self_recon: ep_recon / steps,
            mmd: ep_mmd / steps,
            val_mmd,
            val_self_recon,
            val_obj,
        };
        history.push(log);
        if best.as_ref().is_none_or(|(b, _, _)| val_obj < *b) {
            best = Some((val_obj, model.clone(), epoch));
        }
        if let (Some(p), Some((_, _, be))) = (cfg.patience, best.as_ref()) {
            if epoch - be >= p {
                break;
            }
        }
    }

    let (best_model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => (model.clone(), history.len() - 1),
    };
    let mmd_after = history[best_epoch].val_mmd;
    Ok(AdaptReport {
        best: best_model,
        last: model,
        history,
        best_epoch,
        mmd_before,
        mmd_after,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::SensorConfig;
    use crate::world::{gen_dataset, WorldGenSpec};
    use approx::assert_abs_diff_eq;

    fn sensor() -> SensorConfig {
        SensorConfig::new(8, 16, -0.45, 0.25, 20.0).unwrap()
    }

    fn tiny_cfg() -> ModelConfig {
        ModelConfig::tiny(20.0)
    }

    fn dataset(n_worlds: usize, per_world: usize, seed: u64) -> Vec<ScanPair> {
        let mut rng = rng_stream(seed, STREAM_WORLDGEN);
        gen_dataset(&WorldGenSpec::default(), &sensor(), n_worlds, per_world, &mut rng)
            .unwrap()
            .into_iter()
            .flatten()
            .collect()
    }

    #[test]
    fn rng_streams_are_deterministic_and_independent() {
        let mut a = rng_stream(7, STREAM_GEN_INIT);
        let mut b = rng_stream(7, STREAM_GEN_INIT);
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        let mut c = rng_stream(7, STREAM_DISC_INIT);
        let mut a2 = rng_stream(7, STREAM_GEN_INIT);
        assert_ne!(a2.gen::<u64>(), c.gen::<u64>());
    }

    #[test]
    fn rmsprop_step_wiring() {
        let mut opt = RmsProp::new(0.1, &[1]);
        let mut p = vec![1.0];
        let g = vec![0.5];
        opt.step(vec![&mut p], &[&g]);
        // c = 0.1 * 0.25, p -= 0.1 * 0.5 / (sqrt(c) + 1e-8)
        let c: f64 = 0.1 * 0.25;
        let expect = 1.0 - 0.1 * 0.5 / (c.sqrt() + 1e-8);
        assert_abs_diff_eq!(p[0], expect, epsilon = 1e-15);
        // second step accumulates the decayed cache
        opt.step(vec![&mut p], &[&g]);
        let c2: f64 = 0.9 * c + 0.1 * 0.25;
        let expect2 = expect - 0.1 * 0.5 / (c2.sqrt() + 1e-8);
        assert_abs_diff_eq!(p[0], expect2, epsilon = 1e-15);
    }

    #[test]
    fn epoch_sampler_covers_each_anchor_once() {
        let mut rng = rng_stream(3, STREAM_SAMPLER);
        let batches = sample_epoch(10, 4, &mut rng);
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[2].len(), 2); // 10 = 4 + 4 + 2
        let mut seen = vec![false; 10];
        for b in &batches {
            for &(i, j) in b {
                assert!(!seen[i], "anchor repeated");
                seen[i] = true;
                assert_ne!(i, j, "positive equals anchor");
            }
        }
        assert!(seen.iter().all(|&s| s));
        // deterministic under the same stream
        let mut rng2 = rng_stream(3, STREAM_SAMPLER);
        assert_eq!(batches, sample_epoch(10, 4, &mut rng2));
    }

    #[test]
    fn phases_touch_only_their_parameters() {
        let pairs = dataset(1, 4, 50);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let model = Model::new(&tiny_cfg(), DiscKind::Couple, cfg.seed).unwrap();
        let mut trainer = Trainer::new(&cfg, model);
        let data = DataCache::new(&pairs, 20.0);
        let batch: Batch = vec![(0, 1), (1, 2), (2, 3), (3, 0)];

        let (g0, d0) = (trainer.model.gen_hash(), trainer.model.disc_hash());
        trainer.disc_phase(&data, &batch);
        assert_eq!(trainer.model.gen_hash(), g0, "disc phase moved the generator");
        assert_ne!(trainer.model.disc_hash(), d0, "disc phase left the discriminator still");
        let d1 = trainer.model.disc_hash();
        trainer.gen_phase(&data, &batch);
        assert_eq!(trainer.model.disc_hash(), d1, "gen phase moved the discriminator");
        assert_ne!(trainer.model.gen_hash(), g0, "gen phase left the generator still");
    }

    #[test]
    fn overfits_one_batch() {
        // reconstruction-only memorization check: the optimizer moves each
        // coordinate at most lr per step, so the budget must cover the
        // pre-activation travel needed to fit the targets
        let pairs = dataset(1, 4, 51);
        let cfg = TrainConfig {
            mode: TrainMode::Ae,
            epochs: 400,
            batch_size: 4,
            lr: 1e-2,
            seed: 2,
            ..TrainConfig::default()
        };
        let report = train(&tiny_cfg(), &cfg, &pairs, &[], |_| {}).unwrap();
        let first = report.history.first().unwrap().recon;
        let last = report.history.last().unwrap().recon;
        assert!(
            last < 0.2 * first,
            "reconstruction did not overfit: first {first}, last {last}"
        );
    }

    #[test]
    fn zero_weight_adversarial_run_matches_plain_autoencoder() {
        let pairs = dataset(2, 3, 52);
        let base = TrainConfig {
            epochs: 3,
            batch_size: 2,
            lr: 1e-3,
            seed: 11,
            ..TrainConfig::default()
        };
        let moves_cfg = TrainConfig {
            mode: TrainMode::Moves,
            weights: LossWeights {
                adv_g: 0.0,
                tri: 0.0,
                ..LossWeights::default()
            },
            ..base.clone()
        };
        let ae_cfg = TrainConfig {
            mode: TrainMode::Ae,
            ..base
        };
        let a = train(&tiny_cfg(), &moves_cfg, &pairs, &[], |_| {}).unwrap();
        let b = train(&tiny_cfg(), &ae_cfg, &pairs, &[], |_| {}).unwrap();
        assert_eq!(
            a.last.gen_hash(),
            b.last.gen_hash(),
            "generator trajectories diverged"
        );
        let ra = a.last.reconstruct(&pairs[0].dynamic_img);
        let rb = b.last.reconstruct(&pairs[0].dynamic_img);
        assert_eq!(ra.ranges(), rb.ranges());
    }

    #[test]
    fn training_is_bitwise_deterministic_in_the_seed() {
        let pairs = dataset(2, 3, 53);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            seed: 21,
            ..TrainConfig::default()
        };
        let a = train(&tiny_cfg(), &cfg, &pairs[..4], &pairs[4..], |_| {}).unwrap();
        let b = train(&tiny_cfg(), &cfg, &pairs[..4], &pairs[4..], |_| {}).unwrap();
        assert_eq!(a.last.gen_hash(), b.last.gen_hash());
        assert_eq!(a.last.disc_hash(), b.last.disc_hash());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x, y);
        }
        let c = train(
            &tiny_cfg(),
            &TrainConfig { seed: 22, ..cfg },
            &pairs[..4],
            &pairs[4..],
            |_| {},
        )
        .unwrap();
        assert_ne!(a.last.gen_hash(), c.last.gen_hash());
    }

    #[test]
    fn all_modes_run_and_validate() {
        let pairs = dataset(2, 3, 54);
        for mode in [TrainMode::Moves, TrainMode::Cod, TrainMode::Vanilla, TrainMode::Ae] {
            let cfg = TrainConfig {
                mode,
                epochs: 2,
                batch_size: 3,
                seed: 5,
                ..TrainConfig::default()
            };
            let report = train(&tiny_cfg(), &cfg, &pairs[..4], &pairs[4..], |_| {}).unwrap();
            assert_eq!(report.history.len(), 2);
            for log in &report.history {
                assert!(log.gen_obj.is_finite());
                assert!(log.disc_obj.is_finite());
                assert!(log.val_chamfer.unwrap().is_finite());
            }
            if mode == TrainMode::Ae {
                assert_eq!(report.history[0].disc_adv, 0.0);
            }
        }
    }

    #[test]
    fn relativistic_flag_changes_the_run_but_stays_finite() {
        let pairs = dataset(1, 4, 55);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            seed: 8,
            ..TrainConfig::default()
        };
        let plain = train(&tiny_cfg(), &cfg, &pairs, &[], |_| {}).unwrap();
        let ra = train(
            &tiny_cfg(),
            &TrainConfig { relativistic: true, ..cfg },
            &pairs,
            &[],
            |_| {},
        )
        .unwrap();
        assert_ne!(plain.last.gen_hash(), ra.last.gen_hash());
        assert!(ra.history.iter().all(|l| l.gen_obj.is_finite()));
    }

    #[test]
    fn config_validation_errors() {
        let pairs = dataset(1, 2, 56);
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert_eq!(
            train(&tiny_cfg(), &cfg, &pairs, &[], |_| {}).unwrap_err(),
            TrainError::BadBatchSize
        );
        let cfg = TrainConfig::default();
        assert_eq!(
            train(&tiny_cfg(), &cfg, &pairs[..1], &[], |_| {}).unwrap_err(),
            TrainError::DatasetTooSmall(1)
        );
        let bad_model = ModelConfig { height: 16, ..tiny_cfg() };
        assert!(matches!(
            train(&bad_model, &cfg, &pairs, &[], |_| {}).unwrap_err(),
            TrainError::ShapeMismatch(8, 16, 16, 16)
        ));
    }

    #[test]
    fn adaptation_reduces_latent_discrepancy() {
        let src_pairs = dataset(2, 6, 57);
        // target domain: noticeably smaller rooms
        let tgt_spec = WorldGenSpec {
            room_half: [2.5, 3.2],
            n_static: [1, 2],
            n_actors: [1, 2],
            ..WorldGenSpec::default()
        };
        let mut rng = rng_stream(58, STREAM_WORLDGEN);
        let tgt: Vec<RangeImage> = gen_dataset(&tgt_spec, &sensor(), 3, 6, &mut rng)
            .unwrap()
            .into_iter()
            .flatten()
            .map(|p| p.dynamic_img)
            .collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 31,
            ..TrainConfig::default()
        };
        let base = train(&tiny_cfg(), &cfg, &src_pairs, &[], |_| {}).unwrap().last;
        let acfg = AdaptConfig {
            epochs: 12,
            batch_size: 6,
            lr: 1e-3,
            w_mmd: 1.0,
            seed: 31,
            ..AdaptConfig::default()
        };
        let report = adapt(&acfg, &base, &src_pairs, &tgt[..12], &tgt[12..]).unwrap();
        assert!(
            report.mmd_after < report.mmd_before,
            "discrepancy did not shrink: before {} after {}",
            report.mmd_before,
            report.mmd_after
        );
        assert!(report.best.target.is_some());
        // determinism of the adaptation stage
        let report2 = adapt(&acfg, &base, &src_pairs, &tgt[..12], &tgt[12..]).unwrap();
        assert_eq!(report.best.gen_hash(), report2.best.gen_hash());
        assert_eq!(
            report.best.target_hash(),
            report2.best.target_hash()
        );
    }
}
