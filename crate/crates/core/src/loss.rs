//! Training objectives: least-squares adversarial terms on latent couples,
//! the hard-negative triplet loss, masked range reconstruction error, and
//! kernel maximum mean discrepancy for domain alignment.
//!
//! Every differentiable term has an explicit gradient companion that is
//! validated against central finite differences in the tests.

use crate::math;
use crate::model::Tensor3;
use crate::sensor::RangeImage;
use alloc::vec;
use alloc::vec::Vec;

/// Scalar weights applied to the generator-side objective terms and the
/// triplet margin. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct LossWeights {
    /// Weight of the adversarial term in the generator objective.
    pub adv_g: f64,
    /// Weight of the reconstruction term.
    pub recon: f64,
    /// Weight of the triplet term (applied to the encoder update).
    pub tri: f64,
    /// Weight of the discrepancy term during domain adaptation.
    pub mmd: f64,
    /// Triplet margin alpha.
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adv_g: 1.0,
            recon: 1.0,
            tri: 1.0,
            mmd: 1.0,
            margin: 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// least-squares adversarial terms

/// Least-squares penalty (score - target)^2.
pub fn lsgan_term(score: f64, target: f64) -> f64 {
    let d = score - target;
    d * d
}

/// d/dscore of `lsgan_term`.
pub fn lsgan_grad(score: f64, target: f64) -> f64 {
    2.0 * (score - target)
}

/// Discriminator adversarial loss: real couple toward 1, fake couple toward 0.
pub fn disc_adversarial(d_real: f64, d_fake: f64) -> f64 {
    lsgan_term(d_real, 1.0) + lsgan_term(d_fake, 0.0)
}

/// Full discriminator objective including the (weighted) triplet value.
/// The triplet term carries no gradient for the discriminator parameters;
/// it is part of the reported objective.
pub fn disc_total(d_real: f64, d_fake: f64, triplet: f64, w_tri: f64) -> f64 {
    disc_adversarial(d_real, d_fake) + w_tri * triplet
}

/// Generator objective: fool the discriminator toward 1 plus reconstruction.
pub fn gen_total(d_fake: f64, recon: f64, w_adv: f64, w_recon: f64) -> f64 {
    w_adv * lsgan_term(d_fake, 1.0) + w_recon * recon
}

/// Discriminator objective during adaptation: the source couple terms plus
/// the target couple scored as fake.
pub fn disc_total_adapt(d_real: f64, d_fake_src: f64, d_fake_tgt: f64) -> f64 {
    disc_adversarial(d_real, d_fake_src) + lsgan_term(d_fake_tgt, 0.0)
}

/// Target-generator objective during adaptation: adversarial term,
/// self-reconstruction, and the latent discrepancy.
pub fn gen_total_adapt(d_fake_tgt: f64, self_recon: f64, mmd: f64, w_mmd: f64) -> f64 {
    lsgan_term(d_fake_tgt, 1.0) + self_recon + w_mmd * mmd
}

// ---------------------------------------------------------------------------
// relativistic-average variant (optional, off by default)

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Relativistic-average least-squares discriminator loss over batch scores.
/// Returns (loss, d/d real score, d/d fake score).
pub fn ra_disc_loss(real: &[f64], fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    debug_assert!(!real.is_empty() && !fake.is_empty());
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let (mr, mf) = (mean(real), mean(fake));
    let mut loss = 0.0;
    let mut gr = vec![0.0; real.len()];
    let mut gf = vec![0.0; fake.len()];
    let mut sum_r = 0.0;
    for (i, &s) in real.iter().enumerate() {
        let d = s - mf - 1.0;
        loss += d * d / nr;
        gr[i] += 2.0 * d / nr;
        sum_r += d;
    }
    let mut sum_f = 0.0;
    for (j, &s) in fake.iter().enumerate() {
        let d = s - mr + 1.0;
        loss += d * d / nf;
        gf[j] += 2.0 * d / nf;
        sum_f += d;
    }
    // mean coupling: m_f depends on every fake score, m_r on every real score
    for g in gf.iter_mut() {
        *g -= 2.0 * sum_r / (nr * nf);
    }
    for g in gr.iter_mut() {
        *g -= 2.0 * sum_f / (nf * nr);
    }
    (loss, gr, gf)
}

/// Relativistic-average least-squares generator loss. Real scores are
/// treated as constants (their latents are detached in the generator phase);
/// gradients are returned for the fake scores only.
pub fn ra_gen_loss(fake: &[f64], real: &[f64]) -> (f64, Vec<f64>) {
    debug_assert!(!real.is_empty() && !fake.is_empty());
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let (mr, mf) = (mean(real), mean(fake));
    let mut loss = 0.0;
    let mut gf = vec![0.0; fake.len()];
    for (j, &s) in fake.iter().enumerate() {
        let d = s - mr - 1.0;
        loss += d * d / nf;
        gf[j] += 2.0 * d / nf;
    }
    let mut sum_r = 0.0;
    for &s in real {
        let d = s - mf + 1.0;
        loss += d * d / nr;
        sum_r += d;
    }
    for g in gf.iter_mut() {
        *g -= 2.0 * sum_r / (nr * nf);
    }
    (loss, gf)
}

// ---------------------------------------------------------------------------
// triplet

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Hard-negative triplet hinge: max(0, d(anchor, positive) - d(negative, anchor) + margin).
pub fn triplet(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> f64 {
    (euclid(anchor, positive) - euclid(negative, anchor) + margin).max(0.0)
}

/// Triplet value plus gradients w.r.t. anchor, positive, and negative.
/// Zero gradients when the hinge is inactive or a distance degenerates.
pub fn triplet_grad(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = anchor.len();
    let dap = euclid(anchor, positive);
    let dna = euclid(negative, anchor);
    let loss = (dap - dna + margin).max(0.0);
    let mut ga = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut gn = vec![0.0; n];
    if loss > 0.0 {
        if dap > 1e-12 {
            for i in 0..n {
                let u = (anchor[i] - positive[i]) / dap;
                ga[i] += u;
                gp[i] -= u;
            }
        }
        if dna > 1e-12 {
            for i in 0..n {
                let u = (negative[i] - anchor[i]) / dna;
                gn[i] -= u;
                ga[i] += u;
            }
        }
    }
    (loss, ga, gp, gn)
}

// ---------------------------------------------------------------------------
// reconstruction

/// Mean absolute range error over cells valid in either image. Cells valid
/// in exactly one image contribute the full range scale `r_max` as a fixed
/// penalty. Zero iff the images agree on the union of valid cells.
pub fn recon_loss(pred: &RangeImage, target: &RangeImage) -> f64 {
    debug_assert_eq!(pred.config(), target.config());
    let r_max = pred.config().r_max;
    let (h, w) = (pred.height(), pred.width());
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (pv, tv) = (pred.is_valid(y, x), target.is_valid(y, x));
            match (pv, tv) {
                (true, true) => {
                    sum += (pred.get(y, x) as f64 - target.get(y, x) as f64).abs();
                    n += 1;
                }
                (true, false) | (false, true) => {
                    sum += r_max;
                    n += 1;
                }
                (false, false) => {}
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Reconstruction loss for a decoded (all-valid) range tensor against a
/// target image, with the gradient w.r.t. the predicted ranges. Target-invalid
/// cells contribute the constant `r_max` penalty and no gradient.
pub fn recon_loss_grad(pred: &Tensor3, target: &RangeImage, r_max: f64) -> (f64, Tensor3) {
    debug_assert_eq!(pred.c, 1);
    debug_assert_eq!((pred.h, pred.w), (target.height(), target.width()));
    let n = (pred.h * pred.w) as f64;
    let mut sum = 0.0;
    let mut grad = Tensor3::zeros(1, pred.h, pred.w);
    for y in 0..pred.h {
        for x in 0..pred.w {
            let p = pred.at(0, y, x);
            if target.is_valid(y, x) {
                let d = p - target.get(y, x) as f64;
                sum += d.abs();
                let g = if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                };
                grad.set(0, y, x, g);
            } else {
                sum += r_max;
            }
        }
    }
    (sum / n, grad)
}

// ---------------------------------------------------------------------------
// maximum mean discrepancy

/// Median pairwise Euclidean distance over the pooled samples; falls back to
/// 1 when fewer than two points or a zero median would degenerate the kernel.
pub fn median_sigma(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::new();
    let all: Vec<&Vec<f64>> = a.iter().chain(b.iter()).collect();
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            dists.push(euclid(all[i], all[j]));
        }
    }
    match math::median(&dists) {
        Some(m) if m > 1e-12 => m,
        _ => 1.0,
    }
}

fn gauss_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    math::exp(-d2 / (2.0 * sigma * sigma))
}

/// Squared MMD with a Gaussian kernel, biased V-statistic form
/// (diagonal terms included).
pub fn mmd_gaussian(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> f64 {
    debug_assert!(!a.is_empty() && !b.is_empty());
    let (m, n) = (a.len() as f64, b.len() as f64);
    let mut kaa = 0.0;
    for x in a {
        for y in a {
            kaa += gauss_kernel(x, y, sigma);
        }
    }
    let mut kbb = 0.0;
    for x in b {
        for y in b {
            kbb += gauss_kernel(x, y, sigma);
        }
    }
    let mut kab = 0.0;
    for x in a {
        for y in b {
            kab += gauss_kernel(x, y, sigma);
        }
    }
    kaa / (m * m) + kbb / (n * n) - 2.0 * kab / (m * n)
}

/// Squared Gaussian MMD with gradients w.r.t. the rows of `a` only
/// (`b` and the bandwidth are treated as constants).
pub fn mmd_gaussian_grad(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    sigma: f64,
) -> (f64, Vec<Vec<f64>>) {
    let value = mmd_gaussian(a, b, sigma);
    let (m, n) = (a.len() as f64, b.len() as f64);
    let dim = a[0].len();
    let s2 = sigma * sigma;
    let mut grads = vec![vec![0.0; dim]; a.len()];
    for (i, x) in a.iter().enumerate() {
        // d/dx_i of sum_{p,q} k(a_p, a_q) / m^2: row i appears as both
        // arguments, giving a factor 2 by symmetry.
        for y in a.iter() {
            let k = gauss_kernel(x, y, sigma);
            for d in 0..dim {
                grads[i][d] += 2.0 * k * -(x[d] - y[d]) / s2 / (m * m);
            }
        }
        for y in b.iter() {
            let k = gauss_kernel(x, y, sigma);
            for d in 0..dim {
                grads[i][d] -= 2.0 * k * -(x[d] - y[d]) / s2 / (m * n);
            }
        }
    }
    (value, grads)
}

/// Squared MMD with a linear kernel: the squared distance of the sample
/// means. Used as an independent cross-check of the kernel estimator.
pub fn mmd_linear(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    debug_assert!(!a.is_empty() && !b.is_empty());
    let dim = a[0].len();
    let mut diff = vec![0.0; dim];
    for x in a {
        for d in 0..dim {
            diff[d] += x[d] / a.len() as f64;
        }
    }
    for y in b {
        for d in 0..dim {
            diff[d] -= y[d] / b.len() as f64;
        }
    }
    diff.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{SensorConfig, INVALID_RANGE};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    #[test]
    fn triplet_hand_values() {
        // d(a,p) = 3, d(n,a) = 1, margin 0.5 -> 3 - 1 + 0.5 = 2.5
        let a = [0.0, 0.0];
        let p = [3.0, 0.0];
        let n = [0.0, 1.0];
        assert_abs_diff_eq!(triplet(&a, &p, &n, 0.5), 2.5, epsilon = TOL);
        // inactive hinge: d(a,p) = 1, d(n,a) = 3, margin 0.5 -> max(0, -1.5)
        assert_abs_diff_eq!(triplet(&n, &a, &p, 0.5), 0.0, epsilon = TOL);
        let (l, ga, gp, gn) = triplet_grad(&n, &a, &p, 0.5);
        assert_eq!(l, 0.0);
        assert!(ga.iter().chain(&gp).chain(&gn).all(|&g| g == 0.0));
    }

    #[test]
    fn triplet_grad_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..8 {
            let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (l, ga, gp, gn) = triplet_grad(&a, &p, &n, 2.0); // large margin: active
            assert!(l > 0.0);
            let h = 1e-6;
            for i in 0..5 {
                for (vec_idx, (v, g)) in [(a.clone(), &ga), (p.clone(), &gp), (n.clone(), &gn)]
                    .into_iter()
                    .enumerate()
                {
                    let mut vp = v.clone();
                    vp[i] += h;
                    let mut vm = v.clone();
                    vm[i] -= h;
                    let (fp, fm) = match vec_idx {
                        0 => (triplet(&vp, &p, &n, 2.0), triplet(&vm, &p, &n, 2.0)),
                        1 => (triplet(&a, &vp, &n, 2.0), triplet(&a, &vm, &n, 2.0)),
                        _ => (triplet(&a, &p, &vp, 2.0), triplet(&a, &p, &vm, 2.0)),
                    };
                    let fd = (fp - fm) / (2.0 * h);
                    assert_abs_diff_eq!(g[i], fd, epsilon = 1e-4);
                }
            }
        }
    }

    #[test]
    fn adversarial_hand_values() {
        // both scores at 0.5
        assert_abs_diff_eq!(disc_adversarial(0.5, 0.5), 0.5, epsilon = TOL);
        // maximally wrong: real scored 0, fake scored 1
        assert_abs_diff_eq!(disc_adversarial(0.0, 1.0), 2.0, epsilon = TOL);
        // full objective with the triplet value folded in
        assert_abs_diff_eq!(disc_total(0.5, 0.5, 2.5, 1.0), 3.0, epsilon = TOL);
        // generator: fake at 0.5 toward 1 plus recon 0.3
        assert_abs_diff_eq!(gen_total(0.5, 0.3, 1.0, 1.0), 0.55, epsilon = TOL);
        // generator maximally rejected with perfect recon
        assert_abs_diff_eq!(gen_total(0.0, 0.0, 1.0, 1.0), 1.0, epsilon = TOL);
        // adaptation composites
        assert_abs_diff_eq!(disc_total_adapt(0.5, 0.5, 0.5), 0.75, epsilon = TOL);
        assert_abs_diff_eq!(gen_total_adapt(0.5, 0.3, 0.3, 1.0), 0.85, epsilon = TOL);
        assert_abs_diff_eq!(lsgan_grad(0.5, 1.0), -1.0, epsilon = TOL);
    }

    #[test]
    fn relativistic_terms_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let real: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fake: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (_, gr, gf) = ra_disc_loss(&real, &fake);
        let h = 1e-6;
        for i in 0..real.len() {
            let mut rp = real.clone();
            rp[i] += h;
            let mut rm = real.clone();
            rm[i] -= h;
            let fd = (ra_disc_loss(&rp, &fake).0 - ra_disc_loss(&rm, &fake).0) / (2.0 * h);
            assert_abs_diff_eq!(gr[i], fd, epsilon = 1e-5);
        }
        for j in 0..fake.len() {
            let mut fp = fake.clone();
            fp[j] += h;
            let mut fm = fake.clone();
            fm[j] -= h;
            let fd = (ra_disc_loss(&real, &fp).0 - ra_disc_loss(&real, &fm).0) / (2.0 * h);
            assert_abs_diff_eq!(gf[j], fd, epsilon = 1e-5);
        }
        let (_, gg) = ra_gen_loss(&fake, &real);
        for j in 0..fake.len() {
            let mut fp = fake.clone();
            fp[j] += h;
            let mut fm = fake.clone();
            fm[j] -= h;
            let fd = (ra_gen_loss(&fp, &real).0 - ra_gen_loss(&fm, &real).0) / (2.0 * h);
            assert_abs_diff_eq!(gg[j], fd, epsilon = 1e-5);
        }
    }

    fn img(cfg: SensorConfig, vals: &[f32]) -> RangeImage {
        RangeImage::from_ranges(cfg, vals.to_vec()).unwrap()
    }

    #[test]
    fn recon_hand_values() {
        let c2 = SensorConfig::new(1, 2, -0.1, 0.1, 2.0).unwrap();
        // identical images, one invalid cell each -> 0
        let a = img(c2, &[1.0, INVALID_RANGE]);
        assert_abs_diff_eq!(recon_loss(&a, &a), 0.0, epsilon = TOL);
        // both valid everywhere, |diff| = 0.5 in both cells -> 0.5
        let b = img(c2, &[1.0, 1.5]);
        let c = img(c2, &[1.5, 2.0]);
        assert_abs_diff_eq!(recon_loss(&b, &c), 0.5, epsilon = TOL);
        // validity mismatch: one agreeing cell, one mismatch at r_max = 1
        let c1 = SensorConfig::new(1, 2, -0.1, 0.1, 1.0).unwrap();
        let d = img(c1, &[0.5, INVALID_RANGE]);
        let e = img(c1, &[0.5, 0.7]);
        assert_abs_diff_eq!(recon_loss(&d, &e), 0.5, epsilon = TOL);
        assert_abs_diff_eq!(recon_loss(&e, &d), 0.5, epsilon = TOL);
        // empty union
        let f = img(c1, &[INVALID_RANGE, INVALID_RANGE]);
        assert_abs_diff_eq!(recon_loss(&f, &f), 0.0, epsilon = TOL);
    }

    #[test]
    fn recon_grad_matches_fd_and_image_form() {
        let cfg = SensorConfig::new(2, 3, -0.2, 0.2, 10.0).unwrap();
        let target = img(
            cfg,
            &[3.0, INVALID_RANGE, 5.0, 1.0, 9.0, INVALID_RANGE],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pred = Tensor3::zeros(1, 2, 3);
        for v in pred.data.iter_mut() {
            *v = rng.gen_range(0.5..9.5);
        }
        let (val, grad) = recon_loss_grad(&pred, &target, cfg.r_max);
        // agrees with the image-space form once quantized to f32 storage
        let pred_img = crate::model::tensor_to_image(&pred, &cfg);
        assert_abs_diff_eq!(recon_loss(&pred_img, &target), val, epsilon = 1e-6);
        let h = 1e-6;
        for i in 0..pred.data.len() {
            let mut pp = pred.clone();
            pp.data[i] += h;
            let mut pm = pred.clone();
            pm.data[i] -= h;
            let fp = recon_loss_grad(&pp, &target, cfg.r_max).0;
            let fm = recon_loss_grad(&pm, &target, cfg.r_max).0;
            assert_abs_diff_eq!(grad.data[i], (fp - fm) / (2.0 * h), epsilon = 1e-4);
        }
    }

    #[test]
    fn mmd_singleton_closed_form() {
        // MMD^2({x},{y}) = 2 - 2 exp(-||x-y||^2 / (2 sigma^2)); with
        // sigma = ||x-y|| the exponent is -1/2.
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![3.0, 4.0]];
        let v = mmd_gaussian(&a, &b, 5.0);
        assert_abs_diff_eq!(v, 0.7869386805747332, epsilon = TOL);
        // identical sets -> 0; symmetry; nonnegativity
        assert_abs_diff_eq!(mmd_gaussian(&a, &a, 1.3), 0.0, epsilon = TOL);
        assert_abs_diff_eq!(
            mmd_gaussian(&a, &b, 2.0),
            mmd_gaussian(&b, &a, 2.0),
            epsilon = TOL
        );
    }

    #[test]
    fn mmd_linear_is_mean_difference() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]]; // mean (2, 3)
        let b = vec![vec![0.0, 0.0], vec![2.0, 2.0]]; // mean (1, 1)
        assert_abs_diff_eq!(mmd_linear(&a, &b), 1.0 + 4.0, epsilon = TOL);
        assert_abs_diff_eq!(mmd_linear(&a, &a), 0.0, epsilon = TOL);
    }

    #[test]
    fn mmd_gaussian_grad_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..2.0)).collect())
            .collect();
        let sigma = median_sigma(&a, &b);
        assert!(sigma > 0.1);
        let (_, grads) = mmd_gaussian_grad(&a, &b, sigma);
        let h = 1e-6;
        for i in 0..a.len() {
            for d in 0..4 {
                let mut ap = a.clone();
                ap[i][d] += h;
                let mut am = a.clone();
                am[i][d] -= h;
                let fd =
                    (mmd_gaussian(&ap, &b, sigma) - mmd_gaussian(&am, &b, sigma)) / (2.0 * h);
                assert_abs_diff_eq!(grads[i][d], fd, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn median_sigma_fallbacks() {
        let a = vec![vec![1.0, 1.0]];
        assert_eq!(median_sigma(&a, &a), 1.0); // zero distances
        let b: Vec<Vec<f64>> = vec![];
        assert_eq!(median_sigma(&a, &b), 1.0); // single point, no pairs
        let c = vec![vec![4.0, 5.0]];
        assert_abs_diff_eq!(median_sigma(&a, &c), 5.0, epsilon = TOL);
    }
}
