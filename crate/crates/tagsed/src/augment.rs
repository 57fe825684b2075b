//! Feature-domain data augmentation: time masking, frame shifting,
//! mixup, Gaussian noise, and filter augmentation.
//!
//! All transforms are pure given an explicit RNG stream and never change
//! tensor shapes. Which transforms a stage uses, and the 0.5 per-batch
//! application probability, are handled by the training driver.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::error::Result;
use crate::numerics::{Real, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AugmentConfig {
    /// Max width of the zeroed time span, in feature frames.
    pub time_mask_max_frames: usize,
    /// Max absolute shift, in feature frames.
    pub frame_shift_max: usize,
    pub mixup_alpha: Real,
    pub noise_sigma: Real,
    /// (min, max) number of frequency bands.
    pub filter_aug_bands: (usize, usize),
    /// (min, max) per-band gain in dB.
    pub filter_aug_db: (Real, Real),
    pub enable_time_mask: bool,
    pub enable_frame_shift: bool,
    pub enable_mixup: bool,
    pub enable_noise: bool,
    pub enable_filter_aug: bool,
    /// Probability of applying each enabled transform to a batch.
    pub apply_prob: Real,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            time_mask_max_frames: 62,
            frame_shift_max: 16,
            mixup_alpha: 0.2,
            noise_sigma: 0.05,
            filter_aug_bands: (2, 5),
            filter_aug_db: (-6.0, 6.0),
            enable_time_mask: true,
            enable_frame_shift: true,
            enable_mixup: true,
            enable_noise: true,
            enable_filter_aug: true,
            apply_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// Everything off; every transform becomes the identity.
    pub fn disabled() -> Self {
        AugmentConfig {
            enable_time_mask: false,
            enable_frame_shift: false,
            enable_mixup: false,
            enable_noise: false,
            enable_filter_aug: false,
            ..AugmentConfig::default()
        }
    }
}

/// Zero one contiguous span of random width in [0, max] frames.
pub fn time_mask(x: &Tensor, rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Tensor {
    let t = x.shape()[0];
    let max = cfg.time_mask_max_frames.min(t);
    let width = rng.random_range(0..=max);
    if width == 0 {
        return x.clone();
    }
    let start = rng.random_range(0..=t - width);
    mask_rows(x, start, width)
}

/// Zero rows [start, start+width).
pub fn mask_rows(x: &Tensor, start: usize, width: usize) -> Tensor {
    let m = x.shape()[1];
    let mut out = x.clone();
    for row in start..start + width {
        for v in &mut out.data_mut()[row * m..(row + 1) * m] {
            *v = 0.0;
        }
    }
    out
}

/// Roll rows by `shift` (positive moves content toward later frames);
/// vacated rows are zero-filled, rows pushed past the end are dropped.
pub fn frame_shift_by(x: &Tensor, shift: isize) -> Tensor {
    let (t, m) = (x.shape()[0] as isize, x.shape()[1]);
    let mut out = Tensor::zeros(x.shape());
    for row in 0..t {
        let src = row - shift;
        if src >= 0 && src < t {
            let dst_base = row as usize * m;
            let src_base = src as usize * m;
            out.data_mut()[dst_base..dst_base + m]
                .copy_from_slice(&x.data()[src_base..src_base + m]);
        }
    }
    out
}

/// Shift features and (when present) frame targets by the same amount of
/// time. Targets live on a grid `downsample` times coarser than the
/// features, so the drawn shift is a multiple of `downsample` feature
/// frames. Clip-level labels are unaffected by construction.
pub fn frame_shift(
    x: &Tensor,
    targets: Option<&Tensor>,
    downsample: usize,
    rng: &mut ChaCha8Rng,
    cfg: &AugmentConfig,
) -> (Tensor, Option<Tensor>) {
    match targets {
        None => {
            let max = cfg.frame_shift_max as i64;
            let shift = rng.random_range(-max..=max) as isize;
            (frame_shift_by(x, shift), None)
        }
        Some(tg) => {
            let max = (cfg.frame_shift_max / downsample.max(1)) as i64;
            let coarse = rng.random_range(-max..=max) as isize;
            (
                frame_shift_by(x, coarse * downsample as isize),
                Some(frame_shift_by(tg, coarse)),
            )
        }
    }
}

/// Draw the mixup coefficient from Beta(alpha, alpha).
pub fn mixup_lambda(rng: &mut ChaCha8Rng, alpha: Real) -> Real {
    let beta = Beta::new(alpha as f64, alpha as f64).expect("mixup alpha must be positive");
    beta.sample(rng) as Real
}

/// lambda * a + (1 - lambda) * b for features and labels alike.
pub fn mixup_with(
    a: (&Tensor, &Tensor),
    b: (&Tensor, &Tensor),
    lambda: Real,
) -> Result<(Tensor, Tensor)> {
    let feat = a.0.zip_map(b.0, "mixup", |x, y| lambda * x + (1.0 - lambda) * y)?;
    let labels = a.1.zip_map(b.1, "mixup", |x, y| lambda * x + (1.0 - lambda) * y)?;
    Ok((feat, labels))
}

pub fn mixup(
    a: (&Tensor, &Tensor),
    b: (&Tensor, &Tensor),
    rng: &mut ChaCha8Rng,
    cfg: &AugmentConfig,
) -> Result<(Tensor, Tensor)> {
    mixup_with(a, b, mixup_lambda(rng, cfg.mixup_alpha))
}

/// Add i.i.d. N(0, sigma^2) to every cell.
pub fn add_gaussian_noise(x: &Tensor, rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Tensor {
    if cfg.noise_sigma <= 0.0 {
        return x.clone();
    }
    let normal = Normal::new(0.0f64, cfg.noise_sigma as f64).expect("sigma validated above");
    x.map(|v| v + normal.sample(rng) as Real)
}

/// Split the mel axis into n random bands and add one random dB gain per
/// band, applied additively in the natural-log domain.
pub fn filter_augment(x: &Tensor, rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Tensor {
    let m = x.shape()[1];
    let (lo, hi) = cfg.filter_aug_bands;
    let n_bands = rng.random_range(lo.max(1)..=hi.max(1)).min(m);
    // n_bands - 1 distinct interior boundaries, sorted
    let mut boundaries: Vec<usize> = Vec::new();
    while boundaries.len() < n_bands - 1 {
        let b = rng.random_range(1..m);
        if !boundaries.contains(&b) {
            boundaries.push(b);
        }
    }
    boundaries.sort_unstable();
    boundaries.push(m);
    let (db_lo, db_hi) = cfg.filter_aug_db;
    let gains: Vec<Real> = (0..n_bands)
        .map(|_| rng.random_range(db_lo..=db_hi) * (10.0 as Real).ln() / 20.0)
        .collect();
    let mut out = x.clone();
    let t = x.shape()[0];
    for row in 0..t {
        let mut band = 0;
        for col in 0..m {
            if col >= boundaries[band] {
                band += 1;
            }
            out.data_mut()[row * m + col] += gains[band];
        }
    }
    out
}

/// Gains applied to known bands; the seeded-replay and arithmetic tests
/// drive this directly.
pub fn filter_augment_with(x: &Tensor, boundaries: &[usize], gains_db: &[Real]) -> Tensor {
    assert_eq!(boundaries.len(), gains_db.len(), "one gain per band");
    let m = x.shape()[1];
    assert_eq!(*boundaries.last().unwrap(), m, "last boundary must close the mel axis");
    let t = x.shape()[0];
    let ln10_over20 = (10.0 as Real).ln() / 20.0;
    let mut out = x.clone();
    for row in 0..t {
        let mut band = 0;
        for col in 0..m {
            if col >= boundaries[band] {
                band += 1;
            }
            out.data_mut()[row * m + col] += gains_db[band] * ln10_over20;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn feat(t: usize, m: usize) -> Tensor {
        Tensor::from_fn(&[t, m], |i| (i as Real * 0.37).sin())
    }

    #[test]
    fn zero_width_mask_is_identity() {
        let x = feat(20, 8);
        let cfg = AugmentConfig {
            time_mask_max_frames: 0,
            ..AugmentConfig::default()
        };
        assert_eq!(time_mask(&x, &mut rng(1), &cfg), x);
    }

    #[test]
    fn full_width_mask_zeroes_everything() {
        let x = feat(6, 4);
        assert!(mask_rows(&x, 0, 6).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_rows_zero_rest_untouched() {
        let x = feat(40, 8);
        let y = mask_rows(&x, 10, 10);
        for row in 0..40 {
            for col in 0..8 {
                let v = y.data()[row * 8 + col];
                if (10..20).contains(&row) {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, x.data()[row * 8 + col]);
                }
            }
        }
    }

    #[test]
    fn shift_zero_is_identity_and_roll_moves_rows() {
        let x = feat(12, 3);
        assert_eq!(frame_shift_by(&x, 0), x);
        let y = frame_shift_by(&x, 5);
        for row in 0..12usize {
            for col in 0..3 {
                let got = y.data()[row * 3 + col];
                if row < 5 {
                    assert_eq!(got, 0.0);
                } else {
                    assert_eq!(got, x.data()[(row - 5) * 3 + col]);
                }
            }
        }
        let targets = feat(12, 2);
        let ty = frame_shift_by(&targets, 5);
        assert_eq!(ty.data()[5 * 2], targets.data()[0]);
    }

    #[test]
    fn shift_with_targets_moves_both_grids_consistently() {
        let x = feat(16, 3);
        let tg = feat(4, 2);
        let cfg = AugmentConfig::default();
        let (xs, ts) = frame_shift(&x, Some(&tg), 4, &mut rng(9), &cfg);
        let ts = ts.unwrap();
        assert_eq!(xs.shape(), x.shape());
        assert_eq!(ts.shape(), tg.shape());
    }

    #[test]
    fn mixup_lambda_one_returns_first_sample() {
        let a = (feat(5, 4), Tensor::new(vec![2], vec![1.0, 0.0]).unwrap());
        let b = (feat(5, 4).map(|v| v + 1.0), Tensor::new(vec![2], vec![0.0, 1.0]).unwrap());
        let (f, l) = mixup_with((&a.0, &a.1), (&b.0, &b.1), 1.0).unwrap();
        assert_eq!(f, a.0);
        assert_eq!(l, a.1);
    }

    #[test]
    fn mixup_half_blends_labels() {
        let a = (feat(3, 2), Tensor::new(vec![2], vec![1.0, 0.0]).unwrap());
        let b = (feat(3, 2), Tensor::new(vec![2], vec![0.0, 1.0]).unwrap());
        let (_, l) = mixup_with((&a.0, &a.1), (&b.0, &b.1), 0.5).unwrap();
        assert_eq!(l.data(), &[0.5, 0.5]);
    }

    #[test]
    fn mixup_preserves_label_mass_and_range() {
        let mut r = rng(5);
        let a_l = Tensor::new(vec![3], vec![1.0, 0.0, 1.0]).unwrap();
        let b_l = Tensor::new(vec![3], vec![0.0, 1.0, 1.0]).unwrap();
        let a = (feat(4, 2), a_l.clone());
        let b = (feat(4, 2), b_l.clone());
        let cfg = AugmentConfig::default();
        for _ in 0..20 {
            let lam = mixup_lambda(&mut r, cfg.mixup_alpha);
            let (_, l) = mixup_with((&a.0, &a.1), (&b.0, &b.1), lam).unwrap();
            assert!(l.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let mass: Real = l.data().iter().sum();
            let want = lam * a_l.data().iter().sum::<Real>() + (1.0 - lam) * b_l.data().iter().sum::<Real>();
            assert!((mass - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mixup_shape_mismatch_is_error() {
        let a = (feat(4, 2), Tensor::zeros(&[2]));
        let b = (feat(5, 2), Tensor::zeros(&[2]));
        assert!(mixup_with((&a.0, &a.1), (&b.0, &b.1), 0.5).is_err());
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let x = feat(10, 10);
        let cfg = AugmentConfig {
            noise_sigma: 0.0,
            ..AugmentConfig::default()
        };
        assert_eq!(add_gaussian_noise(&x, &mut rng(2), &cfg), x);
    }

    #[test]
    fn unit_noise_has_near_zero_mean_over_large_grid() {
        let x = Tensor::zeros(&[626, 128]);
        let cfg = AugmentConfig {
            noise_sigma: 1.0,
            ..AugmentConfig::default()
        };
        let y = add_gaussian_noise(&x, &mut rng(3), &cfg);
        let mean: Real = y.data().iter().sum::<Real>() / y.numel() as Real;
        assert!(mean.abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn zero_db_filter_aug_is_identity() {
        let x = feat(8, 16);
        let cfg = AugmentConfig {
            filter_aug_db: (0.0, 0.0),
            ..AugmentConfig::default()
        };
        assert_eq!(filter_augment(&x, &mut rng(4), &cfg), x);
    }

    #[test]
    fn single_band_twenty_db_adds_log_gain() {
        let x = feat(4, 8);
        let y = filter_augment_with(&x, &[8], &[20.0]);
        let gain = 20.0 * (10.0 as Real).ln() / 20.0;
        assert!((gain - 2.302585).abs() < 1e-5);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((b - a - gain).abs() < 1e-12);
        }
    }

    #[test]
    fn two_band_split_applies_each_gain_to_its_rows() {
        let x = Tensor::zeros(&[2, 128]);
        let y = filter_augment_with(&x, &[64, 128], &[6.0, -6.0]);
        let g = 6.0 * (10.0 as Real).ln() / 20.0;
        for row in 0..2 {
            for col in 0..128 {
                let want = if col < 64 { g } else { -g };
                assert!((y.data()[row * 128 + col] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transforms_are_deterministic_under_fixed_seed() {
        let x = feat(30, 12);
        let cfg = AugmentConfig::default();
        let a = time_mask(&x, &mut rng(42), &cfg);
        let b = time_mask(&x, &mut rng(42), &cfg);
        assert_eq!(a, b);
        let a = filter_augment(&x, &mut rng(42), &cfg);
        let b = filter_augment(&x, &mut rng(42), &cfg);
        assert_eq!(a, b);
        let a = add_gaussian_noise(&x, &mut rng(42), &cfg);
        let b = add_gaussian_noise(&x, &mut rng(42), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn transforms_never_change_shape() {
        let x = feat(50, 24);
        let cfg = AugmentConfig::default();
        let mut r = rng(6);
        assert_eq!(time_mask(&x, &mut r, &cfg).shape(), x.shape());
        assert_eq!(frame_shift(&x, None, 4, &mut r, &cfg).0.shape(), x.shape());
        assert_eq!(add_gaussian_noise(&x, &mut r, &cfg).shape(), x.shape());
        assert_eq!(filter_augment(&x, &mut r, &cfg).shape(), x.shape());
    }
}
