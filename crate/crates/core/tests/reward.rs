use camreward::image::{Image, Mask};
use camreward::reward::{
    cro_loss, cro_loss_batch, masked_mse, psnr, PerceptualKind, RewardConfig, DEFAULT_LAMBDA,
    PSNR_CAP_DB,
};
use camreward::rng::rng_from_seed;
use camreward::Error;
use proptest::prelude::*;
use rand::Rng;

const W: usize = 32;
const H: usize = 28;

fn random_image(seed: u64) -> Image<f64> {
    let mut rng = rng_from_seed(seed);
    Image::from_fn(W, H, 3, |_, _, _| rng.gen_range(0.0..1.0))
}

/// A disc plus a random sprinkling, large enough to contain SSIM windows.
fn random_mask(seed: u64) -> Mask {
    let mut rng = rng_from_seed(seed);
    let (cx, cy) = (rng.gen_range(12.0..20.0), rng.gen_range(12.0..16.0));
    Mask::from_fn(W, H, |x, y| {
        let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        r2 < 100.0 || rng.gen_bool(0.2)
    })
}

#[test]
fn mse_is_normalized_over_masked_channels() {
    let a = Image::filled(4, 4, 3, 0.0);
    let mut b = Image::filled(4, 4, 3, 0.0);
    b.set(1, 1, 0, 1.0);
    b.set(3, 3, 2, 1.0);
    let mask = Mask::from_fn(4, 4, |x, y| x == y);
    assert_eq!(masked_mse(&a, &b, &mask).unwrap(), 2.0 / 12.0);
}

#[test]
fn empty_mask_is_an_error() {
    let img = random_image(1);
    let empty = Mask::filled(W, H, false);
    for cfg in [RewardConfig::default(), RewardConfig::mse_only()] {
        assert!(matches!(
            cro_loss(&img, &img, &empty, &cfg),
            Err(Error::EmptyMask { .. })
        ));
    }
    let specks = Mask::from_fn(W, H, |x, y| (x * 7 + y * 3) % 5 == 0);
    assert!(matches!(
        cro_loss(&img, &random_image(2), &specks, &RewardConfig::default()),
        Err(Error::EmptyMask { .. })
    ));
    assert!(cro_loss(&img, &random_image(2), &specks, &RewardConfig::mse_only()).is_ok());
}

#[test]
fn default_weight_and_perceptual_term() {
    let cfg = RewardConfig::<f64>::default();
    assert_eq!(DEFAULT_LAMBDA, 0.5);
    assert_eq!(cfg.lambda, 0.5);
    assert_eq!(cfg.perceptual, PerceptualKind::Ssim);
}

#[test]
fn batch_weights_frames_by_coverage() {
    let imgs = [random_image(3), random_image(4)];
    let targets = [random_image(5), random_image(6)];
    let masks = [Mask::full(W, H), random_mask(7)];
    let cfg = RewardConfig::default();
    let batch = cro_loss_batch(&imgs, &targets, &masks, &cfg).unwrap();
    let each: Vec<_> = (0..2)
        .map(|i| cro_loss(&imgs[i], &targets[i], &masks[i], &cfg).unwrap())
        .collect();
    let (c0, c1) = (each[0].coverage, each[1].coverage);
    let expect = (each[0].combined * c0 + each[1].combined * c1) / (c0 + c1);
    assert!((batch.combined - expect).abs() <= 1e-12);
    assert_eq!(batch.frames.len(), 2);
}

#[test]
fn psnr_of_identical_images_is_capped() {
    let img = random_image(8);
    let p = psnr(&img, &img, None).unwrap();
    assert!(p.exact_match);
    assert_eq!(p.db, PSNR_CAP_DB);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn self_loss_is_zero(seed in any::<u64>()) {
        let img = random_image(seed);
        let r = cro_loss(&img, &img, &random_mask(seed ^ 1), &RewardConfig::default()).unwrap();
        prop_assert_eq!(r.masked_mse, 0.0);
        prop_assert!(r.masked_perceptual.abs() <= 1e-12);
        prop_assert!(r.combined.abs() <= 1e-12);
    }

    #[test]
    fn loss_is_non_negative_and_combined_exactly(seed in any::<u64>(), lambda in 0.0..4.0f64) {
        let cfg = RewardConfig { lambda, ..RewardConfig::default() };
        let r = cro_loss(&random_image(seed), &random_image(seed ^ 2), &random_mask(seed ^ 3), &cfg).unwrap();
        prop_assert!(r.masked_mse >= 0.0 && r.masked_perceptual >= 0.0);
        prop_assert_eq!(r.combined, r.masked_mse + lambda * r.masked_perceptual);
    }

    #[test]
    fn pixels_outside_the_mask_do_not_matter(seed in any::<u64>()) {
        let (a, b, mask) = (random_image(seed), random_image(seed ^ 4), random_mask(seed ^ 5));
        let (mut a2, mut b2) = (a.clone(), b.clone());
        let mut rng = rng_from_seed(seed ^ 6);
        for y in 0..H {
            for x in 0..W {
                if !mask.get(x, y) {
                    for c in 0..3 {
                        a2.set(x, y, c, rng.gen_range(-10.0..10.0));
                        b2.set(x, y, c, rng.gen_range(-10.0..10.0));
                    }
                }
            }
        }
        for cfg in [RewardConfig::default(), RewardConfig::mse_only()] {
            let r1 = cro_loss(&a, &b, &mask, &cfg).unwrap();
            let r2 = cro_loss(&a2, &b2, &mask, &cfg).unwrap();
            prop_assert_eq!(r1.combined.to_bits(), r2.combined.to_bits());
            prop_assert_eq!(r1.masked_perceptual.to_bits(), r2.masked_perceptual.to_bits());
        }
    }
}
