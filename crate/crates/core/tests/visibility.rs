mod common;

use camreward::camgeo::{CameraFrame, CameraPose};
use camreward::image::Image;
use camreward::linalg::so3_exp;
use camreward::raster::raycast_oracle;
use camreward::rng::rng_from_seed;
use camreward::scene::{default_trajectory, synth_scene, LayoutKind, SyntheticSceneSpec};
use camreward::visibility::{visibility_mask, warp_to_reference, ToleranceSpec};
use camreward::Error;
use common::{frame_from_seed, random_vec};
use proptest::prelude::*;
use rand::Rng;

fn occluder_depths(seed: u64) -> (CameraFrame<f64>, CameraFrame<f64>, Image<f64>, Image<f64>) {
    let (_, geometry) =
        synth_scene::<f64>(&SyntheticSceneSpec::new(LayoutKind::OccluderPair, seed)).unwrap();
    let traj = default_trajectory::<f64>(LayoutKind::OccluderPair, 64, 64, 2).unwrap();
    let (f0, f1) = (traj.frames()[0], traj.frames()[1]);
    let d0 = raycast_oracle(&geometry, &f0).depth;
    let d1 = raycast_oracle(&geometry, &f1).depth;
    (f0, f1, d0, d1)
}

#[test]
fn invalid_tolerance_is_rejected() {
    let (f0, f1, d0, d1) = occluder_depths(0);
    let warp = warp_to_reference(&d1, &f1, &f0).unwrap();
    for bad in [0.0, -0.1, f64::NAN] {
        assert!(matches!(
            visibility_mask(&warp, &d0, ToleranceSpec::Relative(bad)),
            Err(Error::InvalidTolerance(_))
        ));
    }
}

#[test]
fn occluded_background_is_masked_out() {
    let (f0, f1, d0, d1) = occluder_depths(1);
    let warp = warp_to_reference(&d1, &f1, &f0).unwrap();
    let m = visibility_mask(&warp, &d0, ToleranceSpec::default()).unwrap();
    assert!(m.coverage > 0.5 && m.coverage < 1.0, "{}", m.coverage);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identity_warp_covers_everything(seed in any::<u64>(), tau in 1e-9..1.0f64, absolute in any::<bool>()) {
        let f = frame_from_seed(seed, 24, 18);
        let mut rng = rng_from_seed(seed ^ 11);
        let depth = Image::from_fn(24, 18, 1, |_, _, _| 10f64.powf(rng.gen_range(-2.0..3.0)));
        let tol = if absolute { ToleranceSpec::Absolute(tau) } else { ToleranceSpec::Relative(tau) };
        let warp = warp_to_reference(&depth, &f, &f).unwrap();
        let m = visibility_mask(&warp, &depth, tol).unwrap();
        prop_assert_eq!(m.coverage, 1.0);
    }

    #[test]
    fn mask_grows_with_tolerance(seed in 0u64..20, a in 1e-4..0.2f64, b in 1e-4..0.2f64) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (f0, f1, d0, d1) = occluder_depths(seed);
        let warp = warp_to_reference(&d1, &f1, &f0).unwrap();
        for (tl, th) in [
            (ToleranceSpec::Relative(lo), ToleranceSpec::Relative(hi)),
            (ToleranceSpec::Absolute(lo), ToleranceSpec::Absolute(hi)),
        ] {
            let ml = visibility_mask(&warp, &d0, tl).unwrap().mask;
            let mh = visibility_mask(&warp, &d0, th).unwrap().mask;
            for (l, h) in ml.data().iter().zip(mh.data()) {
                prop_assert!(!l || *h);
            }
        }
    }

    #[test]
    fn joint_rigid_transform_leaves_mask_unchanged(seed in 0u64..20, angle in 0.0..3.0f64) {
        let (f0, f1, d0, d1) = occluder_depths(seed);
        let mut rng = rng_from_seed(seed ^ 13);
        let g = CameraPose::new(so3_exp(random_vec(&mut rng, 1.0).normalize() * angle), random_vec(&mut rng, 20.0)).unwrap();
        let move_frame = |f: &CameraFrame<f64>| f.with_pose(g.compose(&f.pose));
        let (g0, g1) = (move_frame(&f0), move_frame(&f1));
        let wa = warp_to_reference(&d1, &f1, &f0).unwrap();
        let wb = warp_to_reference(&d1, &g1, &g0).unwrap();
        for (i, (ca, cb)) in wa.coords.iter().zip(&wb.coords).enumerate() {
            if wa.in_frustum[i] {
                prop_assert!((ca.0 - cb.0).abs() <= 1e-6 && (ca.1 - cb.1).abs() <= 1e-6);
                prop_assert!((wa.depth[i] - wb.depth[i]).abs() <= 1e-6);
            }
        }
        let ma = visibility_mask(&wa, &d0, ToleranceSpec::default()).unwrap();
        let mb = visibility_mask(&wb, &d0, ToleranceSpec::default()).unwrap();
        prop_assert_eq!(ma.mask, mb.mask);
    }
}
