use camreward::camgeo::{CameraFrame, CameraIntrinsics, CameraPose};
use camreward::linalg::{Quat, Vec3};
use camreward::raster::{raycast_oracle, render, RenderOutput};
use camreward::rng::{rng_from_seed, unit_vector};
use camreward::scene::{
    default_trajectory, synth_scene, Gaussian3D, GaussianScene, LayoutKind, SyntheticSceneSpec,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn frame() -> CameraFrame<f64> {
    let k = CameraIntrinsics::new(40.0, 40.0, 20.0, 15.0, 40, 30).unwrap();
    CameraFrame::new(k, CameraPose::identity())
}

fn random_gaussian(rng: &mut impl Rng) -> Gaussian3D<f64> {
    let z = rng.gen_range(2.0..8.0);
    Gaussian3D {
        mean: Vec3::new(
            rng.gen_range(-0.4..0.4) * z,
            rng.gen_range(-0.3..0.3) * z,
            z,
        ),
        scale: Vec3::new(
            rng.gen_range(0.05..0.4),
            rng.gen_range(0.05..0.4),
            rng.gen_range(0.05..0.4),
        ),
        rotation: Quat::from_axis_angle(unit_vector::<f64, _>(rng), rng.gen_range(0.0..3.0)),
        opacity: rng.gen_range(0.1..1.0),
        color: [rng.gen(), rng.gen(), rng.gen()],
    }
}

fn random_scene(seed: u64, n: usize) -> GaussianScene<f64> {
    let mut rng = rng_from_seed(seed);
    GaussianScene::new((0..n).map(|_| random_gaussian(&mut rng)).collect()).unwrap()
}

fn max_diff(a: &RenderOutput<f64>, b: &RenderOutput<f64>) -> f64 {
    a.color
        .max_abs_diff(&b.color)
        .max(a.depth.max_abs_diff(&b.depth))
        .max(a.alpha.max_abs_diff(&b.alpha))
}

#[test]
fn renders_identically_across_thread_counts() {
    let scene = random_scene(9, 300);
    let f = frame();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| render(&scene, &f).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 4] {
        let other = run(threads);
        assert_eq!(one.color, other.color);
        assert_eq!(one.depth, other.depth);
        assert_eq!(one.alpha, other.alpha);
    }
}

#[test]
fn dense_opaque_depth_matches_raycast() {
    for (layout, seed) in [
        (LayoutKind::TexturedPlanes, 0),
        (LayoutKind::TexturedPlanes, 1),
        (LayoutKind::TexturedPlanes, 2),
        (LayoutKind::OccluderPair, 0),
        (LayoutKind::OccluderPair, 1),
    ] {
        let mut spec = SyntheticSceneSpec::new(layout, seed).with_spacing(0.04);
        spec.opacity = 1.0;
        let (scene, geometry) = synth_scene::<f64>(&spec).unwrap();
        let traj = default_trajectory::<f64>(layout, 128, 128, 2).unwrap();
        for f in traj.frames() {
            let ray = raycast_oracle(&geometry, f);
            let out = render(&scene, f).unwrap();
            let (mut hits, mut good) = (0, 0);
            for y in 0..128 {
                for x in 0..128 {
                    if !ray.hit.get(x, y) {
                        continue;
                    }
                    hits += 1;
                    let z = ray.depth.get(x, y, 0);
                    good += usize::from((out.depth.get(x, y, 0) - z).abs() <= 0.02 * z);
                }
            }
            let frac = good as f64 / hits as f64;
            assert!(frac >= 0.95, "{layout} seed {seed}: {frac}");
        }
    }
}

#[test]
fn single_precision_render_tracks_double() {
    let scene = random_scene(4, 60);
    let a = render(&scene, &frame()).unwrap();
    let b = render(&scene.cast::<f32>(), &frame().cast::<f32>()).unwrap();
    let diff = a.color.max_abs_diff(&b.color.cast());
    assert!(diff < 1e-4, "{diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alpha_stays_in_unit_interval(seed in any::<u64>()) {
        let out = render(&random_scene(seed, 80), &frame()).unwrap();
        for a in out.alpha.data() {
            prop_assert!((0.0..=1.0).contains(a));
        }
        for (d, a) in out.depth.data().iter().zip(out.alpha.data()) {
            prop_assert!(*d >= 0.0);
            prop_assert_eq!(*d == 0.0, *a == 0.0);
        }
    }

    #[test]
    fn transparent_gaussian_is_invisible(seed in any::<u64>()) {
        let scene = random_scene(seed, 40);
        let mut rng = rng_from_seed(seed ^ 5);
        let mut ghost = random_gaussian(&mut rng);
        ghost.opacity = 1e-9;
        let mut gs = scene.gaussians().to_vec();
        gs.insert(rng.gen_range(0..gs.len()), ghost);
        let a = render(&scene, &frame()).unwrap();
        let b = render(&scene.with_gaussians(gs).unwrap(), &frame()).unwrap();
        prop_assert!(a.color.max_abs_diff(&b.color) < 1e-6);
        prop_assert!(a.alpha.max_abs_diff(&b.alpha) < 1e-6);
    }

    #[test]
    fn order_of_gaussians_is_irrelevant(seed in any::<u64>()) {
        let scene = random_scene(seed, 60);
        let mut gs = scene.gaussians().to_vec();
        gs.shuffle(&mut rng_from_seed(seed ^ 7));
        let a = render(&scene, &frame()).unwrap();
        let b = render(&scene.with_gaussians(gs).unwrap(), &frame()).unwrap();
        prop_assert!(max_diff(&a, &b) <= 1e-12);
    }
}
