#![allow(dead_code)]

use std::f64::consts::PI;

use camreward::camgeo::{CameraFrame, CameraIntrinsics, CameraPose};
use camreward::linalg::{so3_exp, Vec3};
use camreward::rng::{rng_from_seed, unit_vector, SeededRng};
use rand::Rng;

pub fn random_vec(rng: &mut SeededRng, half: f64) -> Vec3<f64> {
    Vec3::new(
        rng.gen_range(-half..half),
        rng.gen_range(-half..half),
        rng.gen_range(-half..half),
    )
}

pub fn random_pose(rng: &mut SeededRng) -> CameraPose<f64> {
    let r = so3_exp(unit_vector::<f64, _>(rng) * rng.gen_range(0.0..PI));
    CameraPose::new(r, random_vec(rng, 10.0)).unwrap()
}

pub fn random_frame(rng: &mut SeededRng, width: usize, height: usize) -> CameraFrame<f64> {
    let k = CameraIntrinsics::new(
        rng.gen_range(20.0..400.0),
        rng.gen_range(20.0..400.0),
        rng.gen_range(0.0..width as f64),
        rng.gen_range(0.0..height as f64),
        width,
        height,
    )
    .unwrap();
    CameraFrame::new(k, random_pose(rng))
}

pub fn frame_from_seed(seed: u64, width: usize, height: usize) -> CameraFrame<f64> {
    random_frame(&mut rng_from_seed(seed), width, height)
}
