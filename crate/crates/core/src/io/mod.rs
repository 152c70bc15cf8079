//! File formats: PFM and PNG images, RealEstate10K camera files, run
//! configuration, and per-pixel parameter maps stored as PFM files.

mod config;
mod pfm;
mod png;
mod re10k;

pub use config::RunConfig;
pub use pfm::{read_pfm, read_pfm_file, write_pfm, write_pfm_file};
pub use png::{read_png_rgb, write_mask_png, write_png};
pub use re10k::{
    format_sig9, parse_re10k, write_re10k, Re10kFile, Re10kRecord, FIELDS as RE10K_FIELDS,
    ROTATION_TOLERANCE,
};

use std::path::Path;

use crate::error::Result;
use crate::image::{Image, Mask};
use crate::scalar::Real;
use crate::scene::PixelParamMaps;

/// File names of the parameter maps inside a directory. PFM holds one or
/// three channels, so the quaternion is split into `w` and `xyz`.
pub const PARAM_MAP_FILES: [&str; 6] = [
    "ray_distance.pfm",
    "opacity.pfm",
    "scale.pfm",
    "rotation_w.pfm",
    "rotation_xyz.pfm",
    "color.pfm",
];

pub fn write_param_maps<T: Real>(maps: &PixelParamMaps<T>, dir: impl AsRef<Path>) -> Result<()> {
    maps.validate_shapes()?;
    let dir = dir.as_ref();
    let rot = &maps.rotation;
    let (w, h) = (maps.width(), maps.height());
    let rot_w = Image::from_fn(w, h, 1, |x, y, _| rot.get(x, y, 0));
    let rot_xyz = Image::from_fn(w, h, 3, |x, y, c| rot.get(x, y, c + 1));
    let images = [
        &maps.ray_distance,
        &maps.opacity,
        &maps.scale,
        &rot_w,
        &rot_xyz,
        &maps.color,
    ];
    for (name, img) in PARAM_MAP_FILES.iter().zip(images) {
        write_pfm_file(img, dir.join(name))?;
    }
    Ok(())
}

pub fn read_param_maps(dir: impl AsRef<Path>) -> Result<PixelParamMaps<f64>> {
    let dir = dir.as_ref();
    let mut imgs = PARAM_MAP_FILES
        .iter()
        .map(|name| read_pfm_file(dir.join(name)))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || imgs.next().expect("one image per file");
    let (ray_distance, opacity, scale, rot_w, rot_xyz, color) =
        (next(), next(), next(), next(), next(), next());
    rot_w.ensure_shape(&ray_distance, "rotation_w map")?;
    rot_xyz.ensure_shape(&scale, "rotation_xyz map")?;
    let rotation = Image::from_fn(rot_w.width(), rot_w.height(), 4, |x, y, c| {
        if c == 0 {
            rot_w.get(x, y, 0)
        } else {
            rot_xyz.get(x, y, c - 1)
        }
    });
    let maps = PixelParamMaps {
        ray_distance,
        opacity,
        scale,
        rotation,
        color,
    };
    maps.validate_shapes()?;
    Ok(maps)
}

/// Mask as a one-channel PFM of zeros and ones.
pub fn write_mask_pfm(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_pfm_file(&mask.to_image::<f64>(), path)
}

/// Pixels with value above one half are set.
pub fn read_mask_pfm(path: impl AsRef<Path>) -> Result<Mask> {
    let img = read_pfm_file(path)?;
    Ok(Mask::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y, 0) > 0.5
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_maps_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut maps = PixelParamMaps::uniform(5, 4, 2.5, 0.75, 0.125, [0.25, 0.5, 1.0]);
        maps.rotation.set(1, 2, 0, 0.5);
        maps.rotation.set(1, 2, 3, -0.5);
        write_param_maps(&maps, dir.path()).unwrap();
        assert_eq!(read_param_maps(dir.path()).unwrap(), maps);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mask::from_fn(6, 3, |x, y| (x + y) % 3 == 0);
        let p = dir.path().join("m.pfm");
        write_mask_pfm(&m, &p).unwrap();
        assert_eq!(read_mask_pfm(&p).unwrap(), m);
    }
}
