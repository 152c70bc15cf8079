//! Binary scene container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic   b"GSCN"
//! version u32      (= 1)
//! flags   u32      bit 0: provenance section present
//! count   u64
//! count × record   mean 3×f64, scale 3×f64, quat (w,x,y,z) 4×f64, opacity f64, rgb 3×f64
//! [count × (frame u32, x u32, y u32)]   when flags bit 0 is set
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Gaussian3D, GaussianScene, Provenance};
use crate::error::{Error, Result};
use crate::linalg::{Quat, Vec3};
use crate::scalar::Real;

pub const SCENE_MAGIC: [u8; 4] = *b"GSCN";
pub const SCENE_VERSION: u32 = 1;
const FLAG_PROVENANCE: u32 = 1;
const RECORD_F64S: usize = 14;

pub fn write_scene<T: Real, W: Write>(scene: &GaussianScene<T>, mut out: W) -> Result<()> {
    let flags = if scene.provenance().is_some() {
        FLAG_PROVENANCE
    } else {
        0
    };
    out.write_all(&SCENE_MAGIC)?;
    out.write_all(&SCENE_VERSION.to_le_bytes())?;
    out.write_all(&flags.to_le_bytes())?;
    out.write_all(&(scene.len() as u64).to_le_bytes())?;
    for g in scene.gaussians() {
        let q = g.rotation.to_array();
        let rec: [T; RECORD_F64S] = [
            g.mean.x, g.mean.y, g.mean.z, g.scale.x, g.scale.y, g.scale.z, q[0], q[1], q[2], q[3],
            g.opacity, g.color[0], g.color[1], g.color[2],
        ];
        for v in &rec {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    if let Some(prov) = scene.provenance() {
        for p in prov {
            out.write_all(&p.frame.to_le_bytes())?;
            out.write_all(&p.x.to_le_bytes())?;
            out.write_all(&p.y.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_scene<T: Real, R: Read>(mut input: R) -> Result<GaussianScene<T>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != SCENE_MAGIC {
        return Err(Error::Format(format!("bad scene magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != SCENE_VERSION {
        return Err(Error::Format(format!(
            "unsupported scene version {version}"
        )));
    }
    let flags = read_u32(&mut input)?;
    if flags & !FLAG_PROVENANCE != 0 {
        return Err(Error::Format(format!("unknown scene flags {flags:#x}")));
    }
    let mut cb = [0u8; 8];
    input.read_exact(&mut cb)?;
    let count = u64::from_le_bytes(cb) as usize;
    let mut gaussians = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let mut v = [0.0f64; RECORD_F64S];
        for x in v.iter_mut() {
            *x = read_f64(&mut input)?;
        }
        let t = |i: usize| T::lit(v[i]);
        gaussians.push(Gaussian3D {
            mean: Vec3::new(t(0), t(1), t(2)),
            scale: Vec3::new(t(3), t(4), t(5)),
            rotation: Quat::new(t(6), t(7), t(8), t(9)),
            opacity: t(10),
            color: [t(11), t(12), t(13)],
        });
    }
    let mut scene = GaussianScene::new(gaussians)?;
    if flags & FLAG_PROVENANCE != 0 {
        let mut prov = Vec::with_capacity(count);
        for _ in 0..count {
            prov.push(Provenance {
                frame: read_u32(&mut input)?,
                x: read_u32(&mut input)?,
                y: read_u32(&mut input)?,
            });
        }
        scene = scene.with_provenance(prov)?;
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after scene data".into()));
    }
    Ok(scene)
}

pub fn write_scene_file<T: Real>(scene: &GaussianScene<T>, path: impl AsRef<Path>) -> Result<()> {
    write_scene(
        scene,
        BufWriter::new(File::create(path.as_ref()).map_err(|e| Error::file(path.as_ref(), e))?),
    )
}

pub fn read_scene_file<T: Real>(path: impl AsRef<Path>) -> Result<GaussianScene<T>> {
    read_scene(BufReader::new(
        File::open(path.as_ref()).map_err(|e| Error::file(path.as_ref(), e))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synth_scene, LayoutKind, SyntheticSceneSpec};
    use proptest::prelude::*;

    fn arb_gaussian() -> impl Strategy<Value = Gaussian3D<f64>> {
        (
            prop::array::uniform3(-1e3..1e3f64),
            prop::array::uniform3(1e-6..10.0f64),
            prop::array::uniform4(-1.0..1.0f64),
            1e-9..=1.0f64,
            prop::array::uniform3(0.0..=1.0f64),
        )
            .prop_filter("quaternion not degenerate", |(_, _, q, _, _)| {
                q.iter().map(|v| v * v).sum::<f64>() > 1e-3
            })
            .prop_map(|(m, s, q, a, c)| Gaussian3D {
                mean: Vec3::from_array(m),
                scale: Vec3::from_array(s),
                rotation: Quat::from_array(q).normalize(),
                opacity: a,
                color: c,
            })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(gs in prop::collection::vec(arb_gaussian(), 0..20)) {
            let scene = GaussianScene::new(gs).unwrap();
            let mut buf = Vec::new();
            write_scene(&scene, &mut buf).unwrap();
            prop_assert_eq!(buf.len(), 20 + scene.len() * RECORD_F64S * 8);
            let back: GaussianScene<f64> = read_scene(buf.as_slice()).unwrap();
            prop_assert_eq!(back, scene);
        }
    }

    #[test]
    fn provenance_survives_round_trip() {
        let (scene, _) =
            synth_scene::<f64>(&SyntheticSceneSpec::new(LayoutKind::GaussianCloud, 3)).unwrap();
        let prov = (0..scene.len() as u32)
            .map(|i| Provenance {
                frame: i % 3,
                x: i,
                y: 2 * i,
            })
            .collect();
        let scene = scene.with_provenance(prov).unwrap();
        let mut buf = Vec::new();
        write_scene(&scene, &mut buf).unwrap();
        let back: GaussianScene<f64> = read_scene(buf.as_slice()).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let scene = GaussianScene::new(vec![Gaussian3D::isotropic(
            Vec3::zero(),
            0.1,
            0.5,
            [0.1, 0.2, 0.3],
        )])
        .unwrap();
        let mut buf = Vec::new();
        write_scene(&scene, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_scene::<f64, _>(bad.as_slice()),
            Err(Error::Format(_))
        ));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_scene::<f64, _>(bad.as_slice()).is_err());
        assert!(read_scene::<f64, _>(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad.push(0);
        assert!(read_scene::<f64, _>(bad.as_slice()).is_err());
    }
}
