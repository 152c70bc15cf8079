//! RealEstate10K camera files.
//!
//! An optional first line holds the source video URL. Every other non-empty
//! line has 19 whitespace-separated fields:
//!
//! ```text
//! timestamp_us fx/W fy/H cx/W cy/H 0 0 r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2
//! ```
//!
//! The 3×4 block is world-to-camera. `fx` and `cx` are divided by the image
//! width, `fy` and `cy` by the height. Floats are written with 9 significant
//! digits.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use crate::camgeo::{CameraFrame, CameraIntrinsics, CameraPose, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

pub const FIELDS: usize = 19;
/// Largest accepted `max |RᵀR − I|` (or `|det R − 1|`) of a parsed rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Re10kRecord {
    pub timestamp: i64,
    /// `fx/W, fy/H, cx/W, cy/H`.
    pub intrinsics: [f64; 4],
    pub reserved: [f64; 2],
    /// Row-major world-to-camera `[R | t]`.
    pub world_to_camera: [f64; 12],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Re10kFile {
    pub url: Option<String>,
    pub records: Vec<Re10kRecord>,
}

/// `%.9g`-style formatting.
pub fn format_sig9(v: f64) -> String {
    format_sig(v, 9)
}

fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl Re10kRecord {
    /// Record for a frame, normalizing the intrinsics by its image size.
    pub fn from_frame<T: Real>(frame: &CameraFrame<T>) -> Self {
        let k = frame.intrinsics.cast::<f64>();
        let (w, h) = (k.width as f64, k.height as f64);
        let (r, t) = frame.pose.cast::<f64>().world_to_camera();
        let mut m = [0.0; 12];
        for i in 0..3 {
            m[4 * i..4 * i + 3].copy_from_slice(&r.m[i]);
            m[4 * i + 3] = t[i];
        }
        Self {
            timestamp: frame.timestamp.unwrap_or(0),
            intrinsics: [k.fx / w, k.fy / h, k.cx / w, k.cy / h],
            reserved: [0.0; 2],
            world_to_camera: m,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = self.timestamp.to_string();
        for v in self
            .intrinsics
            .iter()
            .chain(&self.reserved)
            .chain(&self.world_to_camera)
        {
            s.push(' ');
            s.push_str(&format_sig9(*v));
        }
        s
    }

    /// `line` is 1-based and only used in errors.
    pub fn parse_line(text: &str, line: usize) -> Result<Self> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != FIELDS {
            return Err(Error::MalformedLine {
                line,
                field: tokens.len().min(FIELDS),
                reason: format!("expected {FIELDS} fields, found {}", tokens.len()),
            });
        }
        let timestamp = tokens[0].parse::<i64>().map_err(|_| Error::MalformedLine {
            line,
            field: 0,
            reason: format!("timestamp `{}` is not an integer", tokens[0]),
        })?;
        let mut vals = [0.0; FIELDS - 1];
        for (i, tok) in tokens[1..].iter().enumerate() {
            vals[i] = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedLine {
                    line,
                    field: i + 1,
                    reason: format!("`{tok}` is not a finite number"),
                })?;
        }
        let mut rec = Self {
            timestamp,
            intrinsics: [0.0; 4],
            reserved: [0.0; 2],
            world_to_camera: [0.0; 12],
        };
        rec.intrinsics.copy_from_slice(&vals[0..4]);
        rec.reserved.copy_from_slice(&vals[4..6]);
        rec.world_to_camera.copy_from_slice(&vals[6..18]);
        Ok(rec)
    }

    /// Denormalizes to a frame of the given size. The rotation is projected
    /// onto SO(3) once it passes the tolerance check.
    pub fn to_frame<T: Real>(
        &self,
        width: usize,
        height: usize,
        line: usize,
    ) -> Result<CameraFrame<T>> {
        let m = &self.world_to_camera;
        let r = Mat3::from_rows([[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]]);
        let t = Vec3::new(m[3], m[7], m[11]);
        let deviation = r.orthonormality_error().max((r.determinant() - 1.0).abs());
        if !(deviation <= ROTATION_TOLERANCE) {
            return Err(Error::NonOrthonormalRotation { line, deviation });
        }
        let r = r
            .orthonormalized()
            .ok_or(Error::NonOrthonormalRotation { line, deviation })?;
        let pose = CameraPose::from_world_to_camera(r, t)?;
        let [fx, fy, cx, cy] = self.intrinsics;
        let (w, h) = (width as f64, height as f64);
        let k =
            CameraIntrinsics::new(fx * w, fy * h, cx * w, cy * h, width, height).map_err(|e| {
                Error::MalformedLine {
                    line,
                    field: 1,
                    reason: e.to_string(),
                }
            })?;
        Ok(CameraFrame::new(k, pose)
            .with_timestamp(self.timestamp)
            .cast())
    }
}

impl Re10kFile {
    pub fn parse<R: Read>(input: R) -> Result<Self> {
        let mut file = Self::default();
        for_each_record(input, |url, rec, _| {
            if let Some(url) = url {
                file.url = Some(url.to_string());
            }
            if let Some(rec) = rec {
                file.records.push(rec);
            }
            Ok(())
        })?;
        Ok(file)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(url) = &self.url {
            let _ = writeln!(s, "{url}");
        }
        for r in &self.records {
            let _ = writeln!(s, "{}", r.to_line());
        }
        s
    }

    pub fn from_trajectory<T: Real>(traj: &Trajectory<T>, url: Option<String>) -> Self {
        Self {
            url,
            records: traj.frames().iter().map(Re10kRecord::from_frame).collect(),
        }
    }

    /// Line numbers in errors refer to the layout of [`Re10kFile::to_text`].
    pub fn to_trajectory<T: Real>(&self, width: usize, height: usize) -> Result<Trajectory<T>> {
        let offset = usize::from(self.url.is_some()) + 1;
        let frames = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| r.to_frame(width, height, i + offset))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(frames)
    }
}

/// Calls `f` with the URL line or a parsed record and its 1-based line number.
fn for_each_record<R: Read>(
    input: R,
    mut f: impl FnMut(Option<&str>, Option<Re10kRecord>, usize) -> Result<()>,
) -> Result<()> {
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if i == 0 && text.split_whitespace().count() == 1 && text.parse::<i64>().is_err() {
            f(Some(text), None, i + 1)?;
            continue;
        }
        f(None, Some(Re10kRecord::parse_line(text, i + 1)?), i + 1)?;
    }
    Ok(())
}

/// Reads a camera file straight into a trajectory of the given image size.
pub fn parse_re10k<T: Real, R: Read>(
    input: R,
    width: usize,
    height: usize,
) -> Result<Trajectory<T>> {
    let mut frames = Vec::new();
    for_each_record(input, |_, rec, line| {
        if let Some(rec) = rec {
            frames.push(rec.to_frame(width, height, line)?);
        }
        Ok(())
    })?;
    Trajectory::new(frames)
}

pub fn write_re10k<T: Real>(traj: &Trajectory<T>, url: Option<String>) -> String {
    Re10kFile::from_trajectory(traj, url).to_text()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_matches_printf_g() {
        // Expected strings are what C's `%.9g` prints.
        let cases = [
            (0.5, "0.5"),
            (1.0, "1"),
            (-0.123456789123, "-0.123456789"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (2.0 / 3.0, "0.666666667"),
            (-0.0, "-0"),
            (9.9999999999, "10"),
        ];
        for (v, s) in cases {
            assert_eq!(format_sig9(v), s, "{v}");
        }
    }

    #[test]
    fn wrong_field_count_names_line() {
        let text =
            "https://example.com/v\n0 0.5 0.5 0.5 0.5 0 0 1 0 0 0 0 1 0 0 0 0 1 0\n1 0.5 0.5\n";
        match Re10kFile::parse(text.as_bytes()) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
