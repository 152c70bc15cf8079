//! Portable float maps: `Pf` (one channel) or `PF` (three channels), rows
//! stored bottom to top, little-endian `f32` samples (negative scale).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

pub fn write_pfm<T: Real, W: Write>(image: &Image<T>, mut out: W) -> Result<()> {
    let tag = match image.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Format(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    let (w, h, c) = (image.width(), image.height(), image.channels());
    write!(out, "{tag}\n{w} {h}\n-1.0\n")?;
    let mut row = Vec::with_capacity(w * c * 4);
    for y in (0..h).rev() {
        row.clear();
        for x in 0..w {
            for ch in 0..c {
                row.extend_from_slice(&(image.get(x, y, ch).to_f64_lossy() as f32).to_le_bytes());
            }
        }
        out.write_all(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn header_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
        if tok.len() > 32 {
            return Err(Error::Format("PFM header token too long".into()));
        }
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated PFM header".into()));
    }
    String::from_utf8(tok).map_err(|_| Error::Format("PFM header is not ASCII".into()))
}

/// Reads either byte order; the sign of the scale field selects it.
pub fn read_pfm<R: Read>(input: R) -> Result<Image<f64>> {
    let mut r = BufReader::new(input);
    let channels = match header_token(&mut r)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::Format(format!("not a PFM file (tag `{other}`)"))),
    };
    let dim = |s: String| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::Format(format!("bad PFM dimension `{s}`")))
    };
    let w = dim(header_token(&mut r)?)?;
    let h = dim(header_token(&mut r)?)?;
    let scale_tok = header_token(&mut r)?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| Error::Format(format!("bad PFM scale `{scale_tok}`")))?;
    let little = scale < 0.0;
    let n = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| Error::Format("PFM dimensions overflow".into()))?;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Format(format!("PFM payload shorter than {w}x{h}x{channels}")))?;
    let mut img = Image::new(w, h, channels);
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let ch = i % channels;
        let x = (i / channels) % w;
        let y = h - 1 - i / (channels * w);
        img.set(x, y, ch, v as f64);
    }
    Ok(img)
}

pub fn write_pfm_file<T: Real>(image: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(
        image,
        BufWriter::new(File::create(path.as_ref()).map_err(|e| Error::file(path.as_ref(), e))?),
    )
}

pub fn read_pfm_file(path: impl AsRef<Path>) -> Result<Image<f64>> {
    read_pfm(File::open(path.as_ref()).map_err(|e| Error::file(path.as_ref(), e))?)
}
