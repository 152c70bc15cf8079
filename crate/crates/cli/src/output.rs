//! Artifact writers that record a SHA-256 of every file they produce.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use camreward::image::{Image, Mask};
use camreward::io::{write_mask_pfm, write_mask_png, write_pfm_file, write_png};
use camreward::scene::{write_scene_file, GaussianScene};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| camreward::Error::file(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub struct Outputs {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    fn record(&mut self, name: &str) -> CliResult<()> {
        let hash = sha256_file(&self.dir.join(name))?;
        self.hashes.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| camreward::Error::file(&path, e))?;
        self.record(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.bytes(name, &to_json_bytes(value)?)
    }

    /// Header row followed by one row per record.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| crate::error::CliError::Serialize(e.to_string()))?;
        self.bytes(name, &bytes)
    }

    pub fn pfm(&mut self, name: &str, image: &Image<f64>) -> CliResult<()> {
        write_pfm_file(image, self.dir.join(name))?;
        self.record(name)
    }

    pub fn png(&mut self, name: &str, image: &Image<f64>) -> CliResult<()> {
        write_png(image, self.dir.join(name))?;
        self.record(name)
    }

    pub fn mask(&mut self, stem: &str, mask: &Mask) -> CliResult<()> {
        let pfm = format!("{stem}.pfm");
        let png = format!("{stem}.png");
        write_mask_pfm(mask, self.dir.join(&pfm))?;
        self.record(&pfm)?;
        write_mask_png(mask, self.dir.join(&png))?;
        self.record(&png)
    }

    pub fn scene(&mut self, name: &str, scene: &GaussianScene<f64>) -> CliResult<()> {
        write_scene_file(scene, self.dir.join(name))?;
        self.record(name)
    }
}
