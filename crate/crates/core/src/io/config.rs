//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment. Units are part of the key
//! (`rotation_deg`, `ssim_window_px`). Lists are comma separated. Unknown or
//! repeated keys are errors. Relative paths resolve against the file's
//! directory and must exist when the file is loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{StepPolicy, TruncNormalSpec};
use crate::reward::{PerceptualKind, PerturbSpec, RewardConfig};
use crate::scene::{LayoutKind, SyntheticSceneSpec};
use crate::visibility::ToleranceSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub width_px: usize,
    pub height_px: usize,
    pub frames: usize,
    pub layout: String,
    /// Planes or cloud Gaussians; the layout default when absent.
    pub scene_count: Option<usize>,
    pub scene_spacing: Option<f64>,
    pub tolerance_relative: Option<f64>,
    pub tolerance_absolute: Option<f64>,
    pub lambda: f64,
    pub perceptual: PerceptualKind,
    pub ssim_window_px: usize,
    pub ssim_sigma_px: f64,
    pub min_coverage: f64,
    pub rotation_deg: Vec<f64>,
    pub translation_frac: Vec<f64>,
    pub trials: usize,
    pub pose_rotation_deg: f64,
    pub pose_translation_frac: f64,
    pub max_iterations: usize,
    pub fit_iterations: usize,
    pub initial_step: f64,
    pub fit_views: usize,
    pub heldout_views: usize,
    pub timestep_mean: f64,
    pub timestep_std: f64,
    pub timestep_lo: f64,
    pub timestep_hi: f64,
    pub samples: usize,
    pub output_dir: Option<PathBuf>,
    pub scene_path: Option<PathBuf>,
    pub trajectory_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let reward = RewardConfig::<f64>::default();
        let perturb = PerturbSpec::default();
        let t = TruncNormalSpec::default();
        let policy = StepPolicy::default();
        Self {
            seed: 0,
            width_px: 128,
            height_px: 128,
            frames: 4,
            layout: LayoutKind::TexturedPlanes.as_str().to_string(),
            scene_count: None,
            scene_spacing: None,
            tolerance_relative: None,
            tolerance_absolute: None,
            lambda: reward.lambda,
            perceptual: reward.perceptual,
            ssim_window_px: reward.ssim_window,
            ssim_sigma_px: reward.ssim_sigma,
            min_coverage: reward.min_coverage,
            rotation_deg: perturb.rotation_deg,
            translation_frac: perturb.translation_frac,
            trials: perturb.trials,
            pose_rotation_deg: 2.0,
            pose_translation_frac: 0.02,
            max_iterations: policy.max_iterations,
            fit_iterations: 1000,
            initial_step: policy.initial_step,
            fit_views: 8,
            heldout_views: 2,
            timestep_mean: t.mean,
            timestep_std: t.std,
            timestep_lo: t.lo,
            timestep_hi: t.hi,
            samples: 10_000,
            output_dir: None,
            scene_path: None,
            trajectory_path: None,
        }
    }
}

fn parse_value<V: std::str::FromStr>(key: &str, raw: &str) -> Result<V> {
    raw.parse()
        .map_err(|_| Error::Config(format!("`{raw}` is not a valid value for `{key}`")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| parse_value::<f64>(key, s.trim()))
        .collect()
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base)?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    /// Parses without touching the file system; relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {line}: `{key}` is set twice")));
            }
            cfg.set(key, value, base).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one key as if it appeared in a file located in `base`.
    pub fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        let path = || Some(base.join(v));
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "width_px" => self.width_px = parse_value(key, v)?,
            "height_px" => self.height_px = parse_value(key, v)?,
            "frames" => self.frames = parse_value(key, v)?,
            "layout" => {
                v.parse::<LayoutKind>()?;
                self.layout = v.to_string();
            }
            "scene_count" => self.scene_count = Some(parse_value(key, v)?),
            "scene_spacing" => self.scene_spacing = Some(parse_value(key, v)?),
            "tolerance_relative" => self.tolerance_relative = Some(parse_value(key, v)?),
            "tolerance_absolute" => self.tolerance_absolute = Some(parse_value(key, v)?),
            "lambda" => self.lambda = parse_value(key, v)?,
            "perceptual" => self.perceptual = parse_value(key, v)?,
            "ssim_window_px" => self.ssim_window_px = parse_value(key, v)?,
            "ssim_sigma_px" => self.ssim_sigma_px = parse_value(key, v)?,
            "min_coverage" => self.min_coverage = parse_value(key, v)?,
            "rotation_deg" => self.rotation_deg = parse_list(key, v)?,
            "translation_frac" => self.translation_frac = parse_list(key, v)?,
            "trials" => self.trials = parse_value(key, v)?,
            "pose_rotation_deg" => self.pose_rotation_deg = parse_value(key, v)?,
            "pose_translation_frac" => self.pose_translation_frac = parse_value(key, v)?,
            "max_iterations" => self.max_iterations = parse_value(key, v)?,
            "fit_iterations" => self.fit_iterations = parse_value(key, v)?,
            "initial_step" => self.initial_step = parse_value(key, v)?,
            "fit_views" => self.fit_views = parse_value(key, v)?,
            "heldout_views" => self.heldout_views = parse_value(key, v)?,
            "timestep_mean" => self.timestep_mean = parse_value(key, v)?,
            "timestep_std" => self.timestep_std = parse_value(key, v)?,
            "timestep_lo" => self.timestep_lo = parse_value(key, v)?,
            "timestep_hi" => self.timestep_hi = parse_value(key, v)?,
            "samples" => self.samples = parse_value(key, v)?,
            "output_dir" => self.output_dir = path(),
            "scene_path" => self.scene_path = path(),
            "trajectory_path" => self.trajectory_path = path(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Consistency of values; paths are checked separately.
    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Config(
                "width_px and height_px must be positive".into(),
            ));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        self.layout_kind()?;
        self.tolerance()?.validate()?;
        self.reward().validate()?;
        self.perturbation().levels()?;
        self.timestep(0).validate()?;
        self.policy(self.max_iterations).validate()
    }

    /// Inputs must exist; the output directory's parent must.
    pub fn check_paths(&self) -> Result<()> {
        for (key, p) in [
            ("scene_path", &self.scene_path),
            ("trajectory_path", &self.trajectory_path),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "{key}: `{}` does not exist",
                        p.display()
                    )));
                }
            }
        }
        if let Some(out) = &self.output_dir {
            let parent = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            if !out.is_dir() && !parent.is_dir() {
                return Err(Error::Config(format!(
                    "output_dir: parent of `{}` does not exist",
                    out.display()
                )));
            }
        }
        Ok(())
    }

    pub fn layout_kind(&self) -> Result<LayoutKind> {
        self.layout.parse()
    }

    pub fn scene_spec(&self) -> Result<SyntheticSceneSpec> {
        let mut spec = SyntheticSceneSpec::new(self.layout_kind()?, self.seed);
        if let Some(n) = self.scene_count {
            spec = spec.with_count(n);
        }
        if let Some(s) = self.scene_spacing {
            spec = spec.with_spacing(s);
        }
        Ok(spec)
    }

    pub fn tolerance(&self) -> Result<ToleranceSpec> {
        match (self.tolerance_relative, self.tolerance_absolute) {
            (Some(_), Some(_)) => Err(Error::Config(
                "set at most one of tolerance_relative and tolerance_absolute".into(),
            )),
            (Some(r), None) => Ok(ToleranceSpec::Relative(r)),
            (None, Some(a)) => Ok(ToleranceSpec::Absolute(a)),
            (None, None) => Ok(ToleranceSpec::default()),
        }
    }

    pub fn reward(&self) -> RewardConfig<f64> {
        RewardConfig {
            lambda: self.lambda,
            perceptual: self.perceptual,
            ssim_window: self.ssim_window_px,
            ssim_sigma: self.ssim_sigma_px,
            min_coverage: self.min_coverage,
        }
    }

    pub fn perturbation(&self) -> PerturbSpec {
        PerturbSpec {
            rotation_deg: self.rotation_deg.clone(),
            translation_frac: self.translation_frac.clone(),
            trials: self.trials,
            seed: self.seed,
        }
    }

    pub fn policy(&self, max_iterations: usize) -> StepPolicy {
        StepPolicy {
            max_iterations,
            initial_step: self.initial_step,
            ..StepPolicy::default()
        }
    }

    pub fn timestep(&self, seed: u64) -> TruncNormalSpec {
        TruncNormalSpec {
            mean: self.timestep_mean,
            std: self.timestep_std,
            lo: self.timestep_lo,
            hi: self.timestep_hi,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units_lists_and_paths() {
        let text = "# sweep\nseed = 7\nrotation_deg = 0, 1,2.5\ntolerance_absolute = 0.05  # metres\noutput_dir = out\n";
        let cfg = RunConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.rotation_deg, vec![0.0, 1.0, 2.5]);
        assert_eq!(cfg.tolerance().unwrap(), ToleranceSpec::Absolute(0.05));
        assert_eq!(cfg.output_dir.as_deref(), Some(Path::new("/data/out")));
        assert_eq!(cfg.lambda, 0.5);
    }

    #[test]
    fn rejects_unknown_repeated_and_bad_values() {
        let base = Path::new(".");
        let err = RunConfig::parse("seed = 1\nrotaton_deg = 2\n", base).unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("rotaton_deg"));
        assert!(RunConfig::parse("seed = 1\nseed = 2\n", base).is_err());
        assert!(RunConfig::parse("seed = x\n", base).is_err());
        assert!(RunConfig::parse("seed\n", base).is_err());
        assert!(
            RunConfig::parse("tolerance_relative = 0.1\ntolerance_absolute = 0.1\n", base).is_err()
        );
        assert!(RunConfig::parse("tolerance_relative = -1\n", base).is_err());
        assert!(RunConfig::parse("layout = spiral\n", base).is_err());
    }

    #[test]
    fn missing_input_path_fails_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(&cfg_path, "scene_path = nowhere.gsc\n").unwrap();
        assert!(matches!(RunConfig::load(&cfg_path), Err(Error::Config(_))));
        std::fs::write(dir.path().join("s.gsc"), b"").unwrap();
        std::fs::write(&cfg_path, "scene_path = s.gsc\n").unwrap();
        assert!(RunConfig::load(&cfg_path).is_ok());
    }
}
