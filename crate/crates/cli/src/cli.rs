use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Camera-aware Gaussian splatting experiments. Every run writes its
/// artifacts and a `manifest.json` into the output directory.
#[derive(Debug, Parser)]
#[command(name = "camreward", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command. Flags override the configuration file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Synthetic layout: textured-planes, gaussian-cloud or occluder-pair.
    #[arg(long, global = true)]
    pub layout: Option<String>,
    #[arg(long, global = true, value_name = "PX")]
    pub width: Option<usize>,
    #[arg(long, global = true, value_name = "PX")]
    pub height: Option<usize>,
    #[arg(long, global = true)]
    pub frames: Option<usize>,
    /// Any configuration key, e.g. `--set rotation_deg=0,1,2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Scene and trajectory inputs; synthesized from the configuration when absent.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SceneInputs {
    /// Scene container written by `synth`.
    #[arg(long, value_name = "FILE")]
    pub scene: Option<PathBuf>,
    /// RealEstate10K camera file.
    #[arg(long, value_name = "FILE")]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic scene and camera path.
    Synth,
    /// Render colour, depth and alpha for trajectory frames.
    Render {
        #[command(flatten)]
        #[serde(flatten)]
        inputs: SceneInputs,
        /// Only this frame; all frames by default.
        #[arg(long)]
        frame: Option<usize>,
    },
    /// Export per-pixel Plücker rays of one frame.
    Plucker {
        #[arg(long, value_name = "FILE")]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Visibility mask of one frame with respect to a reference frame.
    Mask {
        #[command(flatten)]
        #[serde(flatten)]
        inputs: SceneInputs,
        #[arg(long, default_value_t = 0)]
        reference: usize,
        /// Defaults to frame 1, or 0 for single-frame trajectories.
        #[arg(long)]
        frame: Option<usize>,
    },
    /// Masked reward between two PFM images.
    Reward {
        #[arg(long, value_name = "FILE")]
        rendered: PathBuf,
        #[arg(long, value_name = "FILE")]
        target: PathBuf,
        /// One-channel PFM; pixels above 0.5 count. Full image by default.
        #[arg(long, value_name = "FILE")]
        mask: Option<PathBuf>,
    },
    /// Reward as a function of pose perturbation magnitude.
    PerturbSweep {
        #[command(flatten)]
        #[serde(flatten)]
        inputs: SceneInputs,
    },
    /// Recover a perturbed camera pose by descending the reward.
    PoseRecover {
        #[command(flatten)]
        #[serde(flatten)]
        inputs: SceneInputs,
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Fit colours, means and opacities of a recoloured scene to rendered views.
    Fit {
        #[arg(long, value_name = "FILE")]
        scene: Option<PathBuf>,
    },
    /// Draw diffusion timesteps from the truncated normal.
    SampleT,
    /// Re-run a recorded command and compare its outputs with the manifest.
    #[serde(skip)]
    Replay {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Render { .. } => "render",
            Command::Plucker { .. } => "plucker",
            Command::Mask { .. } => "mask",
            Command::Reward { .. } => "reward",
            Command::PerturbSweep { .. } => "perturb-sweep",
            Command::PoseRecover { .. } => "pose-recover",
            Command::Fit { .. } => "fit",
            Command::SampleT => "sample-t",
            Command::Replay { .. } => "replay",
        }
    }

    /// Input paths, made absolute so a manifest stays valid from any directory.
    pub fn absolutize(&mut self) -> std::io::Result<()> {
        fn abs(p: &mut Option<PathBuf>) -> std::io::Result<()> {
            if let Some(path) = p {
                *path = std::path::absolute(&*path)?;
            }
            Ok(())
        }
        match self {
            Command::Render { inputs, .. }
            | Command::Mask { inputs, .. }
            | Command::PerturbSweep { inputs }
            | Command::PoseRecover { inputs, .. } => {
                abs(&mut inputs.scene)?;
                abs(&mut inputs.trajectory)
            }
            Command::Plucker { trajectory, .. } => abs(trajectory),
            Command::Fit { scene } => abs(scene),
            Command::Reward {
                rendered,
                target,
                mask,
            } => {
                *rendered = std::path::absolute(&*rendered)?;
                *target = std::path::absolute(&*target)?;
                abs(mask)
            }
            Command::Replay { manifest } => {
                *manifest = std::path::absolute(&*manifest)?;
                Ok(())
            }
            Command::Synth | Command::SampleT => Ok(()),
        }
    }

    /// Files the command reads.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut push = |p: &Option<PathBuf>| out.extend(p.clone());
        match self {
            Command::Render { inputs, .. }
            | Command::Mask { inputs, .. }
            | Command::PerturbSweep { inputs }
            | Command::PoseRecover { inputs, .. } => {
                push(&inputs.scene);
                push(&inputs.trajectory);
            }
            Command::Plucker { trajectory, .. } => push(trajectory),
            Command::Fit { scene } => push(scene),
            Command::Reward {
                rendered,
                target,
                mask,
            } => {
                push(&Some(rendered.clone()));
                push(&Some(target.clone()));
                push(mask);
            }
            Command::Replay { manifest } => push(&Some(manifest.clone())),
            Command::Synth | Command::SampleT => {}
        }
        out
    }
}
