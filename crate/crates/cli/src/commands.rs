use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use camreward::camgeo::{plucker_embedding, Trajectory};
use camreward::image::{Image, Mask};
use camreward::io::{
    parse_re10k, read_mask_pfm, read_pfm_file, write_re10k, Re10kRecord, RunConfig,
};
use camreward::optim::{
    perturbed_start, pose_refine, sample_timestep, scene_fit, OptimSettings, TraceRow, View,
};
use camreward::raster::{render, RenderOptions, RenderStats};
use camreward::reward::{cro_loss, perturbation_sweep, psnr};
use camreward::rng::derive_seed;
use camreward::scene::{
    default_trajectory, read_scene_file, recolored, synth_scene, GaussianScene,
};
use camreward::visibility::{visibility_mask, warp_to_reference};
use serde::Serialize;
use serde_json::json;

use crate::cli::{Command, Common, SceneInputs};
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

/// Seeds a run consumed, by purpose.
pub type Seeds = BTreeMap<String, u64>;

/// Configuration file, then `--set`, then the dedicated flags.
pub fn resolve_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cwd = Path::new(".");
    let mut set = |key: &str, value: &str| {
        cfg.set(key, value, cwd)
            .map_err(|e| CliError::Usage(format!("--set {key}: {e}")))
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        set("seed", &s.to_string())?;
    }
    if let Some(l) = &common.layout {
        set("layout", l)?;
    }
    if let Some(w) = common.width {
        set("width_px", &w.to_string())?;
    }
    if let Some(h) = common.height {
        set("height_px", &h.to_string())?;
    }
    if let Some(f) = common.frames {
        set("frames", &f.to_string())?;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    for p in [
        &mut cfg.output_dir,
        &mut cfg.scene_path,
        &mut cfg.trajectory_path,
    ]
    .into_iter()
    .flatten()
    {
        *p = std::path::absolute(&*p)?;
    }
    cfg.validate()?;
    cfg.check_paths()?;
    Ok(cfg)
}

fn load_scene(path: Option<&PathBuf>, cfg: &RunConfig) -> CliResult<GaussianScene<f64>> {
    match path.or(cfg.scene_path.as_ref()) {
        Some(p) => Ok(read_scene_file(p)?),
        None => Ok(synth_scene(&cfg.scene_spec()?)?.0),
    }
}

fn load_trajectory(path: Option<&PathBuf>, cfg: &RunConfig) -> CliResult<Trajectory<f64>> {
    match path.or(cfg.trajectory_path.as_ref()) {
        Some(p) => {
            let file = File::open(p).map_err(|e| camreward::Error::file(p, e))?;
            Ok(parse_re10k(file, cfg.width_px, cfg.height_px)?)
        }
        None => Ok(default_trajectory(
            cfg.layout_kind()?,
            cfg.width_px,
            cfg.height_px,
            cfg.frames,
        )?),
    }
}

fn check_frame(traj: &Trajectory<f64>, index: usize, what: &str) -> CliResult<()> {
    if index >= traj.len() {
        return Err(CliError::Usage(format!(
            "{what} {index} is out of range for a {}-frame trajectory",
            traj.len()
        )));
    }
    Ok(())
}

fn settings(cfg: &RunConfig, max_iterations: usize) -> OptimSettings<f64> {
    OptimSettings {
        reward: cfg.reward(),
        render: RenderOptions::default(),
        policy: cfg.policy(max_iterations),
    }
}

fn scene_seed(cfg: &RunConfig, inputs_scene: Option<&PathBuf>, seeds: &mut Seeds) {
    if inputs_scene.or(cfg.scene_path.as_ref()).is_none() {
        seeds.insert("scene".into(), cfg.seed);
    }
}

/// Runs one recordable command, writing its artifacts into `out`.
pub fn execute(command: &Command, cfg: &RunConfig, out: &mut Outputs) -> CliResult<Seeds> {
    let mut seeds = Seeds::new();
    match command {
        Command::Synth => synth(cfg, out, &mut seeds)?,
        Command::Render { inputs, frame } => {
            scene_seed(cfg, inputs.scene.as_ref(), &mut seeds);
            render_cmd(inputs, *frame, cfg, out)?
        }
        Command::Plucker { trajectory, frame } => plucker(trajectory.as_ref(), *frame, cfg, out)?,
        Command::Mask {
            inputs,
            reference,
            frame,
        } => {
            scene_seed(cfg, inputs.scene.as_ref(), &mut seeds);
            mask_cmd(inputs, *reference, *frame, cfg, out)?
        }
        Command::Reward {
            rendered,
            target,
            mask,
        } => reward_cmd(rendered, target, mask.as_ref(), cfg, out)?,
        Command::PerturbSweep { inputs } => {
            scene_seed(cfg, inputs.scene.as_ref(), &mut seeds);
            seeds.insert("perturbation".into(), cfg.seed);
            sweep(inputs, cfg, out)?
        }
        Command::PoseRecover { inputs, frame } => {
            scene_seed(cfg, inputs.scene.as_ref(), &mut seeds);
            seeds.insert("start_pose".into(), cfg.seed);
            pose_recover(inputs, *frame, cfg, out)?
        }
        Command::Fit { scene } => {
            scene_seed(cfg, scene.as_ref(), &mut seeds);
            let s = derive_seed(cfg.seed, 2);
            seeds.insert("recolor".into(), s);
            fit(scene.as_ref(), s, cfg, out)?
        }
        Command::SampleT => {
            seeds.insert("timesteps".into(), cfg.seed);
            sample_t(cfg, out)?
        }
        Command::Replay { .. } => unreachable!("replay is handled by the caller"),
    }
    Ok(seeds)
}

fn synth(cfg: &RunConfig, out: &mut Outputs, seeds: &mut Seeds) -> CliResult<()> {
    seeds.insert("scene".into(), cfg.seed);
    let spec = cfg.scene_spec()?;
    let (scene, geometry) = synth_scene::<f64>(&spec)?;
    let traj = default_trajectory::<f64>(spec.layout, cfg.width_px, cfg.height_px, cfg.frames)?;
    out.scene("scene.gsc", &scene)?;
    out.bytes("trajectory.txt", write_re10k(&traj, None).as_bytes())?;
    out.json(
        "synth.json",
        &json!({
            "layout": spec.layout.as_str(),
            "seed": spec.seed,
            "gaussians": scene.len(),
            "primitives": geometry.primitives.len(),
            "frames": traj.len(),
            "width": cfg.width_px,
            "height": cfg.height_px,
        }),
    )
}

#[derive(Serialize)]
struct FrameRender {
    frame: usize,
    stats: RenderStats,
    mean_alpha: f64,
}

fn render_cmd(
    inputs: &SceneInputs,
    frame: Option<usize>,
    cfg: &RunConfig,
    out: &mut Outputs,
) -> CliResult<()> {
    let scene = load_scene(inputs.scene.as_ref(), cfg)?;
    let traj = load_trajectory(inputs.trajectory.as_ref(), cfg)?;
    let indices: Vec<usize> = match frame {
        Some(i) => {
            check_frame(&traj, i, "frame")?;
            vec![i]
        }
        None => (0..traj.len()).collect(),
    };
    let mut report = Vec::new();
    for i in indices {
        let r = render(&scene, &traj.frames()[i])?;
        out.pfm(&format!("color_{i:04}.pfm"), &r.color)?;
        out.png(&format!("color_{i:04}.png"), &r.color)?;
        out.pfm(&format!("depth_{i:04}.pfm"), &r.depth)?;
        out.pfm(&format!("alpha_{i:04}.pfm"), &r.alpha)?;
        let mean_alpha = r.alpha.data().iter().sum::<f64>() / r.alpha.pixel_count() as f64;
        report.push(FrameRender {
            frame: i,
            stats: r.stats,
            mean_alpha,
        });
    }
    out.json("render.json", &report)
}

fn plucker(
    trajectory: Option<&PathBuf>,
    frame: usize,
    cfg: &RunConfig,
    out: &mut Outputs,
) -> CliResult<()> {
    let traj = load_trajectory(trajectory, cfg)?;
    check_frame(&traj, frame, "frame")?;
    let map = plucker_embedding(&traj.frames()[frame]);
    let (w, h) = (map.width(), map.height());
    let direction = Image::from_fn(w, h, 3, |x, y, c| map.get(x, y).direction[c]);
    let moment = Image::from_fn(w, h, 3, |x, y, c| map.get(x, y).moment[c]);
    let norm_err = map
        .rays()
        .iter()
        .map(|r| (r.direction.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let orth_err = map
        .rays()
        .iter()
        .map(|r| r.moment.dot(r.direction).abs())
        .fold(0.0, f64::max);
    out.pfm(&format!("plucker_direction_{frame:04}.pfm"), &direction)?;
    out.pfm(&format!("plucker_moment_{frame:04}.pfm"), &moment)?;
    out.json(
        "plucker.json",
        &json!({
            "frame": frame,
            "width": w,
            "height": h,
            "max_direction_norm_error": norm_err,
            "max_moment_dot_direction": orth_err,
        }),
    )
}

fn mask_cmd(
    inputs: &SceneInputs,
    reference: usize,
    frame: Option<usize>,
    cfg: &RunConfig,
    out: &mut Outputs,
) -> CliResult<()> {
    let scene = load_scene(inputs.scene.as_ref(), cfg)?;
    let traj = load_trajectory(inputs.trajectory.as_ref(), cfg)?;
    let frame = frame.unwrap_or(usize::from(traj.len() > 1));
    check_frame(&traj, reference, "reference")?;
    check_frame(&traj, frame, "frame")?;
    let (f0, ft) = (&traj.frames()[reference], &traj.frames()[frame]);
    let depth_0 = render(&scene, f0)?.depth;
    let depth_t = render(&scene, ft)?.depth;
    let tolerance = cfg.tolerance()?;
    let vis = visibility_mask(&warp_to_reference(&depth_t, ft, f0)?, &depth_0, tolerance)?;
    out.mask("mask", &vis.mask)?;
    out.json(
        "mask.json",
        &json!({
            "reference": reference,
            "frame": frame,
            "coverage": vis.coverage,
            "tolerance": vis.tolerance,
        }),
    )
}

fn reward_cmd(
    rendered: &Path,
    target: &Path,
    mask: Option<&PathBuf>,
    cfg: &RunConfig,
    out: &mut Outputs,
) -> CliResult<()> {
    let r = read_pfm_file(rendered)?;
    let t = read_pfm_file(target)?;
    let m = match mask {
        Some(p) => read_mask_pfm(p)?,
        None => Mask::full(r.width(), r.height()),
    };
    let report = cro_loss(&r, &t, &m, &cfg.reward())?;
    let p = psnr(&r, &t, Some(&m))?;
    out.json("reward.json", &json!({ "reward": report, "psnr": p }))
}

#[derive(Serialize)]
struct SweepRow {
    rotation_deg: f64,
    translation_frac: f64,
    mean: f64,
    std: f64,
    trials: usize,
}

fn sweep(inputs: &SceneInputs, cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let scene = load_scene(inputs.scene.as_ref(), cfg)?;
    let traj = load_trajectory(inputs.trajectory.as_ref(), cfg)?;
    let gt = traj
        .frames()
        .iter()
        .map(|f| Ok(render(&scene, f)?.color))
        .collect::<CliResult<Vec<_>>>()?;
    let curve = perturbation_sweep(
        &scene,
        &traj,
        &gt,
        None,
        &cfg.perturbation(),
        &cfg.reward(),
        &RenderOptions::default(),
    )?;
    let rows: Vec<SweepRow> = curve
        .points
        .iter()
        .map(|p| SweepRow {
            rotation_deg: p.rotation_deg,
            translation_frac: p.translation_frac,
            mean: p.mean,
            std: p.std,
            trials: p.losses.len(),
        })
        .collect();
    out.csv("sweep.csv", &rows)?;
    out.json(
        "sweep.json",
        &json!({
            "spearman": curve.spearman,
            "minimum_at_zero": curve.minimum_at_zero(),
            "points": curve.points,
        }),
    )
}

fn write_trace(out: &mut Outputs, trace: &[TraceRow]) -> CliResult<()> {
    out.csv("trace.csv", trace)
}

fn pose_recover(
    inputs: &SceneInputs,
    frame: usize,
    cfg: &RunConfig,
    out: &mut Outputs,
) -> CliResult<()> {
    let scene = load_scene(inputs.scene.as_ref(), cfg)?;
    let traj = load_trajectory(inputs.trajectory.as_ref(), cfg)?;
    check_frame(&traj, frame, "frame")?;
    let gt = traj.frames()[frame];
    let target = render(&scene, &gt)?.color;
    let start = perturbed_start(
        &gt.pose,
        scene.centroid(),
        cfg.pose_rotation_deg,
        cfg.pose_translation_frac,
        cfg.seed,
    )?;
    let init = gt.with_pose(start);
    let mask = Mask::full(gt.width(), gt.height());
    let (refined, report) = pose_refine(
        &scene,
        &target,
        &mask,
        &init,
        &settings(cfg, cfg.max_iterations),
        Some(&gt.pose),
    )?;
    write_trace(out, &report.trace)?;
    let poses = [
        Re10kRecord::from_frame(&init).to_line(),
        Re10kRecord::from_frame(&refined).to_line(),
    ];
    out.bytes(
        "poses.txt",
        format!("{}\n{}\n", poses[0], poses[1]).as_bytes(),
    )?;
    let final_img = render(&scene, &refined)?.color;
    out.pfm("refined.pfm", &final_img)?;
    out.json(
        "report.json",
        &json!({
            "frame": frame,
            "iterations": report.iterations,
            "accepted_steps": report.accepted_steps,
            "initial_loss": report.initial_loss,
            "final_loss": report.final_loss,
            "rotation_error_rad": report.rotation_error,
            "translation_error_rel": report.translation_error,
            "stop_reason": report.stop_reason,
            "converged": report.converged,
        }),
    )
}

/// Held-out view indices spread evenly through `0..n`.
fn heldout_indices(n: usize, held: usize) -> Vec<usize> {
    (0..held).map(|j| (2 * j + 1) * n / (2 * held)).collect()
}

fn fit(
    scene_path: Option<&PathBuf>,
    recolor_seed: u64,
    cfg: &RunConfig,
    out: &mut Outputs,
) -> CliResult<()> {
    let gt_scene = load_scene(scene_path, cfg)?;
    let n = cfg.fit_views + cfg.heldout_views;
    if cfg.fit_views == 0 {
        return Err(CliError::Usage("fit_views must be positive".into()));
    }
    let traj = default_trajectory::<f64>(cfg.layout_kind()?, cfg.width_px, cfg.height_px, n)?;
    let held = heldout_indices(n, cfg.heldout_views);
    let mut seen_views = Vec::new();
    let mut held_views = Vec::new();
    for (i, f) in traj.frames().iter().enumerate() {
        let v = View::new(*f, render(&gt_scene, f)?.color);
        if held.contains(&i) {
            held_views.push(v);
        } else {
            seen_views.push(v);
        }
    }
    let init = recolored(&gt_scene, recolor_seed)?;
    let (fitted, report) = scene_fit(
        &init,
        &seen_views,
        &held_views,
        &settings(cfg, cfg.fit_iterations),
    )?;
    out.scene("fitted.gsc", &fitted)?;
    write_trace(out, &report.trace)?;
    out.json(
        "report.json",
        &json!({
            "seen_views": seen_views.len(),
            "heldout_views": held,
            "iterations": report.iterations,
            "initial_loss": report.initial_loss,
            "final_loss": report.final_loss,
            "heldout_initial_loss": report.heldout_initial_loss,
            "heldout_final_loss": report.heldout_final_loss,
            "stop_reason": report.stop_reason,
            "converged": report.converged,
        }),
    )
}

#[derive(Serialize)]
struct SampleRow {
    t: f64,
}

fn sample_t(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    if cfg.samples == 0 {
        return Err(CliError::Usage("samples must be positive".into()));
    }
    let spec = cfg.timestep(cfg.seed);
    let samples: Vec<f64> = sample_timestep(&spec, cfg.samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let rows: Vec<SampleRow> = samples.iter().map(|&t| SampleRow { t }).collect();
    out.csv("samples.csv", &rows)?;
    out.json(
        "summary.json",
        &json!({
            "spec": spec,
            "n": samples.len(),
            "mean": mean,
            "std": var.sqrt(),
            "min": samples.iter().copied().fold(f64::INFINITY, f64::min),
            "max": samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }),
    )
}
