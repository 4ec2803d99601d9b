use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use regiontrack::cache::{build_templates, load_templates, load_volume, save_templates, save_volume, volume_path};
use regiontrack::config::{apply, load_config, parse_scheme};
use regiontrack::mesh_io::load_mesh;
use regiontrack::sequence::{generate, read_poses, Sequence};
use regiontrack::study::{run_study, study_header, study_row, StudyInput};
use regiontrack::track::{read_trajectory, timing, track_sequence, write_trajectory, TrackOptions};
use regiontrack::{shapes, StdClock};
use regiontrack_core::geometry::Vec3;
use regiontrack_core::image::Rgb;
use regiontrack_core::metrics::evaluate;
use regiontrack_core::synth::{Background, Occluder, SequenceSpec, Trajectory};
use regiontrack_core::viewspace::TemplateConfig;
use regiontrack_core::{DistanceVolume, PinholeCamera, TrackerConfig, TriangleMesh};

const EXIT_DEGRADED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "regiontrack", version, about = "Region-based RGB-D object pose tracking")]
struct Cli {
    /// Worker threads for template building and perturbation trials.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the view templates and distance volume for a mesh.
    Precompute(PrecomputeArgs),
    /// Write a synthetic RGB-D sequence with ground-truth poses.
    Generate(GenerateArgs),
    /// Track an object through a sequence.
    Track(TrackArgs),
    /// Compare a trajectory against ground truth.
    Metrics(MetricsArgs),
    /// Perturb ground-truth poses and measure how often tracking recovers.
    PerturbStudy(StudyArgs),
}

#[derive(Args)]
struct PrecomputeArgs {
    /// OBJ/PLY file, or `builtin:NAME` for a procedural shape.
    mesh: String,
    /// Template file; the volume goes next to it with a `.vol` extension.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    n_contour: usize,
    #[arg(long, default_value_t = 50)]
    n_interior: usize,
    /// Voxel edge in meters (default: diameter / 128).
    #[arg(long)]
    voxel: Option<f64>,
    /// Volume padding around the model bounds, meters.
    #[arg(long, default_value_t = 0.1)]
    padding: f64,
}

#[derive(Args)]
struct GenerateArgs {
    out: PathBuf,
    #[arg(long)]
    mesh: String,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 525.0)]
    focal: f64,
    /// `uniform`, `tiles` or `matched`.
    #[arg(long, default_value = "uniform")]
    background: String,
    #[arg(long, default_value_t = 32)]
    tile_size: usize,
    /// Object colors as `r,g,b;r,g,b;...`.
    #[arg(long, default_value = "200,60,40")]
    colors: String,
    #[arg(long, default_value_t = 0.6)]
    distance: f64,
    #[arg(long, default_value_t = -0.5)]
    tilt: f64,
    #[arg(long, default_value_t = 0.0)]
    orbit_radius: f64,
    #[arg(long, default_value_t = 0.0)]
    angular_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    inplane_rate: f64,
    /// Translation sweep amplitude `x,y,z` in meters.
    #[arg(long, default_value = "0,0,0")]
    sweep: String,
    #[arg(long, default_value_t = 0.0)]
    depth_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    color_noise: f64,
    #[arg(long, default_value_t = 0.02)]
    dropout: f64,
    #[arg(long, default_value_t = 1.5)]
    wall_depth: f64,
    /// Add a gray square sliding across the object.
    #[arg(long)]
    occluder: bool,
}

#[derive(Args)]
struct TrackArgs {
    sequence: PathBuf,
    #[arg(long)]
    templates: PathBuf,
    /// Trajectory CSV to write.
    #[arg(short, long)]
    out: PathBuf,
    /// `key = value` tracker settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Iterations per pyramid level, coarsest first, e.g. `2-2-1`.
    #[arg(long)]
    scheme: Option<String>,
    /// Color posterior only.
    #[arg(long)]
    no_cloud: bool,
    /// Initial pose as 12 row-major values; default is the ground truth of frame 0.
    #[arg(long)]
    init: Option<String>,
    /// Write frames with the tracked contour drawn in to `<out dir>/overlay/`.
    #[arg(long)]
    overlay: bool,
    /// Write foreground posterior maps to this directory.
    #[arg(long)]
    dump_posterior: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    trajectory: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    mesh: String,
    /// Also write the report as a one-row CSV.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    sequence: PathBuf,
    #[arg(long)]
    templates: PathBuf,
    #[arg(long)]
    mesh: String,
    #[arg(short, long)]
    out: PathBuf,
    /// Perturbation angles in degrees.
    #[arg(long, default_value = "5,15,25,35,45", value_delimiter = ',')]
    thetas: Vec<f64>,
    #[arg(long, default_value = "2-2-2,0-0-1", value_delimiter = ',')]
    schemes: Vec<String>,
    /// Trials per frame and angle.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Use only the first N frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Translation bound in meters (default: diameter / 10).
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_cloud: bool,
}

/// Error that maps to the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn mesh_arg(spec: &str) -> anyhow::Result<(TriangleMesh, String)> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Ok((shapes::builtin(name)?, name.to_string()));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return usage(format!("mesh file {spec} not found"));
    }
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    Ok((load_mesh(path)?, id))
}

fn parse_vec3(s: &str) -> anyhow::Result<Vec3> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>()?;
    if v.len() != 3 {
        bail!("expected x,y,z");
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn parse_colors(s: &str) -> anyhow::Result<Vec<Rgb>> {
    s.split(';')
        .map(|c| {
            let v: Vec<u8> = c.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>()?;
            if v.len() != 3 {
                bail!("color needs three components: {c:?}");
            }
            Ok([v[0], v[1], v[2]])
        })
        .collect()
}

fn tracker_config(path: Option<&Path>, lambda: Option<f64>, scheme: Option<&str>, no_cloud: bool) -> anyhow::Result<TrackerConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => TrackerConfig::default(),
    };
    if let Some(l) = lambda {
        cfg.lambda = l;
    }
    if let Some(s) = scheme {
        apply(&mut cfg, "iters_per_level", s).map_err(Usage)?;
        cfg.pyramid_levels = cfg.iters_per_level.len();
    }
    if no_cloud {
        cfg.cloud_weighting = false;
    }
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_caches(path: &Path) -> anyhow::Result<(regiontrack_core::TemplateSet, Option<DistanceVolume>)> {
    if !path.exists() {
        return usage(format!("template file {} not found", path.display()));
    }
    let set = load_templates(path)?;
    let vp = volume_path(path);
    let vol = if vp.exists() {
        Some(load_volume(&vp)?)
    } else {
        log::warn!("no distance volume at {}; cloud weighting disabled", vp.display());
        None
    };
    Ok((set, vol))
}

fn precompute(a: &PrecomputeArgs) -> anyhow::Result<u8> {
    let (mesh, id) = mesh_arg(&a.mesh)?;
    let cfg = TemplateConfig {
        n_contour: a.n_contour,
        n_interior: a.n_interior,
        ..TemplateConfig::default()
    };
    let cam = cfg.camera_for(&mesh)?;
    let t0 = Instant::now();
    let set = build_templates(&mesh, &cam, &cfg, &id)?;
    let t1 = Instant::now();
    let vol = match a.voxel {
        Some(v) => DistanceVolume::build(&mesh, v, a.padding)?,
        None => DistanceVolume::build_default(&mesh, a.padding)?,
    };
    let t2 = Instant::now();
    save_templates(&a.out, &set)?;
    let vp = volume_path(&a.out);
    save_volume(&vp, &vol)?;
    let size = |p: &Path| std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
    println!(
        "templates: {} views in {:.2} s -> {} ({} bytes)",
        set.templates.len(),
        (t1 - t0).as_secs_f64(),
        a.out.display(),
        size(&a.out)
    );
    println!(
        "volume: {:?} voxels in {:.2} s -> {} ({} bytes)",
        vol.dims,
        (t2 - t1).as_secs_f64(),
        vp.display(),
        size(&vp)
    );
    Ok(0)
}

fn generate_cmd(a: &GenerateArgs) -> anyhow::Result<u8> {
    let (mesh, id) = mesh_arg(&a.mesh)?;
    let background = match a.background.as_str() {
        "uniform" => Background::Uniform([40, 160, 60]),
        "tiles" => Background::Tiles {
            size: a.tile_size,
            a: [40, 160, 60],
            b: [90, 90, 90],
        },
        "matched" => Background::FgMatched { size: a.tile_size },
        b => return usage(format!("unknown background {b:?}")),
    };
    let spec = SequenceSpec {
        mesh_id: id,
        trajectory: Trajectory {
            distance: a.distance,
            tilt: a.tilt,
            orbit_radius: a.orbit_radius,
            angular_rate: a.angular_rate,
            inplane_rate: a.inplane_rate,
            sweep: parse_vec3(&a.sweep).map_err(|e| Usage(format!("--sweep: {e}")))?,
        },
        n_frames: a.frames,
        background,
        wall_depth: a.wall_depth,
        colors: parse_colors(&a.colors).map_err(|e| Usage(format!("--colors: {e}")))?,
        depth_noise: a.depth_noise,
        color_noise: a.color_noise,
        dropout: a.dropout,
        occluder: a.occluder.then(|| Occluder {
            size: 0.08,
            start: Vec3::new(-0.2, 0.0, a.distance - 0.15),
            end: Vec3::new(0.2, 0.0, a.distance - 0.15),
            color: [120, 120, 120],
        }),
    };
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let cam = PinholeCamera::vga(a.focal);
    let t0 = Instant::now();
    let seq = generate(&a.out, &spec, &mesh, &cam, a.seed)?;
    println!("{} frames -> {} in {:.2} s", seq.n_frames, a.out.display(), t0.elapsed().as_secs_f64());
    Ok(0)
}

fn track_cmd(a: &TrackArgs) -> anyhow::Result<u8> {
    let cfg = tracker_config(a.config.as_deref(), a.lambda, a.scheme.as_deref(), a.no_cloud)?;
    if !a.sequence.join("camera.json").exists() {
        return usage(format!("{} is not a sequence directory", a.sequence.display()));
    }
    let seq = Sequence::open(&a.sequence)?;
    let (set, vol) = load_caches(&a.templates)?;
    let init = match &a.init {
        Some(s) => {
            let v: Vec<f64> = s
                .split([',', ' '])
                .filter(|t| !t.is_empty())
                .map(|t| t.parse())
                .collect::<Result<_, _>>()
                .map_err(|_| Usage("--init needs 12 numbers".into()))?;
            let arr: [f64; 12] = v.try_into().map_err(|_| Usage("--init needs 12 numbers".into()))?;
            regiontrack_core::RigidPose::from_row_major(&arr)
        }
        None => *seq
            .ground_truth()
            .context("no --init given and no ground truth to start from")?
            .first()
            .context("empty ground truth")?,
    };
    let overlay_dir = a
        .overlay
        .then(|| a.out.parent().unwrap_or(Path::new(".")).join("overlay"));
    let opts = TrackOptions {
        overlay_dir: overlay_dir.as_deref(),
        posterior_dir: a.dump_posterior.as_deref(),
    };
    let reports = track_sequence(&seq, &set, vol.as_ref(), &cfg, init, &opts, &StdClock::new())?;
    write_trajectory(&a.out, &reports)?;
    let lost = reports.iter().filter(|r| r.lost).count();
    let rows = read_trajectory(&a.out)?;
    let t = timing(&rows);
    println!(
        "{} frames, {} lost; per frame {:.2} ms mean, {:.2} ms median",
        reports.len(),
        lost,
        t.mean_ms,
        t.median_ms
    );
    Ok(if lost > 0 { EXIT_DEGRADED } else { 0 })
}

fn metrics_cmd(a: &MetricsArgs) -> anyhow::Result<u8> {
    let (mesh, _) = mesh_arg(&a.mesh)?;
    for p in [&a.trajectory, &a.gt] {
        if !p.exists() {
            return usage(format!("{} not found", p.display()));
        }
    }
    let rows = read_trajectory(&a.trajectory)?;
    let gt = read_poses(&a.gt)?;
    let est: Vec<_> = rows.iter().map(|r| r.pose).collect();
    let m = evaluate(&est, &gt, &mesh.vertices, mesh.diameter()?)?;
    let t = timing(&rows);
    println!("frames {}", m.frames);
    println!(
        "translation RMSE mm (x y z): {:.3} {:.3} {:.3}",
        m.t_rmse_mm[0], m.t_rmse_mm[1], m.t_rmse_mm[2]
    );
    println!(
        "rotation RMSE deg, Euler x-y-z of R_est R_gt^T: {:.3} {:.3} {:.3}",
        m.r_rmse_deg[0], m.r_rmse_deg[1], m.r_rmse_deg[2]
    );
    println!("LineMOD score: {:.4}", m.linemod_score);
    println!(
        "runtime ms: mean {:.2} median {:.2} p95 {:.2}",
        t.mean_ms, t.median_ms, t.p95_ms
    );
    let p = t.phase_mean_ms;
    println!(
        "phases ms: preprocess {:.2} view {:.2} contour {:.2} icp {:.2} solve {:.2} histogram {:.2}",
        p[0], p[1], p[2], p[3], p[4], p[5]
    );
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record([
            "frames", "t_rmse_x_mm", "t_rmse_y_mm", "t_rmse_z_mm", "r_rmse_x_deg", "r_rmse_y_deg", "r_rmse_z_deg",
            "linemod_score", "mean_ms", "median_ms", "p95_ms", "preprocess_ms", "view_ms", "contour_ms", "icp_ms",
            "solve_ms", "histogram_ms",
        ])?;
        let mut row = vec![m.frames.to_string()];
        row.extend(m.t_rmse_mm.iter().chain(&m.r_rmse_deg).map(|v| v.to_string()));
        row.push(m.linemod_score.to_string());
        row.extend([t.mean_ms, t.median_ms, t.p95_ms].iter().chain(&p).map(|v| v.to_string()));
        w.write_record(&row)?;
        w.flush()?;
    }
    Ok(0)
}

fn study_cmd(a: &StudyArgs) -> anyhow::Result<u8> {
    let cfg = tracker_config(a.config.as_deref(), None, None, a.no_cloud)?;
    let schemes = a
        .schemes
        .iter()
        .map(|s| parse_scheme(s).ok_or_else(|| Usage(format!("bad scheme {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(s) = schemes.iter().find(|s| s.len() > cfg.pyramid_levels) {
        return usage(format!("scheme {s:?} has more levels than the pyramid"));
    }
    let (mesh, _) = mesh_arg(&a.mesh)?;
    if !a.sequence.join("camera.json").exists() {
        return usage(format!("{} is not a sequence directory", a.sequence.display()));
    }
    let seq = Sequence::open(&a.sequence)?;
    let (set, vol) = load_caches(&a.templates)?;
    let n_frames = a.frames.unwrap_or(seq.n_frames).min(seq.n_frames);
    let frames = (0..n_frames).map(|i| seq.frame(i)).collect::<Result<Vec<_>, _>>()?;
    let gt = seq.ground_truth()?;
    let diameter = mesh.diameter()?;
    let input = StudyInput {
        templates: &set,
        volume: vol.as_ref(),
        config: &cfg,
        frames: &frames,
        ground_truth: &gt[..n_frames],
        points: &mesh.vertices,
        diameter,
    };
    let cells = run_study(&input, &a.thetas, &schemes, a.n, a.t_max.unwrap_or(diameter / 10.0), a.seed)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(study_header())?;
    for c in &cells {
        w.write_record(study_row(c))?;
        println!(
            "theta {:>5.1} scheme {:<7} score {:.3}",
            c.theta_deg,
            regiontrack::config::format_scheme(&c.scheme),
            c.score
        );
    }
    w.flush()?;
    Ok(0)
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.cmd {
        Cmd::Precompute(a) => precompute(a),
        Cmd::Generate(a) => generate_cmd(a),
        Cmd::Track(a) => track_cmd(a),
        Cmd::Metrics(a) => metrics_cmd(a),
        Cmd::PerturbStudy(a) => study_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let input = e.downcast_ref::<Usage>().is_some()
                || e.downcast_ref::<regiontrack::Error>().is_some_and(|e| e.is_input_error());
            ExitCode::from(if input { EXIT_USAGE } else { EXIT_DEGRADED })
        }
    }
}
