//! Command-line entry point. Exit status: 0 success, 1 usage error, 2 data
//! error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use geocache_core::align::{add_depth_noise, align_depth_trimmed, apply_alignment, NoiseSpec};
use geocache_core::cache::{Cache3D, DepthMap, PointCloud, PostedFrame};
use geocache_core::fusion::{
    encode_guidance, fuse_concat, fuse_explicit, guidance_latent_mask, make_noisy_latent, masked_latent, Conditioner,
    InLayerWeights, LatentVideo, NoiseSchedulePoint, StubGenerator, DEFAULT_CHANNELS, DEFAULT_MAX_VIEWS,
    DEFAULT_PATCH,
};
use geocache_core::geometry::{
    interpolate_trajectory, offset_trajectory, unproject, Camera, Intrinsics, Pose, Trajectory, Vec2, Vec3,
};
use geocache_core::grid::{Grid, Image, Mask};
use geocache_core::metrics::{
    epipolar_consistency, oracle_correspondences, psnr_with_support, ssim, MetricReport, DEFAULT_EPIPOLAR_THRESHOLD,
};
use geocache_core::pipeline::{run_autoregressive, AutoregressiveOptions, DepthProvider, DEFAULT_CHUNK_LEN};
use geocache_core::splat::{render_guidance, GuidanceVideo};
use geocache_core::synthworld::{make_scene, posed_frame, raster_ground_truth_at, Scene, SceneDepth, SceneSpec};
use serde_json::json;

use crate::error::{write, Error, Result};
use crate::latent::{read_weights, write_latent};
use crate::pfm::{read_pfm, write_pfm};
use crate::raster::{read_image, read_mask};
use crate::schema::{load_scene, load_trajectory, save_scene, save_trajectory};
use crate::server::{serve, AppState};
use crate::store::{
    create_dir, frame_path, list_png, load_cache, load_sequence, save_cache, save_rendered, save_sequence, save_video,
};
use crate::view::render_view;

#[derive(Debug, Parser)]
#[command(name = "geocache", version, about = "3D cache building, splatting and guided generation tools")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene along a trajectory to PNG + PFM frames.
    Synth {
        /// Scene JSON: explicit primitives or a generation recipe. Defaults
        /// to a generated scene from `--seed`.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Defaults to one 128x96 camera at the origin looking down +z.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Add seeded Gaussian depth noise, as a fraction of the 5-95
        /// percentile depth spread.
        #[arg(long, default_value_t = 0.0)]
        depth_noise: f64,
    },
    /// Build a point-cloud cache from frame sequences written by `synth`.
    BuildCache {
        /// Sequence directories. Static mode uses the first; dynamic mode
        /// makes one view per directory.
        #[arg(long = "frames", required = true)]
        frames: Vec<PathBuf>,
        /// Frame indices that become views (static mode).
        #[arg(long, value_delimiter = ',', default_value = "0")]
        views: Vec<usize>,
        /// Temporal length of a static cache.
        #[arg(long, default_value_t = 1)]
        len: usize,
        /// One cache entry per frame instead of broadcasting.
        #[arg(long)]
        dynamic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render cache guidance (image, mask, depth) along a trajectory.
    Render {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        splat_radius: f64,
        /// Z-test all views together into one frame per camera, as the
        /// session server does, instead of one directory per view.
        #[arg(long)]
        union: bool,
    },
    /// Fuse per-view guidance into conditioning features.
    Fuse {
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// A G3CL file (maxpool, concat) or a cache directory (explicit).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        splat_radius: f64,
        #[arg(long, default_value_t = DEFAULT_PATCH)]
        patch: usize,
        #[arg(long, default_value_t = DEFAULT_CHANNELS)]
        channels: usize,
        /// In-layer output features for seeded weights (default `2C`).
        #[arg(long)]
        features: Option<usize>,
        /// G3CL in-layer weights; seeded from `--seed` when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Diffusion time of the noisy latent, in `[0, 1]`.
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Fit `tgt ≈ s * src + t` and print `s t residual_rms support`.
    Align {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        /// PNG mask; defaults to every pixel valid in both maps.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        trim: f64,
        /// Write the aligned source depth here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a long video chunk by chunk, updating the cache in between.
    Autoregress {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHUNK_LEN)]
        chunk_len: usize,
        /// `oracle` (needs `--scene`) or `dir:<path>` with `depth_NNNN.pfm`.
        #[arg(long)]
        depth: String,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        splat_radius: f64,
        /// Keep the initial cache for every chunk.
        #[arg(long)]
        no_update: bool,
        #[arg(long, default_value_t = 0.0)]
        trim: f64,
    },
    /// PSNR/SSIM of predictions against ground truth.
    Eval {
        /// A PNG or a directory of PNGs.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// With `--trajectory`, also score epipolar consistency of oracle
        /// correspondences between consecutive frames.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPIPOLAR_THRESHOLD)]
        threshold: f64,
    },
    /// Serve interactive renders of a cache over HTTP and web sockets.
    Serve {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 0.0)]
        splat_radius: f64,
    },
    /// Trajectory utilities.
    Traj {
        #[command(subcommand)]
        op: TrajOp,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Maxpool,
    Concat,
    Explicit,
}

#[derive(Debug, Subcommand)]
pub enum TrajOp {
    /// Resample keyframes into `--frames` cameras.
    Interpolate {
        #[arg(long)]
        keyframes: PathBuf,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shift every camera sideways along its own right axis.
    Offset {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lateral: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Arc around a pivot on the +z axis, starting at the origin.
    Orbit {
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
        degrees: f64,
        /// Pivot distance from the first camera.
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 128.0)]
        focal: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Outcome {
    let seed = cli.seed;
    match cli.command {
        Command::Synth {
            spec,
            trajectory,
            out,
            depth_noise,
        } => synth(seed, spec.as_deref(), trajectory.as_deref(), &out, depth_noise),
        Command::BuildCache {
            frames,
            views,
            len,
            dynamic,
            out,
        } => build_cache(&frames, &views, len, dynamic, &out),
        Command::Render {
            cache,
            trajectory,
            out,
            splat_radius,
            union,
        } => render_cmd(&cache, &trajectory, &out, splat_radius, union),
        Command::Fuse {
            strategy,
            cache,
            trajectory,
            out,
            splat_radius,
            patch,
            channels,
            features,
            weights,
            tau,
        } => fuse(FuseArgs {
            seed,
            strategy,
            cache,
            trajectory,
            out,
            splat_radius,
            patch,
            channels,
            features,
            weights,
            tau,
        }),
        Command::Align {
            src,
            tgt,
            mask,
            trim,
            out,
        } => align(&src, &tgt, mask.as_deref(), trim, out.as_deref()),
        Command::Autoregress {
            cache,
            trajectory,
            chunk_len,
            depth,
            scene,
            out,
            splat_radius,
            no_update,
            trim,
        } => {
            let opts = AutoregressiveOptions {
                chunk_len,
                splat_radius,
                update_cache: !no_update,
                align_trim: trim,
            };
            autoregress(seed, &cache, &trajectory, &depth, scene.as_deref(), &out, opts)
        }
        Command::Eval {
            pred,
            gt,
            mask,
            report,
            scene,
            trajectory,
            threshold,
        } => eval(EvalArgs {
            seed,
            pred,
            gt,
            mask,
            report,
            scene,
            trajectory,
            threshold,
        }),
        Command::Serve {
            cache,
            host,
            port,
            splat_radius,
        } => serve_cmd(seed, &cache, &host, port, splat_radius),
        Command::Traj { op } => traj(op),
    }
}

fn probe_camera() -> Camera {
    Camera::new(Intrinsics::centered(128.0, 128, 96).expect("valid probe"), Pose::identity())
}

fn synth(seed: u64, spec: Option<&Path>, trajectory: Option<&Path>, out: &Path, depth_noise: f64) -> Outcome {
    let scene = match spec {
        Some(path) => load_scene(path, Some(seed))?,
        None => make_scene(&SceneSpec::new(seed, 6, 1.0, 1.0))?,
    };
    let traj = match trajectory {
        Some(path) => load_trajectory(path)?,
        None => Trajectory::constant(probe_camera(), 1)?,
    };
    let mut frames: Vec<PostedFrame> = traj
        .frames()
        .iter()
        .enumerate()
        .map(|(t, cam)| posed_frame(&scene, cam, t))
        .collect();
    if depth_noise > 0.0 {
        for (t, f) in frames.iter_mut().enumerate() {
            let spec = NoiseSpec {
                ratio: depth_noise,
                seed: seed.wrapping_add(t as u64),
            };
            f.depth = add_depth_noise(&f.depth, &spec)?;
        }
    }
    save_sequence(out, &frames)?;
    save_scene(&out.join("scene.json"), &scene)?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn build_cache(dirs: &[PathBuf], views: &[usize], len: usize, dynamic: bool, out: &Path) -> Outcome {
    let cache = if dynamic {
        let videos = dirs.iter().map(|d| load_sequence(d)).collect::<Result<Vec<_>>>()?;
        Cache3D::build_dynamic(&videos)?
    } else {
        if dirs.len() != 1 {
            return Err(Failure::Usage("static caches are built from exactly one --frames directory".into()));
        }
        let seq = load_sequence(&dirs[0])?;
        let picked = views
            .iter()
            .map(|&i| {
                seq.get(i).cloned().ok_or_else(|| {
                    Error::format(format!("view frame {i} is out of range for {} frames", seq.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Cache3D::build_multiview(&picked, len)?
    };
    save_cache(out, &cache)?;
    let points: usize = cache.point_counts().iter().flatten().sum();
    println!(
        "cache {}x{} ({} points over all entries) written to {}",
        cache.len(),
        cache.views(),
        points,
        out.display()
    );
    Ok(())
}

fn check_lengths(cache: &Cache3D, traj: &Trajectory) -> Result<()> {
    if cache.len() != traj.len() {
        return Err(Error::format(format!(
            "trajectory has {} frames but the cache has temporal length {}",
            traj.len(),
            cache.len()
        )));
    }
    Ok(())
}

fn render_cmd(cache: &Path, trajectory: &Path, out: &Path, radius: f64, union: bool) -> Outcome {
    let cache = load_cache(cache)?;
    let traj = load_trajectory(trajectory)?;
    check_lengths(&cache, &traj)?;
    create_dir(out)?;
    if union {
        for (t, cam) in traj.frames().iter().enumerate() {
            save_rendered(out, t, &render_view(&cache, cam, t, radius)?)?;
        }
    } else {
        for g in render_guidance(&cache, &traj, radius)? {
            let dir = out.join(format!("view_{:02}", g.view));
            create_dir(&dir)?;
            for (t, f) in g.frames.iter().enumerate() {
                save_rendered(&dir, t, f)?;
            }
        }
    }
    println!("rendered {} frames x {} views to {}", traj.len(), cache.views(), out.display());
    Ok(())
}

struct FuseArgs {
    seed: u64,
    strategy: Strategy,
    cache: PathBuf,
    trajectory: PathBuf,
    out: PathBuf,
    splat_radius: f64,
    patch: usize,
    channels: usize,
    features: Option<usize>,
    weights: Option<PathBuf>,
    tau: f64,
}

fn fuse(a: FuseArgs) -> Outcome {
    let cache = load_cache(&a.cache)?;
    let traj = load_trajectory(&a.trajectory)?;
    check_lengths(&cache, &traj)?;
    if a.strategy == Strategy::Explicit {
        let mut grid = Vec::with_capacity(cache.len());
        let mut cams = Vec::with_capacity(cache.len());
        let mut prev: Option<(&[std::sync::Arc<PointCloud>], std::sync::Arc<PointCloud>)> = None;
        for t in 0..cache.len() {
            let row = cache.row(t);
            // Keep broadcast rows shared.
            let merged = match &prev {
                Some((p, m)) if p.iter().zip(row).all(|(a, b)| std::sync::Arc::ptr_eq(a, b)) => m.clone(),
                _ => {
                    let clouds: Vec<&PointCloud> = row.iter().map(|c| c.as_ref()).collect();
                    std::sync::Arc::new(fuse_explicit(&clouds))
                }
            };
            grid.push(vec![merged.clone()]);
            cams.push(vec![*cache.camera(t, 0)]);
            prev = Some((row, merged));
        }
        let fused = Cache3D::from_entries(grid, cams)?;
        save_cache(&a.out, &fused)?;
        println!("merged {} views into one per time step at {}", cache.views(), a.out.display());
        return Ok(());
    }

    let guidance: Vec<GuidanceVideo> = render_guidance(&cache, &traj, a.splat_radius)?;
    let latents = match a.strategy {
        Strategy::Concat => {
            let masked = guidance
                .iter()
                .map(|g| masked_latent(&encode_guidance(g, a.patch, a.channels)?, &guidance_latent_mask(g, a.patch)?))
                .collect::<geocache_core::Result<Vec<_>>>()?;
            fuse_concat(&masked, DEFAULT_MAX_VIEWS)?
        }
        Strategy::Maxpool => {
            let weights = match &a.weights {
                Some(p) => read_weights(p)?,
                None => InLayerWeights::seeded(a.seed, a.channels, a.features.unwrap_or(2 * a.channels))?,
            };
            let cond = Conditioner {
                patch: a.patch,
                channels: a.channels,
                weights,
            };
            let (w, h) = traj.dims();
            if w % a.patch != 0 || h % a.patch != 0 {
                return Err(Error::format(format!("{w}x{h} frames are not divisible by patch {}", a.patch)).into());
            }
            let zeros = LatentVideo::zeros([traj.len(), a.channels, h / a.patch, w / a.patch], a.patch)?;
            let sched = NoiseSchedulePoint::cosine(a.tau, a.seed)?;
            cond.condition(&guidance, &make_noisy_latent(&zeros, &sched))?
        }
        Strategy::Explicit => unreachable!("handled above"),
    };
    write_latent(&a.out, &latents)?;
    println!("wrote {:?} features to {}", latents.dims(), a.out.display());
    Ok(())
}

fn align(src: &Path, tgt: &Path, mask: Option<&Path>, trim: f64, out: Option<&Path>) -> Outcome {
    let d = read_pfm(src)?;
    let t = read_pfm(tgt)?;
    let mask: Mask = match mask {
        Some(p) => read_mask(p)?,
        None => Grid::filled(d.width(), d.height(), true),
    };
    let a = align_depth_trimmed(&d, &t, &mask, trim)?;
    println!("{} {} {} {}", a.scale, a.shift, a.residual_rms, a.support);
    if let Some(out) = out {
        write_pfm(out, &apply_alignment(&d, &a))?;
    }
    Ok(())
}

/// `depth_NNNN.pfm` files, indexed by trajectory frame.
struct DirDepth(PathBuf);

impl DepthProvider for DirDepth {
    fn depth(&mut self, frame: usize, camera: &Camera, _image: &Image) -> geocache_core::Result<DepthMap> {
        let path = frame_path(&self.0, "depth", frame, "pfm");
        let d = read_pfm(&path).map_err(|e| geocache_core::Error::invalid(e.to_string()))?;
        d.values().ensure_dims(camera.width(), camera.height())?;
        Ok(d)
    }
}

fn autoregress(
    seed: u64,
    cache: &Path,
    trajectory: &Path,
    depth: &str,
    scene: Option<&Path>,
    out: &Path,
    opts: AutoregressiveOptions,
) -> Outcome {
    let mut provider: Box<dyn DepthProvider> = match depth {
        "oracle" => {
            let scene = scene.ok_or_else(|| Failure::Usage("--depth oracle needs --scene".into()))?;
            Box::new(SceneDepth {
                scene: load_scene(scene, Some(seed))?,
            })
        }
        d => match d.strip_prefix("dir:") {
            Some(dir) if !dir.is_empty() => Box::new(DirDepth(PathBuf::from(dir))),
            _ => {
                return Err(Failure::Usage(format!(
                    "--depth must be `oracle` or `dir:<path>`, got {d:?}"
                )))
            }
        },
    };
    let cache = load_cache(cache)?;
    let traj = load_trajectory(trajectory)?;
    let run = run_autoregressive(&cache, &traj, &mut StubGenerator, provider.as_mut(), &opts)?;

    save_video(out, "frame", &run.frames)?;
    save_cache(&out.join("cache"), &run.cache)?;
    let mut log = String::from("# chunk start end scale shift residual_rms support\n");
    let mut chunks = Vec::new();
    for (k, rec) in run.chunks.iter().enumerate() {
        if let Some(a) = rec.alignment {
            let _ = writeln!(
                log,
                "{k} {} {} {} {} {} {}",
                rec.range.start, rec.range.end, a.scale, a.shift, a.residual_rms, a.support
            );
        }
        chunks.push(json!({
            "range": [rec.range.start, rec.range.end],
            "views": rec.views,
            "mean_coverage": rec.mean_coverage(),
            "coverage": rec.coverage,
            "alignment": rec.alignment.map(|a| json!({
                "scale": a.scale,
                "shift": a.shift,
                "residual_rms": a.residual_rms,
                "support": a.support,
            })),
        }));
    }
    write(&out.join("alignment.log"), log.as_bytes())?;
    let manifest = json!({
        "seed": seed,
        "generator": "stub",
        "frames": run.frames.len(),
        "chunk_len": opts.chunk_len,
        "splat_radius": opts.splat_radius,
        "update_cache": opts.update_cache,
        "align_trim": opts.align_trim,
        "depth": depth,
        "plan": run.plan.chunks.iter().map(|r| [r.start, r.end]).collect::<Vec<_>>(),
        "chunks": chunks,
        "final_views": run.cache.views(),
    });
    write(&out.join("run.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    println!(
        "generated {} frames in {} chunks; final cache has {} views",
        run.frames.len(),
        run.plan.len(),
        run.cache.views()
    );
    Ok(())
}

struct EvalArgs {
    seed: u64,
    pred: PathBuf,
    gt: PathBuf,
    mask: Option<PathBuf>,
    report: Option<PathBuf>,
    scene: Option<PathBuf>,
    trajectory: Option<PathBuf>,
    threshold: f64,
}

fn png_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        list_png(path)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// Mean consistency of oracle correspondences between consecutive cameras.
fn epipolar_score(scene: &Scene, traj: &Trajectory, threshold: f64) -> Result<Option<f64>> {
    let mut scores = Vec::new();
    for (t, pair) in traj.frames().windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if (a.center() - b.center()).norm() < 1e-12 {
            continue;
        }
        let (_, depth) = raster_ground_truth_at(scene, a, t);
        let mut points: Vec<Vec3> = Vec::new();
        for y in (0..a.height()).step_by(4) {
            for x in (0..a.width()).step_by(4) {
                if let Some(d) = depth.get(x, y) {
                    let p = unproject(&Vec2::new(x as f64, y as f64), d, a)?;
                    if scene.visible_from(&p, b, t + 1, 1e-6) {
                        points.push(p);
                    }
                }
            }
        }
        let pairs = oracle_correspondences(&points, a, b);
        if !pairs.is_empty() {
            scores.push(epipolar_consistency(&pairs, a, b, threshold)?);
        }
    }
    Ok((!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64))
}

fn eval(a: EvalArgs) -> Outcome {
    let preds = png_inputs(&a.pred)?;
    let gts = png_inputs(&a.gt)?;
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(Error::format(format!(
            "{} prediction images vs {} ground-truth images",
            preds.len(),
            gts.len()
        ))
        .into());
    }
    let mask = a.mask.as_deref().map(read_mask).transpose()?;
    let epipolar = match (&a.scene, &a.trajectory) {
        (Some(s), Some(t)) => epipolar_score(&load_scene(s, Some(a.seed))?, &load_trajectory(t)?, a.threshold)?,
        (None, None) => None,
        _ => return Err(Failure::Usage("--scene and --trajectory go together".into())),
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (p, g) in preds.iter().zip(&gts) {
        let (pi, gi) = (read_image(p)?, read_image(g)?);
        let (psnr, pixel_support) = psnr_with_support(&pi, &gi, mask.as_ref())?;
        let report = MetricReport {
            psnr,
            ssim: Some(ssim(&pi, &gi)?),
            epipolar_score: epipolar,
            pixel_support,
        };
        println!(
            "{}\tpsnr {:.3}\tssim {:.4}\tpixels {}",
            p.display(),
            report.psnr,
            report.ssim.unwrap_or(f64::NAN),
            report.pixel_support
        );
        rows.push(json!({
            "pred": p,
            "gt": g,
            "psnr": report.psnr,
            "ssim": report.ssim,
            "pixel_support": report.pixel_support,
        }));
        reports.push(report);
    }
    let n = reports.len() as f64;
    let mean_psnr = reports.iter().map(|r| r.psnr).sum::<f64>() / n;
    let mean_ssim = reports.iter().filter_map(|r| r.ssim).sum::<f64>() / n;
    println!("mean\tpsnr {mean_psnr:.3}\tssim {mean_ssim:.4}");
    if let Some(e) = epipolar {
        println!("epipolar consistency {e:.4} at {} px", a.threshold);
    }
    if let Some(path) = &a.report {
        let doc = json!({
            "frames": rows,
            "mean_psnr": mean_psnr,
            "mean_ssim": mean_ssim,
            "epipolar_score": epipolar,
            "epipolar_threshold": a.threshold,
        });
        write(path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    }
    Ok(())
}

fn serve_cmd(seed: u64, cache: &Path, host: &str, port: u16, radius: f64) -> Outcome {
    let cache = load_cache(cache)?;
    let runtime = tokio::runtime::Runtime::new().map_err(Error::io(Path::new("tokio runtime")))?;
    runtime.block_on(async {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(Error::io(Path::new(&addr)))?;
        println!("listening on http://{}", listener.local_addr().map_err(Error::io(Path::new(&addr)))?);
        serve(listener, AppState::new(cache, radius, seed)).await
    })?;
    Ok(())
}

fn traj(op: TrajOp) -> Outcome {
    match op {
        TrajOp::Interpolate { keyframes, frames, out } => {
            let keys = load_trajectory(&keyframes)?;
            save_trajectory(&out, &interpolate_trajectory(keys.frames(), frames)?)?;
        }
        TrajOp::Offset {
            trajectory,
            lateral,
            out,
        } => {
            save_trajectory(&out, &offset_trajectory(&load_trajectory(&trajectory)?, lateral))?;
        }
        TrajOp::Orbit {
            frames,
            degrees,
            radius,
            width,
            height,
            focal,
            out,
        } => {
            if frames == 0 {
                return Err(Failure::Usage("--frames must be at least 1".into()));
            }
            let k = Intrinsics::centered(focal, width, height)?;
            let pivot = Vec3::new(0.0, 0.0, radius);
            let cams = (0..frames)
                .map(|i| {
                    let s = if frames == 1 { 0.0 } else { i as f64 / (frames - 1) as f64 };
                    let a = (degrees * s).to_radians();
                    let c = pivot + Vec3::new(-radius * a.sin(), 0.0, -radius * a.cos());
                    Ok(Camera::new(k, Pose::look_at(c, pivot, Vec3::new(0.0, -1.0, 0.0))?))
                })
                .collect::<Result<Vec<_>>>()?;
            save_trajectory(&out, &Trajectory::new(cams)?)?;
        }
    }
    Ok(())
}
