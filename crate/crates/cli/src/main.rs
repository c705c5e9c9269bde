//! Single-binary front end: `gen-data`, `train`, `eval`, `viz`, `bench`.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 data/file errors,
//! 4 numeric/contract failures.

use clap::{Parser, Subcommand, ValueEnum};
use rvfuse_core::config::RunConfig;
use rvfuse_core::error::CoreError;
use rvfuse_core::eval::evaluate_frames;
use rvfuse_core::io::{
    list_dataset, read_checkpoint, read_frame_with_warnings, sha256_file, write_checkpoint,
    write_frame, write_manifest, write_ppm, Frame, Manifest,
};
use rvfuse_core::nn::{prepare_frame, train, FusedModel, PreparedFrame, TrainMode, Trainer};
use rvfuse_core::synth::{derive_seed, generate_scene, make_frame};
use rvfuse_core::viz;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "rvfuse",
    about = "Range-view LiDAR/camera fusion: synthetic data, training, evaluation, visualization, benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fused,
    LidarOnly,
}

impl From<Mode> for TrainMode {
    fn from(m: Mode) -> TrainMode {
        match m {
            Mode::Fused => TrainMode::Fused,
            Mode::LidarOnly => TrainMode::LidarOnly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of frame files plus a manifest.
    GenData {
        /// Run configuration (key = value text file); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Number of frames.
        #[arg(long)]
        count: usize,
    },
    /// Train a model on a dataset directory and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "fused")]
        mode: Mode,
        /// Per-step training log (step, lr, losses).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the ground-truth oracle) on a dataset.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for report.txt, report.csv and confusion.ppm.
        #[arg(long)]
        out_dir: PathBuf,
        /// Feed ground truth as predictions (metric plumbing check).
        #[arg(long)]
        oracle: bool,
        #[arg(long, value_enum, default_value = "fused")]
        mode: Mode,
    },
    /// Render a frame: camera overlay with projected points, range image,
    /// and per-point class map (predicted when a checkpoint is given).
    Viz {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Time the forward pass over repeated runs.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to load; a fresh initialization is timed when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Frame file to run on; a synthetic frame is generated when omitted.
        #[arg(long)]
        frame: Option<PathBuf>,
        #[arg(long, default_value = "100")]
        runs: usize,
        #[arg(long, default_value = "10")]
        warmup: usize,
        /// Optional report file (mirrors stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &CoreError) -> i32 {
    match err {
        CoreError::Config { .. } | CoreError::SceneConfig(_) => 2,
        CoreError::Io { .. }
        | CoreError::BadMagic { .. }
        | CoreError::Truncated { .. }
        | CoreError::UnsupportedVersion { .. }
        | CoreError::MalformedSweep(_) => 3,
        CoreError::Geometry(_)
        | CoreError::NoFovOverlap(_)
        | CoreError::Contract(_)
        | CoreError::NonFiniteLoss { .. }
        | CoreError::NoLabeledPoints
        | CoreError::CheckpointMismatch(_) => 4,
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CoreError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_frames(dir: &Path) -> Result<Vec<Frame>, CoreError> {
    let mut frames = Vec::new();
    for path in list_dataset(dir)? {
        let (frame, warnings) = read_frame_with_warnings(&path)?;
        for w in warnings {
            eprintln!("warning: {}: {w}", path.display());
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn cmd_gen_data(config: &Option<PathBuf>, out: &Path, count: usize) -> Result<(), CoreError> {
    let cfg = load_config(config)?;
    std::fs::create_dir_all(out).map_err(|e| CoreError::io(out.display().to_string(), e))?;
    let rig = cfg.rig();
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let frame_seed = derive_seed(cfg.seed, i as u64);
        let scene = generate_scene(&cfg.scene, frame_seed)?;
        let frame = make_frame(&scene, &rig, cfg.scene.range_noise_std)?;
        let name = format!("frame_{i:05}.rfrm");
        let path = out.join(&name);
        write_frame(&frame, &path)?;
        entries.push((name, sha256_file(&path)?));
    }
    let manifest = Manifest {
        config_digest: cfg.digest_hex(),
        seed: cfg.seed,
        entries,
    };
    write_manifest(&manifest, &out.join("manifest.txt"))?;
    println!(
        "wrote {count} frames to {} (config digest {})",
        out.display(),
        cfg.digest_hex()
    );
    Ok(())
}

fn cmd_train(
    config: &Option<PathBuf>,
    dataset: &Path,
    out: &Path,
    mode: TrainMode,
    log_path: &Option<PathBuf>,
) -> Result<(), CoreError> {
    let cfg = load_config(config)?;
    let frames = load_frames(dataset)?;
    let prepared: Vec<PreparedFrame<f32>> = frames
        .iter()
        .map(|f| prepare_frame(f, mode))
        .collect::<Result<_, _>>()?;
    drop(frames);
    let train_cfg = cfg.train_config(mode);
    let (mut model, log) = train(&prepared, train_cfg)?;
    write_checkpoint(&mut model, out, cfg.seed, &cfg.digest())?;

    let mut log_text = String::from("# step lr focal box total\n");
    log_text.push_str(&format!(
        "# mode = {}, config digest = {}, seed = {}\n",
        mode.name(),
        cfg.digest_hex(),
        cfg.seed
    ));
    for line in &log {
        log_text.push_str(&format!(
            "{} {:.8} {:.6} {:.6} {:.6}{}\n",
            line.step,
            line.lr,
            line.focal,
            line.box_l1,
            line.total,
            if line.empty_batch { " empty-batch" } else { "" }
        ));
    }
    match log_path {
        Some(p) => {
            std::fs::write(p, log_text).map_err(|e| CoreError::io(p.display().to_string(), e))?
        }
        None => print!("{log_text}"),
    }
    println!(
        "trained {} steps ({}); checkpoint written to {}",
        log.len(),
        mode.name(),
        out.display()
    );
    Ok(())
}

fn model_from_checkpoint(cfg: &RunConfig, path: &Path) -> Result<FusedModel<f32>, CoreError> {
    let ckpt = read_checkpoint(path)?;
    if ckpt.config_digest != cfg.digest() {
        eprintln!(
            "warning: checkpoint config digest {} differs from the supplied config {}",
            hex32(&ckpt.config_digest),
            cfg.digest_hex()
        );
    }
    let trainer = Trainer::<f32>::new(cfg.train_config(TrainMode::Fused));
    let mut model = trainer.model;
    rvfuse_core::io::apply_checkpoint(&mut model, &ckpt)?;
    Ok(model)
}

fn hex32(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_eval(
    config: &Option<PathBuf>,
    checkpoint: &Option<PathBuf>,
    dataset: &Path,
    out_dir: &Path,
    oracle: bool,
    mode: TrainMode,
) -> Result<(), CoreError> {
    let cfg = load_config(config)?;
    let frames = load_frames(dataset)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CoreError::io(out_dir.display().to_string(), e))?;
    let eval_cfg = cfg.eval_config(mode);
    let report = if oracle {
        evaluate_frames::<f32>(None, &frames, &eval_cfg)?
    } else {
        let model = model_from_checkpoint(&cfg, checkpoint.as_ref().expect("clap enforces"))?;
        evaluate_frames(Some(&model), &frames, &eval_cfg)?
    };

    let header = format!(
        "# config digest = {}, seed = {}, mode = {}\n",
        cfg.digest_hex(),
        cfg.seed,
        if oracle { "oracle" } else { mode.name() }
    );
    let text = header.clone() + &report.render_text();
    std::fs::write(out_dir.join("report.txt"), text)
        .map_err(|e| CoreError::io(out_dir.display().to_string(), e))?;
    std::fs::write(out_dir.join("report.csv"), header + &report.render_csv())
        .map_err(|e| CoreError::io(out_dir.display().to_string(), e))?;
    let (grid, w, h) = viz::render_confusion_grid(&report.seg.confusion, 32);
    write_ppm(&out_dir.join("confusion.ppm"), w, h, &grid)?;
    println!("{}", report.render_text());
    println!("reports written to {}", out_dir.display());
    Ok(())
}

fn cmd_viz(
    frame_path: &Path,
    out_dir: &Path,
    config: &Option<PathBuf>,
    checkpoint: &Option<PathBuf>,
) -> Result<(), CoreError> {
    let (frame, warnings) = read_frame_with_warnings(frame_path)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CoreError::io(out_dir.display().to_string(), e))?;

    let mapping = rvfuse_core::fusion::compute_pixel_mapping(
        &frame.range_image,
        &frame.range_cfg,
        &frame.calibration,
    )?;

    // Class labels: predictions when a checkpoint is supplied, ground truth
    // otherwise.
    let labels = match checkpoint {
        Some(ckpt_path) => {
            let cfg = load_config(config)?;
            let model = model_from_checkpoint(&cfg, ckpt_path)?;
            let prepared = prepare_frame::<f32>(&frame, TrainMode::Fused)?;
            let pred = model
                .forward(&prepared.lidar_input, &prepared.rgb, &prepared.mapping)?
                .0;
            let img = &frame.range_image;
            let (h, w) = (img.height(), img.width());
            let mut labels = vec![None; h * w];
            for row in 0..h {
                for col in 0..w {
                    if !img.is_occupied(row, col) {
                        continue;
                    }
                    let mut best = (0usize, f64::NEG_INFINITY);
                    for k in 0..rvfuse_core::nn::NUM_CLASSES {
                        let v = pred.class_logits.at3(row, col, k) as f64;
                        if v > best.1 {
                            best = (k, v);
                        }
                    }
                    labels[row * w + col] =
                        rvfuse_core::eval::SemanticClass::from_u8(best.0 as u8);
                }
            }
            labels
        }
        None => viz::cell_labels(&frame),
    };

    let (h, w, _) = frame.camera_image.dims3();
    let overlay = viz::render_overlay(&frame, &mapping, &labels);
    write_ppm(&out_dir.join("overlay.ppm"), w, h, &overlay)?;

    let img = &frame.range_image;
    let gray = viz::render_range_gray(img, 70.0);
    write_ppm(&out_dir.join("range.ppm"), img.width(), img.height(), &gray)?;
    let classes = viz::render_class_map(img, &labels);
    write_ppm(
        &out_dir.join("classmap.ppm"),
        img.width(),
        img.height(),
        &classes,
    )?;
    println!("visualizations written to {}", out_dir.display());
    Ok(())
}

fn cmd_bench(
    config: &Option<PathBuf>,
    checkpoint: &Option<PathBuf>,
    frame: &Option<PathBuf>,
    runs: usize,
    warmup: usize,
    out: &Option<PathBuf>,
) -> Result<(), CoreError> {
    let cfg = load_config(config)?;
    let frame = match frame {
        Some(p) => read_frame_with_warnings(p)?.0,
        None => {
            let scene = generate_scene(&cfg.scene, derive_seed(cfg.seed, 0))?;
            make_frame(&scene, &cfg.rig(), cfg.scene.range_noise_std)?
        }
    };
    let model = match checkpoint {
        Some(p) => model_from_checkpoint(&cfg, p)?,
        None => Trainer::<f32>::new(cfg.train_config(TrainMode::Fused)).model,
    };
    let prepared = prepare_frame::<f32>(&frame, TrainMode::Fused)?;

    for _ in 0..warmup {
        let _ = model.forward(&prepared.lidar_input, &prepared.rgb, &prepared.mapping)?;
    }
    let mut samples_ms = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t0 = Instant::now();
        let _ = model.forward(&prepared.lidar_input, &prepared.rgb, &prepared.mapping)?;
        samples_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = samples_ms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = samples_ms.iter().sum::<f64>() / runs as f64;
    let median = if runs % 2 == 1 {
        sorted[runs / 2]
    } else {
        (sorted[runs / 2 - 1] + sorted[runs / 2]) / 2.0
    };
    let mut report = String::new();
    report.push_str(&format!(
        "# forward-pass timing, config digest = {}\n",
        cfg.digest_hex()
    ));
    report.push_str(&format!("runs = {runs}\nwarmup = {warmup}\n"));
    report.push_str(&format!("mean_ms = {mean:.3}\n"));
    report.push_str(&format!("median_ms = {median:.3}\n"));
    report.push_str(&format!(
        "min_ms = {:.3}\nmax_ms = {:.3}\n",
        sorted[0],
        sorted[runs - 1]
    ));
    print!("{report}");
    if let Some(p) = out {
        let mut full = report;
        full.push_str("# samples_ms\n");
        for s in &samples_ms {
            full.push_str(&format!("{s:.3}\n"));
        }
        let mut f =
            std::fs::File::create(p).map_err(|e| CoreError::io(p.display().to_string(), e))?;
        f.write_all(full.as_bytes())
            .map_err(|e| CoreError::io(p.display().to_string(), e))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CoreError> {
    match &cli.command {
        Command::GenData { config, out, count } => cmd_gen_data(config, out, *count),
        Command::Train {
            config,
            dataset,
            out,
            mode,
            log,
        } => cmd_train(config, dataset, out, (*mode).into(), log),
        Command::Eval {
            config,
            checkpoint,
            dataset,
            out_dir,
            oracle,
            mode,
        } => cmd_eval(config, checkpoint, dataset, out_dir, *oracle, (*mode).into()),
        Command::Viz {
            frame,
            out_dir,
            config,
            checkpoint,
        } => cmd_viz(frame, out_dir, config, checkpoint),
        Command::Bench {
            config,
            checkpoint,
            frame,
            runs,
            warmup,
            out,
        } => cmd_bench(config, checkpoint, frame, *runs, *warmup, out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
