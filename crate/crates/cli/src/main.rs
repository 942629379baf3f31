use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rpmkit::evalkit::{benchmark_pipeline, load_coco, recall_at};
use rpmkit::imaging::{load_manifest, write_pgm, write_png};
use rpmkit::rpm::{generate_proposals, read_proposal_stream, write_proposal_record, BoundingBox};
use rpmkit::synthgen::{generate_sequence, SynthConfig, MAX_TOOLS};
use rpmkit::tracking::{ingest_external_keyframes, TrackerConfig};
use rpmkit::{DetectorConfig, Frame, Pipeline, RpmConfig};

const PROPOSAL_INTENSITY: u8 = 255;
const GT_INTENSITY: u8 = 128;

#[derive(Parser, Debug)]
#[command(name = "rpmkit", version, about = "Keypoint-cluster region proposals for video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic sequence with exact ground truth.
    Synth(SynthArgs),
    /// Run the proposal pipeline over a sequence.
    Propose(ProposeArgs),
    /// Evaluate a proposal stream against COCO ground truth.
    Eval(EvalArgs),
    /// Measure per-stage latency and throughput.
    Bench(BenchArgs),
    /// Draw proposal and ground-truth outlines onto frames.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=MAX_TOOLS as i64))]
    tools: u8,
    #[arg(long, env = "RPMKIT_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    #[arg(long, default_value_t = 70)]
    min_size: usize,
    #[arg(long, default_value_t = 120)]
    max_size: usize,
    #[arg(long, default_value_t = 0.5)]
    min_speed: f64,
    #[arg(long, default_value_t = 1.5)]
    max_speed: f64,
    #[arg(long, default_value_t = 60.0)]
    texture_sigma: f64,
    #[arg(long, default_value_t = 3.0)]
    background_sigma: f64,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

/// Detector and proposal settings shared by `propose` and `bench`.
#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, default_value_t = 5.0)]
    window_seconds: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
    k_list: Vec<usize>,
    #[arg(long)]
    no_anchors: bool,
    #[arg(long, default_value_t = 0.8)]
    nms_iou: f64,
    #[arg(long, default_value_t = 2000)]
    max_keypoints: usize,
    #[arg(long, default_value_t = 8)]
    levels: usize,
    #[arg(long, default_value_t = 1.2)]
    scale_factor: f64,
    /// Clustering seed.
    #[arg(long, env = "RPMKIT_SEED", default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            max_keypoints: self.max_keypoints,
            n_levels: self.levels,
            scale_factor: self.scale_factor,
            ..DetectorConfig::default()
        }
    }

    fn rpm(&self) -> RpmConfig {
        RpmConfig {
            k_list: self.k_list.clone(),
            window_s: self.window_seconds,
            anchors_enabled: !self.no_anchors,
            nms_iou: self.nms_iou,
            rng_seed: self.seed,
            ..RpmConfig::default()
        }
    }
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, multiple = false, args = ["manifest", "keyframes"])]
struct ProposeArgs {
    /// Frame manifest; keypoints come from the built-in detector.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// External keyframe dump; one record per keyframe.
    #[arg(long)]
    keyframes: Option<PathBuf>,
    /// Output stream; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    proposals: PathBuf,
    /// COCO ground truth.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9", value_parser = parse_threshold)]
    iou_thresholds: Vec<f64>,
    /// Record file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Record file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write nulls instead of measured durations in the record.
    #[arg(long)]
    no_timing_values: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ImageFormat {
    Png,
    Pgm,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    format: ImageFormat,
}

fn parse_threshold(s: &str) -> std::result::Result<f64, String> {
    let t: f64 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if t > 0.0 && t <= 1.0 {
        Ok(t)
    } else {
        Err(format!("{t} is outside (0, 1]"))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        width: args.width,
        height: args.height,
        n_frames: args.frames,
        n_tools: args.tools as usize,
        tool_size_range: (args.min_size, args.max_size),
        speed_range: (args.min_speed, args.max_speed),
        texture_noise_sigma: args.texture_sigma,
        background_sigma: args.background_sigma,
        fps: args.fps,
        rng_seed: args.seed,
    };
    let (manifest, annotations, files) = generate_sequence(&config, &args.out)?;
    println!("frames:      {} in {}", manifest.len(), files.frames_dir.display());
    println!("manifest:    {}", files.manifest.display());
    println!("annotations: {} ({} boxes)", files.annotations.display(), annotations.annotations.len());
    Ok(())
}

fn cmd_propose(args: &ProposeArgs) -> Result<()> {
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let rpm = args.pipeline.rpm();
    let mut records = 0usize;

    if let Some(path) = &args.manifest {
        let manifest = load_manifest(path)?;
        let mut pipeline = Pipeline::new(args.pipeline.detector(), rpm, TrackerConfig::default())?;
        for (i, entry) in manifest.entries.iter().enumerate() {
            let frame = manifest.load_frame(i).with_context(|| format!("frame {}", entry.frame_id))?;
            let output = pipeline.process(&frame).with_context(|| format!("frame {}", entry.frame_id))?;
            write_proposal_record(&mut out, frame.frame_id, &output.proposals)?;
            records += 1;
        }
    } else if let Some(path) = &args.keyframes {
        rpm.validate()?;
        let store = ingest_external_keyframes(path)?;
        for kf in store.keyframes() {
            let proposals = generate_proposals(&store, kf.timestamp_s, (kf.width, kf.height), &rpm)
                .with_context(|| format!("frame {}", kf.frame_id))?;
            write_proposal_record(&mut out, kf.frame_id, &proposals)?;
            records += 1;
        }
    }
    out.flush()?;
    if let Some(path) = &args.out {
        eprintln!("wrote {records} records to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let annotations = load_coco(&args.gt)?;
    let records = read_proposal_stream(&args.proposals)?;
    let missing: Vec<u64> = records.iter().map(|r| r.frame_id).filter(|id| !annotations.has_frame(*id)).collect();
    if !missing.is_empty() {
        let ids: Vec<String> = missing.iter().map(u64::to_string).collect();
        bail!("proposal frame ids missing from ground truth: {}", ids.join(", "));
    }
    let mut proposals: BTreeMap<u64, Vec<BoundingBox>> = BTreeMap::new();
    for rec in &records {
        proposals.entry(rec.frame_id).or_default().extend(rec.proposals.iter().map(|p| p.bbox()));
    }
    let report = recall_at(&proposals, &annotations, &args.iou_thresholds);
    print!("{}", report.table());
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        for line in report.records() {
            writeln!(out, "{line}")?;
        }
        out.flush()?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let report = benchmark_pipeline(&manifest, &args.pipeline.detector(), &args.pipeline.rpm(), args.warmup)?;
    print!("{}", report.table());
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        writeln!(out, "{}", report.record(!args.no_timing_values))?;
        out.flush()?;
    }
    Ok(())
}

/// 1-px outline of `b`; pixels outside the frame are skipped.
fn draw_outline(frame: &mut Frame, b: &BoundingBox, value: u8) {
    let (w, h) = (frame.width as i64, frame.height as i64);
    let x0 = b.x.floor() as i64;
    let y0 = b.y.floor() as i64;
    let x1 = (b.right().ceil() as i64 - 1).max(x0);
    let y1 = (b.bottom().ceil() as i64 - 1).max(y0);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            frame.set(x as usize, y as usize, value);
        }
    };
    for x in x0.max(0)..=x1.min(w - 1) {
        put(x, y0);
        put(x, y1);
    }
    for y in y0.max(0)..=y1.min(h - 1) {
        put(x0, y);
        put(x1, y);
    }
}

fn cmd_render(args: &RenderArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let records = read_proposal_stream(&args.proposals)?;
    let annotations = args.gt.as_deref().map(load_coco).transpose()?;
    let mut by_frame: BTreeMap<u64, Vec<BoundingBox>> = BTreeMap::new();
    for rec in &records {
        by_frame.entry(rec.frame_id).or_default().extend(rec.proposals.iter().map(|p| p.bbox()));
    }
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    let ext = match args.format {
        ImageFormat::Png => "png",
        ImageFormat::Pgm => "pgm",
    };
    for (i, entry) in manifest.entries.iter().enumerate() {
        let mut frame = manifest.load_frame(i).with_context(|| format!("frame {}", entry.frame_id))?;
        if let Some(gt) = &annotations {
            for a in gt.for_frame(entry.frame_id) {
                draw_outline(&mut frame, &a.bbox, GT_INTENSITY);
            }
        }
        for b in by_frame.get(&entry.frame_id).into_iter().flatten() {
            draw_outline(&mut frame, b, PROPOSAL_INTENSITY);
        }
        let path = args.out_dir.join(format!("frame_{:06}.{ext}", entry.frame_id));
        match args.format {
            ImageFormat::Png => write_png(&path, &frame)?,
            ImageFormat::Pgm => write_pgm(&path, &frame)?,
        }
    }
    println!("rendered {} frames to {}", manifest.len(), args.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Propose(a) => cmd_propose(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
