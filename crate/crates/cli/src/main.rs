//! `supertraj`: run the segmentation pipeline stage by stage.
//!
//! Exit status is 0 on success, 1 for usage or configuration mistakes and
//! 2 when the input data is missing, malformed or yields nothing.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use supertraj::clustering::cluster;
use supertraj::config::Config;
use supertraj::eval::{self, presets, BenchmarkOptions, EvalReport, SyntheticSpec};
use supertraj::flow::FlowSequence;
use supertraj::frame::{frame_file_name, save_probability_png, BinaryMask, VideoSequence};
use supertraj::par;
use supertraj::segmentation::segment_video;
use supertraj::trajectory::{generate_trajectories, TrajectorySet};

#[derive(Parser, Debug)]
#[command(
    name = "supertraj",
    version,
    about = "Super-trajectory video object segmentation"
)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set neighbors=12`. Repeatable; applied
    /// after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads (0 uses every core).
    #[arg(long, env = "SUPERTRAJ_WORKERS", global = true)]
    workers: Option<usize>,

    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track dense point trajectories and write them to a text file.
    Track(TrackArgs),
    /// Group trajectories into super-trajectories.
    Cluster(ClusterArgs),
    /// Propagate a first-frame mask through the whole sequence.
    Segment(SegmentArgs),
    /// Segment and score every sequence of a dataset.
    Eval(EvalArgs),
    /// Render a synthetic sequence with exact flow and ground truth.
    Synth(SynthArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Directory of numbered frame PNGs.
    #[arg(long)]
    frames: PathBuf,
    /// Directory of `<t>.flo` / `<t>.rflo` files.
    #[arg(long)]
    flow: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Trajectory file written by `track`.
    #[arg(long)]
    trajectories: PathBuf,
    /// Frame directory the trajectories were tracked on.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Write one cluster-colored PNG per frame into this directory.
    #[arg(long)]
    viz: Option<PathBuf>,
    /// Frames to visualize (default: all).
    #[arg(long, value_delimiter = ',', requires = "viz")]
    viz_frames: Vec<usize>,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    flow: PathBuf,
    /// Binary mask of frame 1.
    #[arg(long)]
    mask: PathBuf,
    /// Output directory for masks and `diagnostics.json`.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write intermediate probability maps under `<out>/stages`.
    #[arg(long)]
    dump_stages: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory with one sub-directory per sequence.
    #[arg(long)]
    dataset: PathBuf,
    /// JSON report path (default `<dataset>/report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write predicted masks under this directory.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Record per-stage wall-clock times in the report.
    #[arg(long)]
    timings: bool,
    /// Evaluate once per value, e.g. `--sweep neighbors=4,8,12`.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    sweep: Option<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Built-in scene: translation, occlusion or entering.
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// JSON scene description.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Sequence directory to create.
    #[arg(long, short)]
    out: PathBuf,
}

/// Marks errors caused by the invocation rather than the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = matches!(
        e.downcast_ref::<supertraj::Error>(),
        Some(supertraj::Error::Config(_))
    );
    if config || e.downcast_ref::<Usage>().is_some() {
        1
    } else {
        2
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for pair in &cli.overrides {
        cfg.apply_override(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_inputs(frames: &Path, flow: &Path) -> Result<(VideoSequence, FlowSequence)> {
    let video = VideoSequence::load_dir(frames)?;
    let flows = FlowSequence::load_dir(flow, video.len())?;
    Ok((video, flows))
}

fn track(cfg: &Config, a: &TrackArgs) -> Result<()> {
    let (video, flows) = load_inputs(&a.frames, &a.flow)?;
    let trajs = generate_trajectories(&video, &flows, &cfg.segmentation.tracker)?;
    trajs.save(&a.out)?;
    println!("trajectories: {}", trajs.len());
    println!("mean length: {:.4}", trajs.mean_length());
    Ok(())
}

fn cluster_cmd(cfg: &Config, a: &ClusterArgs) -> Result<()> {
    let video = VideoSequence::load_dir(&a.frames)?;
    let trajs = TrajectorySet::load(&a.trajectories, video.width(), video.height(), video.len())?;
    let (sts, _, _) = cluster(&trajs, &video, &cfg.segmentation.clustering)?;
    sts.save(&a.out)?;
    println!("super-trajectories: {}", sts.len());
    if let Some(dir) = &a.viz {
        create_dir(dir)?;
        let frames: Vec<usize> = if a.viz_frames.is_empty() {
            (1..=video.len()).collect()
        } else {
            a.viz_frames.clone()
        };
        for t in frames {
            if t == 0 || t > video.len() {
                return Err(usage(format!("frame {t} is outside 1..={}", video.len())));
            }
            sts.render_frame(&trajs, t, 3)
                .save_png(&dir.join(frame_file_name(t, "png")))?;
        }
    }
    Ok(())
}

fn segment(cfg: &Config, a: &SegmentArgs) -> Result<()> {
    let (video, flows) = load_inputs(&a.frames, &a.flow)?;
    let mask = BinaryMask::load_png(&a.mask)?;
    let mut seg_cfg = cfg.segmentation;
    seg_cfg.keep_stages = a.dump_stages;
    let out = segment_video(&video, &flows, &mask, &seg_cfg)?;
    create_dir(&a.out)?;
    for (k, m) in out.masks.iter().enumerate() {
        m.save_png(&a.out.join(frame_file_name(k + 1, "png")))?;
    }
    let diag = serde_json::to_string_pretty(&out.diagnostics)?;
    fs::write(a.out.join("diagnostics.json"), diag + "\n")?;
    if let Some(st) = &out.stages {
        let (w, h) = (video.width(), video.height());
        for (name, maps) in [
            ("supertraj", &st.supertraj),
            ("pixel", &st.pixel),
            ("region_initial", &st.region_initial),
            ("region_final", &st.region_final),
        ] {
            let dir = a.out.join("stages").join(name);
            create_dir(&dir)?;
            for (k, m) in maps.iter().enumerate() {
                save_probability_png(w, h, m, &dir.join(frame_file_name(k + 1, "png")))?;
            }
        }
    }
    for (stage, secs) in &out.timings {
        log::info!("{stage}: {secs:.3} s");
    }
    let d = &out.diagnostics;
    println!("frames: {}", out.masks.len());
    println!(
        "super-trajectories: {} ({} labeled)",
        d.m, d.labeled_supertrajectories
    );
    println!("regions: {} ({} clamped)", d.regions, d.clamped_regions);
    Ok(())
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("sweep `{spec}` is not KEY=V1,V2,...")))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(usage(format!("sweep `{spec}` lists no values")));
    }
    Ok((key.trim().to_string(), values))
}

fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))
}

fn eval_cmd(cfg: &Config, a: &EvalArgs) -> Result<()> {
    let opts = BenchmarkOptions {
        timings: a.timings,
        masks_out: a.masks.clone(),
    };
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.dataset.join("report.json"));
    let runs: Vec<(Option<String>, Config)> = match &a.sweep {
        None => vec![(None, *cfg)],
        Some(spec) => {
            let (key, values) = parse_sweep(spec)?;
            values
                .into_iter()
                .map(|v| {
                    let mut c = *cfg;
                    c.set(&key, &v)?;
                    c.validate()?;
                    Ok((Some(format!("{key}={v}")), c))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut summary = Vec::new();
    let mut empty = false;
    for (label, c) in &runs {
        let report = eval::run_benchmark(&a.dataset, c, &opts)?;
        let path = match label {
            None => report_path.clone(),
            Some(l) => sweep_path(&report_path, l),
        };
        write_report(&report, &path)?;
        if let Some(l) = label {
            println!("== {l}");
        }
        print!("{}", report.table());
        summary.push((label.clone(), report.mean_iou));
        empty |= report.evaluated == 0;
    }
    if runs.len() > 1 {
        println!("== sweep");
        for (label, m) in &summary {
            let m = m.map_or("-".to_string(), |v| format!("{v:.4}"));
            println!("{:<24} {m:>9}", label.as_deref().unwrap_or(""));
        }
    }
    if empty {
        bail!("no sequence in {} could be evaluated", a.dataset.display());
    }
    Ok(())
}

/// `report.json` + `neighbors=4` -> `report-neighbors-4.json`.
fn sweep_path(base: &Path, label: &str) -> PathBuf {
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    let tag = label.replace('=', "-");
    base.with_file_name(format!("{stem}-{tag}.json"))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec: SyntheticSpec = match (&a.preset, &a.spec) {
        (Some(name), None) => presets::by_name(name).ok_or_else(|| {
            usage(format!(
                "unknown preset `{name}` (known: {})",
                presets::NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        _ => return Err(usage("give exactly one of --preset or --spec")),
    };
    let seq = eval::generate_synthetic(&spec)?;
    eval::write_sequence(&seq, &a.out)?;
    println!(
        "wrote {} frames of {}x{} to {}",
        seq.video.len(),
        spec.width,
        spec.height,
        a.out.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Track(a) => track(&cfg, a),
        Command::Cluster(a) => cluster_cmd(&cfg, a),
        Command::Segment(a) => segment(&cfg, a),
        Command::Eval(a) => eval_cmd(&cfg, a),
        Command::Synth(a) => synth(a),
        Command::Config => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = par::with_workers(cli.workers, || run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
