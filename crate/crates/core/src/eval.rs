//! IoU scoring, synthetic sequences with exact flow and ground truth, and
//! dataset benchmarking.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowPair, FlowSequence};
use crate::frame::{frame_file_name, numbered_files, BinaryMask, Frame, VideoSequence};
use crate::par;
use crate::segmentation::{segment_video, Diagnostics};

/// Intersection over union. Two empty masks score `empty_value`.
pub fn iou(mask: &BinaryMask, gt: &BinaryMask, empty_value: f64) -> Result<f64> {
    if mask.width() != gt.width() || mask.height() != gt.height() {
        return Err(Error::Contract(format!(
            "mask is {}x{} but ground truth is {}x{}",
            mask.width(),
            mask.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in mask.as_slice().iter().zip(gt.as_slice()) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 {
        empty_value
    } else {
        inter as f64 / union as f64
    })
}

/// Deterministic per-pixel noise around a base color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Texture {
    pub color: [u8; 3],
    #[serde(default)]
    pub amplitude: u8,
    #[serde(default)]
    pub seed: u64,
}

impl Texture {
    pub fn flat(color: [u8; 3]) -> Self {
        Self {
            color,
            amplitude: 0,
            seed: 0,
        }
    }

    pub fn at(&self, x: i64, y: i64) -> [u8; 3] {
        if self.amplitude == 0 {
            return self.color;
        }
        let h = splitmix(self.seed ^ splitmix((x as u64) << 32 ^ (y as u64 & 0xffff_ffff)));
        let span = 2 * self.amplitude as i64 + 1;
        let mut out = [0u8; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let r = ((h >> (k * 16)) & 0xffff) as i64 % span - self.amplitude as i64;
            *o = (self.color[k] as i64 + r).clamp(0, 255) as u8;
        }
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// Anchored at its top-left corner.
    Rectangle { width: f64, height: f64 },
    /// Anchored at its center.
    Disk { radius: f64 },
}

fn default_appears() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Anchor position in the frame where the object appears.
    pub position: [f64; 2],
    /// Displacement per frame.
    pub velocity: [f64; 2],
    pub texture: Texture,
    /// First frame containing the object.
    #[serde(default = "default_appears")]
    pub appears: usize,
    /// Whether the object belongs to the ground-truth foreground.
    #[serde(default = "default_true")]
    pub foreground: bool,
}

impl ObjectSpec {
    pub fn anchor(&self, t: usize) -> [f64; 2] {
        let dt = t as f64 - self.appears as f64;
        [
            self.position[0] + dt * self.velocity[0],
            self.position[1] + dt * self.velocity[1],
        ]
    }

    /// Whether pixel `(x, y)` is covered at frame `t`.
    pub fn covers(&self, t: usize, x: usize, y: usize) -> bool {
        if t < self.appears {
            return false;
        }
        let [ax, ay] = self.anchor(t);
        let (x, y) = (x as f64, y as f64);
        match self.shape {
            Shape::Rectangle { width, height } => {
                x >= ax && x < ax + width && y >= ay && y < ay + height
            }
            Shape::Disk { radius } => (x - ax).powi(2) + (y - ay).powi(2) <= radius * radius,
        }
    }

    fn color(&self, t: usize, x: usize, y: usize) -> [u8; 3] {
        let [ax, ay] = self.anchor(t);
        self.texture.at(
            (x as f64 - ax).floor() as i64,
            (y as f64 - ay).floor() as i64,
        )
    }
}

/// A vertical bar drawn over everything during an inclusive frame span.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccluderSpec {
    pub x: usize,
    pub width: usize,
    pub frames: [usize; 2],
    pub texture: Texture,
}

impl OccluderSpec {
    pub fn covers(&self, t: usize, x: usize) -> bool {
        t >= self.frames[0] && t <= self.frames[1] && x >= self.x && x < self.x + self.width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub background: Texture,
    /// Drawn in order; later objects are on top.
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub occluder: Option<OccluderSpec>,
}

/// Which layer is visible at a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Background,
    Object(usize),
    Occluder,
}

#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub video: VideoSequence,
    pub flows: FlowSequence,
    pub gt: Vec<BinaryMask>,
    pub first_mask: BinaryMask,
    /// Visible layer per pixel, per frame.
    pub layers: Vec<Vec<Layer>>,
}

impl SyntheticSequence {
    /// Visible pixels of object `i` in frame `t`.
    pub fn object_mask(&self, t: usize, i: usize) -> BinaryMask {
        let w = self.video.width();
        let layers = &self.layers[t - 1];
        BinaryMask::from_fn(w, self.video.height(), |x, y| {
            layers[y * w + x] == Layer::Object(i)
        })
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames < 2 {
            return Err(Error::Config(
                "synthetic sequences need positive size and at least 2 frames".into(),
            ));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.appears < 1 || o.appears > self.frames {
                return Err(Error::Config(format!(
                    "object {i} appears at frame {} of {}",
                    o.appears, self.frames
                )));
            }
            for t in [o.appears, self.frames] {
                let inside = (0..self.height).any(|y| (0..self.width).any(|x| o.covers(t, x, y)));
                if !inside {
                    return Err(Error::Config(format!(
                        "object {i} is entirely outside frame {t}"
                    )));
                }
            }
        }
        if let Some(b) = &self.occluder {
            if b.width == 0 || b.frames[0] < 1 || b.frames[0] > b.frames[1] {
                return Err(Error::Config(
                    "occluder needs a positive width and an ordered frame span".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn layer(&self, t: usize, x: usize, y: usize) -> Layer {
        if self.occluder.is_some_and(|b| b.covers(t, x)) {
            return Layer::Occluder;
        }
        self.objects
            .iter()
            .enumerate()
            .rev()
            .find(|(_, o)| o.covers(t, x, y))
            .map_or(Layer::Background, |(i, _)| Layer::Object(i))
    }

    fn render(&self, t: usize, layers: &[Layer]) -> Frame {
        let w = self.width;
        Frame::from_fn(w, self.height, |x, y| match layers[y * w + x] {
            Layer::Background => self.background.at(x as i64, y as i64),
            Layer::Object(i) => self.objects[i].color(t, x, y),
            Layer::Occluder => self
                .occluder
                .expect("occluder layer")
                .texture
                .at(x as i64, y as i64),
        })
    }

    fn flow(&self, layers: &[Layer], sign: f32) -> FlowField {
        let v = layers
            .iter()
            .map(|l| match l {
                Layer::Object(i) => {
                    let v = self.objects[*i].velocity;
                    [sign * v[0] as f32, sign * v[1] as f32]
                }
                _ => [0.0, 0.0],
            })
            .collect();
        FlowField::new(self.width, self.height, v).expect("flow matches frame size")
    }
}

/// Render frames, exact forward/backward flow and ground truth.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let layers: Vec<Vec<Layer>> = par::map_range(spec.frames, |k| {
        let t = k + 1;
        (0..w * h).map(|i| spec.layer(t, i % w, i / w)).collect()
    });
    let frames = par::map_range(spec.frames, |k| spec.render(k + 1, &layers[k]));
    let pairs = (1..spec.frames)
        .map(|t| FlowPair {
            forward: spec.flow(&layers[t - 1], 1.0),
            backward: spec.flow(&layers[t], -1.0),
        })
        .collect();
    let gt: Vec<BinaryMask> = layers
        .iter()
        .map(|l| {
            BinaryMask::new(
                w,
                h,
                l.iter()
                    .map(|x| matches!(x, Layer::Object(i) if spec.objects[*i].foreground))
                    .collect(),
            )
            .expect("mask matches frame size")
        })
        .collect();
    Ok(SyntheticSequence {
        video: VideoSequence::new(frames)?,
        flows: FlowSequence::new(pairs)?,
        first_mask: gt[0].clone(),
        gt,
        layers,
    })
}

/// Dataset layout of one sequence directory.
pub struct SequencePaths {
    pub frames: PathBuf,
    pub flow: PathBuf,
    pub mask: PathBuf,
    pub gt: PathBuf,
}

impl SequencePaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            frames: dir.join("frames"),
            flow: dir.join("flow"),
            mask: dir.join("mask.png"),
            gt: dir.join("gt"),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write frames, flow, first-frame mask and ground truth under `dir`.
pub fn write_sequence(seq: &SyntheticSequence, dir: &Path) -> Result<()> {
    let p = SequencePaths::new(dir);
    create_dir(&p.frames)?;
    create_dir(&p.gt)?;
    for (k, f) in seq.video.frames().iter().enumerate() {
        f.save_png(&p.frames.join(frame_file_name(k + 1, "png")))?;
    }
    for (k, m) in seq.gt.iter().enumerate() {
        m.save_png(&p.gt.join(frame_file_name(k + 1, "png")))?;
    }
    seq.flows.save_dir(&p.flow)?;
    seq.first_mask.save_png(&p.mask)
}

/// Ready-made scenes at 160x120 over 40 frames.
pub mod presets {
    use super::*;

    pub const NAMES: &[&str] = &["translation", "occlusion", "entering"];

    fn base() -> SyntheticSpec {
        SyntheticSpec {
            width: 160,
            height: 120,
            frames: 40,
            background: Texture {
                color: [70, 110, 150],
                amplitude: 10,
                seed: 11,
            },
            objects: vec![ObjectSpec {
                shape: Shape::Rectangle {
                    width: 30.0,
                    height: 30.0,
                },
                position: [20.0, 30.0],
                velocity: [2.0, 0.0],
                texture: Texture {
                    color: [210, 70, 50],
                    amplitude: 10,
                    seed: 23,
                },
                appears: 1,
                foreground: true,
            }],
            occluder: None,
        }
    }

    /// A textured 30x30 square moving two pixels right per frame.
    pub fn translation() -> SyntheticSpec {
        base()
    }

    /// The translating square passes behind a 10-pixel bar in frames 15-22.
    pub fn occlusion() -> SyntheticSpec {
        SyntheticSpec {
            occluder: Some(OccluderSpec {
                x: 70,
                width: 10,
                frames: [15, 22],
                texture: Texture {
                    color: [128, 128, 128],
                    amplitude: 8,
                    seed: 5,
                },
            }),
            ..base()
        }
    }

    /// A second, green square slides in from the right edge at frame 10.
    pub fn entering() -> SyntheticSpec {
        let mut s = base();
        s.objects.push(ObjectSpec {
            shape: Shape::Rectangle {
                width: 24.0,
                height: 24.0,
            },
            position: [157.0, 80.0],
            velocity: [-3.0, 0.0],
            texture: Texture {
                color: [60, 200, 80],
                amplitude: 10,
                seed: 31,
            },
            appears: 10,
            foreground: false,
        });
        s
    }

    pub fn by_name(name: &str) -> Option<SyntheticSpec> {
        match name {
            "translation" => Some(translation()),
            "occlusion" => Some(occlusion()),
            "entering" => Some(entering()),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameIou {
    pub frame: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    pub status: SequenceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub frame_iou: Vec<FrameIou>,
    pub mean_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<StageTiming>>,
}

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub config: BTreeMap<String, String>,
    pub sequences: Vec<SequenceReport>,
    /// Sequences that produced scores.
    pub evaluated: usize,
    /// Mean of per-sequence means.
    pub mean_iou: Option<f64>,
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalReport {
    pub fn new(config: &Config, sequences: Vec<SequenceReport>) -> Self {
        let means: Vec<f64> = sequences.iter().filter_map(|s| s.mean_iou).collect();
        Self {
            schema: REPORT_SCHEMA,
            config: config.entries().into_iter().collect(),
            evaluated: means.len(),
            mean_iou: mean(&means),
            sequences,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<24} {:>7} {:>9}  status",
            "sequence", "frames", "mean IoU"
        )
        .unwrap();
        for q in &self.sequences {
            let m = q.mean_iou.map_or("-".to_string(), |v| format!("{v:.4}"));
            let status = match q.status {
                SequenceStatus::Ok => "ok".to_string(),
                SequenceStatus::Skipped => {
                    format!("skipped: {}", q.message.as_deref().unwrap_or(""))
                }
                SequenceStatus::Failed => format!("failed: {}", q.message.as_deref().unwrap_or("")),
            };
            writeln!(
                s,
                "{:<24} {:>7} {:>9}  {}",
                q.name,
                q.frame_iou.len(),
                m,
                status
            )
            .unwrap();
        }
        let m = self.mean_iou.map_or("-".to_string(), |v| format!("{v:.4}"));
        writeln!(s, "{:<24} {:>7} {:>9}", "Avg.", self.evaluated, m).unwrap();
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct BenchmarkOptions {
    /// Record per-stage wall-clock times in the report.
    pub timings: bool,
    /// Write predicted masks to `<dir>/<sequence>/<frame>.png`.
    pub masks_out: Option<PathBuf>,
}

fn sequence_report(name: String, status: SequenceStatus, message: String) -> SequenceReport {
    SequenceReport {
        name,
        status,
        message: Some(message),
        frame_iou: Vec::new(),
        mean_iou: None,
        diagnostics: None,
        timings: None,
    }
}

fn load_gt(dir: &Path, frames: usize) -> Result<Vec<BinaryMask>> {
    (1..=frames)
        .map(|t| {
            let p = dir.join(frame_file_name(t, "png"));
            if !p.exists() {
                return Err(Error::Missing(p));
            }
            BinaryMask::load_png(&p)
        })
        .collect()
}

fn evaluate_sequence(
    dir: &Path,
    name: &str,
    config: &Config,
    opts: &BenchmarkOptions,
) -> SequenceReport {
    let paths = SequencePaths::new(dir);
    let fail = |e: Error| sequence_report(name.to_string(), SequenceStatus::Failed, e.to_string());
    let video = match VideoSequence::load_dir(&paths.frames) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let gt = match load_gt(&paths.gt, video.len()) {
        Ok(g) => g,
        Err(e) => {
            log::warn!("{name}: skipping, ground truth unavailable ({e})");
            return sequence_report(name.to_string(), SequenceStatus::Skipped, e.to_string());
        }
    };
    let flows = match FlowSequence::load_dir(&paths.flow, video.len()) {
        Ok(f) => f,
        Err(e) => return fail(e),
    };
    let mask = match BinaryMask::load_png(&paths.mask) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let seg = match segment_video(&video, &flows, &mask, &config.segmentation) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if let Some(out) = &opts.masks_out {
        let dir = out.join(name);
        let written = create_dir(&dir).and_then(|_| {
            seg.masks
                .iter()
                .enumerate()
                .try_for_each(|(k, m)| m.save_png(&dir.join(frame_file_name(k + 1, "png"))))
        });
        if let Err(e) = written {
            return fail(e);
        }
    }
    let empty = if config.empty_iou_one { 1.0 } else { 0.0 };
    let mut frame_iou = Vec::new();
    for t in 2..=video.len() {
        match iou(&seg.masks[t - 1], &gt[t - 1], empty) {
            Ok(v) => frame_iou.push(FrameIou { frame: t, iou: v }),
            Err(e) => return fail(e),
        }
    }
    let scores: Vec<f64> = frame_iou.iter().map(|f| f.iou).collect();
    SequenceReport {
        name: name.to_string(),
        status: SequenceStatus::Ok,
        message: None,
        mean_iou: mean(&scores),
        frame_iou,
        diagnostics: Some(seg.diagnostics),
        timings: opts.timings.then(|| {
            seg.timings
                .into_iter()
                .map(|(stage, seconds)| StageTiming { stage, seconds })
                .collect()
        }),
    }
}

/// Segment and score every sequence directory under `dataset`, in name order.
pub fn run_benchmark(
    dataset: &Path,
    config: &Config,
    opts: &BenchmarkOptions,
) -> Result<EvalReport> {
    if !dataset.is_dir() {
        return Err(Error::Missing(dataset.to_path_buf()));
    }
    let mut names: Vec<String> = std::fs::read_dir(dataset)
        .map_err(|e| Error::io(dataset, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    let sequences = par::map_slice(&names, |n| {
        evaluate_sequence(&dataset.join(n), n, config, opts)
    });
    Ok(EvalReport::new(config, sequences))
}

/// Number of frames in a sequence directory.
pub fn sequence_length(dir: &Path) -> Result<usize> {
    Ok(numbered_files(&SequencePaths::new(dir).frames, "png")?.len())
}
