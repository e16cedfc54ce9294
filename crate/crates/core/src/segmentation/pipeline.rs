//! End-to-end mask propagation from the first-frame annotation.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{self, ClusteringConfig, SuperTrajectorySet};
use crate::error::{Error, Result};
use crate::flow::FlowSequence;
use crate::frame::{BinaryMask, VideoSequence};
use crate::par;
use crate::trajectory::{generate_trajectories, TrackerConfig, TrajectorySet};

use super::descriptor::{region_descriptor, DESCRIPTOR_LEN};
use super::gmm::{fit_appearance, AppearanceModel, EmConfig};
use super::knn::{knn_backward, DescriptorStore};
use super::labeling::{
    classify_trajectories, reverse_track_sources, supertraj_probability, Category, CategoryCounts,
    ReverseTrack, TrajectoryLabeling,
};
use super::propagation::{build_transition, propagate};
use super::slic::{slic_regions, SlicConfig, Superpixels};

/// Default foreground threshold.
pub const FOREGROUND_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentationConfig {
    pub tracker: TrackerConfig,
    pub clustering: ClusteringConfig,
    pub em: EmConfig,
    pub slic: SlicConfig,
    /// Backward nearest neighbors per region.
    pub neighbors: usize,
    pub propagation_iterations: usize,
    pub reverse_track: ReverseTrack,
    /// Probabilities strictly above this are foreground.
    pub threshold: f64,
    /// Keep the per-stage probability maps.
    pub keep_stages: bool,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            clustering: ClusteringConfig::default(),
            em: EmConfig::default(),
            slic: SlicConfig::default(),
            neighbors: 8,
            propagation_iterations: 10,
            reverse_track: ReverseTrack::Printed,
            threshold: FOREGROUND_THRESHOLD,
            keep_stages: false,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        self.clustering.validate()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if self.em.components == 0
            || self.em.max_iterations == 0
            || self.propagation_iterations == 0
        {
            return Err(Error::Config(
                "GMM components and iteration counts must be positive".into(),
            ));
        }
        if self.tracker.seed_stride == 0
            || self.tracker.min_length == 0
            || self.slic.target_count == 0
        {
            return Err(Error::Config(
                "seed stride, minimum length and superpixel count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-pixel probability maps of every frame, row-major.
pub type ProbabilityMaps = Vec<Vec<f64>>;

/// Intermediate maps, one entry per frame.
#[derive(Clone, Debug, Default)]
pub struct StageMaps {
    /// Super-trajectory probability at labeled trajectory points, 0 elsewhere.
    pub supertraj: ProbabilityMaps,
    pub pixel: ProbabilityMaps,
    pub region_initial: ProbabilityMaps,
    pub region_final: ProbabilityMaps,
    /// Region vectors before and after propagation, indexed like the
    /// descriptor store, and which regions were clamped.
    pub v_initial: Vec<f64>,
    pub v_final: Vec<f64>,
    pub clamped: Vec<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub trajectories: usize,
    pub categories: CategoryCounts,
    /// Number of super-trajectories.
    pub m: usize,
    pub labeled_supertrajectories: usize,
    pub regions: usize,
    pub clamped_regions: usize,
    /// True when the appearance model could not be fit and the 0.5 prior
    /// was used instead.
    pub appearance_fallback: bool,
    pub mean_region_probability_initial: f64,
    pub mean_region_probability_final: f64,
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub masks: Vec<BinaryMask>,
    pub diagnostics: Diagnostics,
    pub stages: Option<StageMaps>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

/// Superpixels of every frame plus the descriptor store over all regions,
/// numbered frame by frame.
#[derive(Clone, Debug)]
pub struct RegionSet {
    pub superpixels: Vec<Superpixels>,
    /// `offsets[t - 1]` is the global index of frame `t`'s first region.
    pub offsets: Vec<usize>,
    pub store: DescriptorStore,
}

impl RegionSet {
    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    /// Global region index of pixel `i` in frame `t`.
    pub fn region_of(&self, t: usize, i: usize) -> usize {
        self.offsets[t - 1] + self.superpixels[t - 1].labels[i] as usize
    }
}

pub fn build_regions(video: &VideoSequence, cfg: &SlicConfig) -> Result<RegionSet> {
    let superpixels: Vec<Superpixels> = par::map_slice(video.frames(), |f| slic_regions(f, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(superpixels.len());
    let mut jobs = Vec::new();
    for (k, sp) in superpixels.iter().enumerate() {
        offsets.push(jobs.len());
        for pixels in sp.regions() {
            jobs.push((k + 1, pixels));
        }
    }
    let rows = par::map_slice(&jobs, |(t, pixels)| {
        region_descriptor(video.frame(*t), pixels)
    });
    let frames = jobs.iter().map(|(t, _)| *t).collect();
    let store = DescriptorStore::new(DESCRIPTOR_LEN, rows.concat(), frames);
    Ok(RegionSet {
        superpixels,
        offsets,
        store,
    })
}

/// Probability of each trajectory's super-trajectory, `None` for
/// trajectories in unlabeled super-trajectories.
pub fn trajectory_probabilities(
    sts: &SuperTrajectorySet,
    trajs: &TrajectorySet,
    labeling: &TrajectoryLabeling,
) -> (Vec<Option<f64>>, usize) {
    let index_of: HashMap<usize, usize> = trajs
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id, i))
        .collect();
    let mut out = vec![None; trajs.len()];
    let mut labeled = 0;
    for st in &sts.items {
        let p = supertraj_probability(st, labeling, |id| index_of[&id]);
        if p.is_some() {
            labeled += 1;
        }
        for id in &st.members {
            out[index_of[id]] = p;
        }
    }
    (out, labeled)
}

/// RGB samples at every point of labeled super-trajectories, with
/// foreground weight `p` and background weight `1 - p`. Outside-source
/// trajectories count as pure background.
pub fn appearance_samples(
    video: &VideoSequence,
    trajs: &TrajectorySet,
    labeling: &TrajectoryLabeling,
    probs: &[Option<f64>],
) -> (Vec<[f64; 3]>, Vec<f64>, Vec<f64>) {
    let (mut xs, mut fg, mut bg) = (Vec::new(), Vec::new(), Vec::new());
    let (w, h) = (trajs.width, trajs.height);
    for (k, t) in trajs.trajectories.iter().enumerate() {
        let Some(p) = probs[k] else { continue };
        let (wf, wb) = if labeling.categories[k] == Category::Outside {
            (0.0, 1.0)
        } else {
            (p, 1.0 - p)
        };
        for pt in &t.points {
            let (x, y) = pt.pixel(w, h);
            let c = video.frame(pt.t).get(x, y);
            xs.push([c[0] as f64, c[1] as f64, c[2] as f64]);
            fg.push(wf);
            bg.push(wb);
        }
    }
    (xs, fg, bg)
}

/// Per-frame sums and counts of super-trajectory probabilities at labeled
/// trajectory pixels.
fn labeled_pixels(
    video: &VideoSequence,
    trajs: &TrajectorySet,
    probs: &[Option<f64>],
) -> Vec<HashMap<usize, (f64, u32)>> {
    let (w, h) = (video.width(), video.height());
    let mut out = vec![HashMap::new(); video.len()];
    for (k, t) in trajs.trajectories.iter().enumerate() {
        let Some(p) = probs[k] else { continue };
        for pt in &t.points {
            let (x, y) = pt.pixel(w, h);
            let e = out[pt.t - 1].entry(y * w + x).or_insert((0.0, 0));
            e.0 += p;
            e.1 += 1;
        }
    }
    out
}

fn labeled_value(e: &(f64, u32)) -> f64 {
    e.0 / e.1 as f64
}

/// Labeled trajectory pixels take their super-trajectory probability
/// (averaged where several meet); every other pixel takes the appearance
/// posterior of its color, or 0.5 without a model.
pub fn pixel_estimates(
    video: &VideoSequence,
    labeled: &[HashMap<usize, (f64, u32)>],
    model: Option<&AppearanceModel>,
) -> ProbabilityMaps {
    par::map_range(video.len(), |k| {
        let frame = video.frame(k + 1);
        let mut cache: HashMap<[u8; 3], f64> = HashMap::new();
        frame
            .pixels()
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if let Some(e) = labeled[k].get(&i) {
                    return labeled_value(e);
                }
                match model {
                    Some(m) => *cache
                        .entry(c)
                        .or_insert_with(|| m.posterior(&[c[0] as f64, c[1] as f64, c[2] as f64])),
                    None => 0.5,
                }
            })
            .collect()
    })
}

/// Threshold region probabilities per pixel; labeled trajectory pixels use
/// their own probability instead.
pub fn finalize_masks(
    regions: &RegionSet,
    v: &[f64],
    labeled: &[HashMap<usize, (f64, u32)>],
    threshold: f64,
) -> Vec<BinaryMask> {
    par::map_range(regions.superpixels.len(), |k| {
        let sp = &regions.superpixels[k];
        let fg = (0..sp.width * sp.height)
            .map(|i| match labeled.get(k).and_then(|m| m.get(&i)) {
                Some(e) => labeled_value(e) > threshold,
                None => v[regions.region_of(k + 1, i)] > threshold,
            })
            .collect();
        BinaryMask::new(sp.width, sp.height, fg).expect("mask matches region map")
    })
}

fn region_map(regions: &RegionSet, v: &[f64]) -> ProbabilityMaps {
    (0..regions.superpixels.len())
        .map(|k| {
            let sp = &regions.superpixels[k];
            (0..sp.labels.len())
                .map(|i| v[regions.region_of(k + 1, i)])
                .collect()
        })
        .collect()
}

struct Stopwatch {
    last: Instant,
    log: Vec<(String, f64)>,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            last: Instant::now(),
            log: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.log
            .push((name.to_string(), (now - self.last).as_secs_f64()));
        log::debug!("{name}: {:.3}s", (now - self.last).as_secs_f64());
        self.last = now;
    }
}

fn all_background(
    video: &VideoSequence,
    diagnostics: Diagnostics,
    timings: Vec<(String, f64)>,
) -> Segmentation {
    Segmentation {
        masks: (0..video.len())
            .map(|_| BinaryMask::empty(video.width(), video.height()))
            .collect(),
        diagnostics,
        stages: None,
        timings,
    }
}

pub fn segment_video(
    video: &VideoSequence,
    flows: &FlowSequence,
    mask: &BinaryMask,
    cfg: &SegmentationConfig,
) -> Result<Segmentation> {
    cfg.validate()?;
    if mask.width() != video.width() || mask.height() != video.height() {
        return Err(Error::Contract(format!(
            "mask is {}x{} but frames are {}x{}",
            mask.width(),
            mask.height(),
            video.width(),
            video.height()
        )));
    }
    let mut clock = Stopwatch::new();
    let trajs = generate_trajectories(video, flows, &cfg.tracker)?;
    clock.lap("trajectories");
    let mut diag = Diagnostics {
        trajectories: trajs.len(),
        ..Default::default()
    };
    if trajs.is_empty() {
        log::warn!("no trajectories survived tracking; every mask is background");
        return Ok(all_background(video, diag, clock.log));
    }
    let (sts, descs, _) = clustering::cluster(&trajs, video, &cfg.clustering)?;
    clock.lap("supertrajectories");
    diag.m = sts.len();

    let labeling = classify_trajectories(&trajs, mask)?;
    let velocities: Vec<[f64; 2]> = descs.iter().map(|d| d.features.velocity).collect();
    let labeling = reverse_track_sources(&labeling, &trajs, &velocities, cfg.reverse_track);
    diag.categories = labeling.counts();
    let (probs, labeled_count) = trajectory_probabilities(&sts, &trajs, &labeling);
    diag.labeled_supertrajectories = labeled_count;
    clock.lap("labeling");

    if !probs.iter().flatten().any(|&p| p > 0.0) {
        log::info!("no foreground evidence; every mask is background");
        return Ok(all_background(video, diag, clock.log));
    }

    let (samples, fg_w, bg_w) = appearance_samples(video, &trajs, &labeling, &probs);
    let model = match fit_appearance(&samples, &fg_w, &bg_w, &cfg.em) {
        Ok(m) => Some(m),
        Err(Error::Model(msg)) => {
            log::warn!("appearance model unavailable ({msg}); using a 0.5 prior");
            diag.appearance_fallback = true;
            None
        }
        Err(e) => return Err(e),
    };
    clock.lap("appearance");

    let labeled = labeled_pixels(video, &trajs, &probs);
    let pixel = pixel_estimates(video, &labeled, model.as_ref());
    clock.lap("pixel_estimates");

    let regions = build_regions(video, &cfg.slic)?;
    clock.lap("regions");
    let nn = knn_backward(&regions.store, cfg.neighbors);
    clock.lap("knn");

    let n = regions.len();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut clamped = vec![false; n];
    for (k, frame_pixels) in pixel.iter().enumerate() {
        for (i, &p) in frame_pixels.iter().enumerate() {
            let r = regions.region_of(k + 1, i);
            sum[r] += p;
            count[r] += 1;
        }
        for &i in labeled[k].keys() {
            clamped[regions.region_of(k + 1, i)] = true;
        }
    }
    let v0: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let p = build_transition(&regions.store, &nn);
    let v = propagate(&p, &v0, &clamped, cfg.propagation_iterations);
    clock.lap("propagation");

    diag.regions = n;
    diag.clamped_regions = clamped.iter().filter(|&&c| c).count();
    diag.mean_region_probability_initial = v0.iter().sum::<f64>() / n as f64;
    diag.mean_region_probability_final = v.iter().sum::<f64>() / n as f64;

    let masks = finalize_masks(&regions, &v, &labeled, cfg.threshold);
    clock.lap("masks");

    let stages = cfg.keep_stages.then(|| {
        let (w, h) = (video.width(), video.height());
        let supertraj = labeled
            .iter()
            .map(|m| {
                let mut map = vec![0.0; w * h];
                for (&i, e) in m {
                    map[i] = labeled_value(e);
                }
                map
            })
            .collect();
        StageMaps {
            supertraj,
            pixel,
            region_initial: region_map(&regions, &v0),
            region_final: region_map(&regions, &v),
            v_initial: v0,
            v_final: v,
            clamped,
        }
    });
    Ok(Segmentation {
        masks,
        diagnostics: diag,
        stages,
        timings: clock.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowField, FlowPair};
    use crate::frame::Frame;

    fn static_scene(frames: usize) -> (VideoSequence, FlowSequence) {
        let f = Frame::from_fn(24, 16, |x, y| {
            if (8..16).contains(&x) && (4..12).contains(&y) {
                [220, 30, 30]
            } else {
                [20, 40, 200]
            }
        });
        let video = VideoSequence::new(vec![f; frames]).unwrap();
        let pairs = (1..frames)
            .map(|_| FlowPair {
                forward: FlowField::zeros(24, 16),
                backward: FlowField::zeros(24, 16),
            })
            .collect();
        (video, FlowSequence::new(pairs).unwrap())
    }

    fn small_cfg() -> SegmentationConfig {
        SegmentationConfig {
            clustering: ClusteringConfig {
                k: 6,
                ..Default::default()
            },
            slic: SlicConfig {
                target_count: 24,
                ..Default::default()
            },
            keep_stages: true,
            ..Default::default()
        }
    }

    #[test]
    fn empty_annotation_gives_empty_masks() {
        let (video, flows) = static_scene(6);
        let out = segment_video(&video, &flows, &BinaryMask::empty(24, 16), &small_cfg()).unwrap();
        assert_eq!(out.masks.len(), 6);
        assert!(out.masks.iter().all(|m| m.count() == 0));
    }

    #[test]
    fn static_separable_scene_is_recovered() {
        let (video, flows) = static_scene(6);
        let gt = BinaryMask::from_fn(24, 16, |x, y| (8..16).contains(&x) && (4..12).contains(&y));
        let out = segment_video(&video, &flows, &gt, &small_cfg()).unwrap();
        for m in &out.masks {
            assert_eq!(m, &gt);
        }
        let stages = out.stages.unwrap();
        for map in stages.pixel.iter().chain(&stages.region_final) {
            assert!(map.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        assert!(out.diagnostics.categories.foreground > 0);
    }

    #[test]
    fn mismatched_mask_is_rejected() {
        let (video, flows) = static_scene(3);
        assert!(matches!(
            segment_video(&video, &flows, &BinaryMask::empty(5, 5), &small_cfg()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn threshold_is_strict() {
        let sp = Superpixels {
            width: 2,
            height: 1,
            labels: vec![0, 1],
            count: 2,
        };
        let regions = RegionSet {
            superpixels: vec![sp],
            offsets: vec![0],
            store: DescriptorStore::new(1, vec![0.0, 0.0], vec![1, 1]),
        };
        let masks = finalize_masks(&regions, &[0.5, 0.51], &[HashMap::new()], 0.5);
        assert_eq!(masks[0].as_slice(), &[false, true]);
        let mut labeled = HashMap::new();
        labeled.insert(0usize, (1.0, 1u32));
        let masks = finalize_masks(&regions, &[0.0, 0.0], &[labeled], 0.5);
        assert_eq!(masks[0].as_slice(), &[true, false]);
    }
}
