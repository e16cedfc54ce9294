//! Dense point trajectories from a first-order Markovian tracker.
//!
//! Each step moves a point along the forward flow and multiplies its survival
//! probability by `exp(-(E_app + E_occ))`. A track ends when the cumulative
//! probability drops below the termination threshold, when it would leave the
//! frame, or at the last frame.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowSequence;
use crate::frame::{Frame, VideoSequence};

/// A tracked point at sub-pixel position `(x, y)` in 1-based frame `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajPoint {
    pub x: f64,
    pub y: f64,
    pub t: usize,
}

impl TrajPoint {
    pub fn new(x: f64, y: f64, t: usize) -> Self {
        Self { x, y, t }
    }

    /// Nearest integer pixel, clamped into a `width x height` frame.
    pub fn pixel(&self, width: usize, height: usize) -> (usize, usize) {
        let x = self.x.round().clamp(0.0, (width - 1) as f64) as usize;
        let y = self.y.round().clamp(0.0, (height - 1) as f64) as usize;
        (x, y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub points: Vec<TrajPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_frame(&self) -> usize {
        self.points[0].t
    }

    pub fn end_frame(&self) -> usize {
        self.points[self.points.len() - 1].t
    }

    /// Point at 1-based frame `t`, if the trajectory spans it.
    pub fn point_at(&self, t: usize) -> Option<&TrajPoint> {
        let s = self.start_frame();
        if t < s {
            return None;
        }
        self.points.get(t - s)
    }
}

/// All trajectories of one video together with the frame geometry.
#[derive(Clone, Debug)]
pub struct TrajectorySet {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Mean trajectory length `L̄`; 0 for an empty set.
    pub fn mean_length(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories
            .iter()
            .map(|t| t.len() as f64)
            .sum::<f64>()
            / self.trajectories.len() as f64
    }

    /// Serialize as text: for each trajectory a `id L t0` line followed by
    /// `L` lines of `x y` with three fractional digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for tr in &self.trajectories {
            writeln!(s, "{} {} {}", tr.id, tr.len(), tr.start_frame()).unwrap();
            for p in &tr.points {
                writeln!(s, "{:.3} {:.3}", p.x, p.y).unwrap();
            }
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parse the text format. Frame geometry is not stored in the file and
    /// must be supplied by the caller.
    pub fn from_text<R: Read>(r: R, width: usize, height: usize, frames: usize) -> Result<Self> {
        let mut lines = BufReader::new(r).lines().enumerate();
        let mut trajectories = Vec::new();
        let bad =
            |n: usize, what: &str| Error::Format(format!("trajectory file line {}: {what}", n + 1));
        while let Some((n, line)) = lines.next() {
            let line = line.map_err(|e| Error::io("<trajectories>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let head: Vec<usize> = line
                .split_whitespace()
                .map(|v| v.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(n, "expected `id L t0`"))?;
            let [id, len, t0] = head[..] else {
                return Err(bad(n, "expected `id L t0`"));
            };
            if len == 0 || t0 == 0 {
                return Err(bad(n, "length and start frame must be positive"));
            }
            let mut points = Vec::with_capacity(len);
            for k in 0..len {
                let (m, l) = lines.next().ok_or_else(|| bad(n, "truncated trajectory"))?;
                let l = l.map_err(|e| Error::io("<trajectories>", e))?;
                let xy: Vec<f64> = l
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(m, "expected `x y`"))?;
                let [x, y] = xy[..] else {
                    return Err(bad(m, "expected `x y`"));
                };
                points.push(TrajPoint::new(x, y, t0 + k));
            }
            trajectories.push(Trajectory { id, points });
        }
        Ok(Self {
            width,
            height,
            frames,
            trajectories,
        })
    }

    pub fn load(path: &Path, width: usize, height: usize, frames: usize) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(f, width, height, frames)
    }
}

/// Tracker settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerConfig {
    /// Spacing of the seed grid in pixels.
    pub seed_stride: usize,
    /// Multiplier applied to the RGB appearance energy before it enters the
    /// step probability.
    pub appearance_scale: f64,
    /// Tracks stop once the cumulative probability falls below this.
    pub termination_probability: f64,
    /// Shorter trajectories are discarded.
    pub min_length: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            seed_stride: 2,
            appearance_scale: 1.0 / 50.0,
            termination_probability: 0.5,
            min_length: 4,
        }
    }
}

/// Euclidean RGB distance between the two (bilinearly sampled) positions.
pub fn appearance_energy(
    frame_prev: &Frame,
    frame_cur: &Frame,
    p_prev: &TrajPoint,
    p_cur: &TrajPoint,
) -> Result<f64> {
    if p_cur.t != p_prev.t + 1 {
        return Err(Error::Contract(format!(
            "appearance energy needs consecutive frames, got {} and {}",
            p_prev.t, p_cur.t
        )));
    }
    let a = frame_prev.sample(p_prev.x, p_prev.y);
    let b = frame_cur.sample(p_cur.x, p_cur.y);
    Ok(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
}

/// Forward/backward consistency `‖bwd + fwd‖ / (‖bwd‖ + ‖fwd‖)`, 0 when both
/// vectors vanish.
pub fn occlusion_energy(fwd: [f64; 2], bwd: [f64; 2]) -> f64 {
    let denom = fwd[0].hypot(fwd[1]) + bwd[0].hypot(bwd[1]);
    if denom == 0.0 {
        return 0.0;
    }
    (fwd[0] + bwd[0]).hypot(fwd[1] + bwd[1]) / denom
}

pub fn step_probability(e_app: f64, e_occ: f64) -> f64 {
    (-(e_app + e_occ)).exp()
}

/// Points of a track together with the cumulative probability at each point.
#[derive(Clone, Debug)]
pub struct Track {
    pub points: Vec<TrajPoint>,
    pub probabilities: Vec<f64>,
}

/// Follow one point forward from `start` until termination.
pub fn track_point(
    start: TrajPoint,
    video: &VideoSequence,
    flows: &FlowSequence,
    cfg: &TrackerConfig,
) -> Result<Track> {
    let (w, h) = (video.width(), video.height());
    let inside =
        |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
    if start.t < 1 || start.t > video.len() || !inside(start.x, start.y) {
        return Err(Error::Contract(format!(
            "track start ({}, {}, {}) outside the {w}x{h}x{} video",
            start.x,
            start.y,
            start.t,
            video.len()
        )));
    }
    if flows.transitions() + 1 < video.len() {
        return Err(Error::Contract(format!(
            "{} flow transitions for a {}-frame video",
            flows.transitions(),
            video.len()
        )));
    }
    let mut points = vec![start];
    let mut probabilities = vec![1.0];
    let mut p = 1.0;
    let mut cur = start;
    while cur.t < video.len() {
        let fwd = flows.forward(cur.t).sample_clamped(cur.x, cur.y);
        let next = TrajPoint::new(cur.x + fwd[0], cur.y + fwd[1], cur.t + 1);
        if !inside(next.x, next.y) {
            break;
        }
        let bwd = flows.backward(next.t).sample_clamped(next.x, next.y);
        let e_app = appearance_energy(video.frame(cur.t), video.frame(next.t), &cur, &next)?
            * cfg.appearance_scale;
        let e_occ = occlusion_energy(fwd, bwd);
        p *= step_probability(e_app, e_occ);
        if p < cfg.termination_probability {
            break;
        }
        points.push(next);
        probabilities.push(p);
        cur = next;
    }
    Ok(Track {
        points,
        probabilities,
    })
}

/// Seed grid geometry shared by generation and coverage audits.
#[derive(Clone, Copy, Debug)]
pub struct SeedGrid {
    pub stride: usize,
    pub nx: usize,
    pub ny: usize,
}

impl SeedGrid {
    pub fn new(width: usize, height: usize, stride: usize) -> Self {
        Self {
            stride,
            nx: (width - 1) / stride + 1,
            ny: (height - 1) / stride + 1,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid node a point is closest to.
    pub fn node_of(&self, x: f64, y: f64) -> usize {
        let s = self.stride as f64;
        let gx = ((x / s).round().max(0.0) as usize).min(self.nx - 1);
        let gy = ((y / s).round().max(0.0) as usize).min(self.ny - 1);
        gy * self.nx + gx
    }

    pub fn position(&self, node: usize) -> (usize, usize) {
        (
            (node % self.nx) * self.stride,
            (node / self.nx) * self.stride,
        )
    }
}

/// Result of trajectory generation including the tracks dropped by the
/// length filter.
#[derive(Clone, Debug)]
pub struct Generation {
    pub set: TrajectorySet,
    pub discarded: Vec<Vec<TrajPoint>>,
}

/// Track every seed-grid node of frame 1, then at each later frame seed the
/// nodes no live track currently occupies. Seeds of one frame are tracked in
/// parallel; ids follow `(frame, y, x)` seed order among survivors.
pub fn generate_trajectories(
    video: &VideoSequence,
    flows: &FlowSequence,
    cfg: &TrackerConfig,
) -> Result<TrajectorySet> {
    generate_with_discarded(video, flows, cfg).map(|g| g.set)
}

pub fn generate_with_discarded(
    video: &VideoSequence,
    flows: &FlowSequence,
    cfg: &TrackerConfig,
) -> Result<Generation> {
    if video.is_empty() {
        return Err(Error::Contract("empty video".into()));
    }
    if cfg.seed_stride == 0 {
        return Err(Error::Config("seed stride must be positive".into()));
    }
    if flows.width() != video.width() || flows.height() != video.height() {
        return Err(Error::Contract(format!(
            "flow is {}x{} but frames are {}x{}",
            flows.width(),
            flows.height(),
            video.width(),
            video.height()
        )));
    }
    let t_max = video.len();
    let grid = SeedGrid::new(video.width(), video.height(), cfg.seed_stride);
    let mut covered = vec![vec![false; grid.len()]; t_max + 1];
    let mut tracks: Vec<Vec<TrajPoint>> = Vec::new();
    for t in 1..=t_max {
        let seeds: Vec<TrajPoint> = (0..grid.len())
            .filter(|&n| !covered[t][n])
            .map(|n| {
                let (x, y) = grid.position(n);
                TrajPoint::new(x as f64, y as f64, t)
            })
            .collect();
        let results = crate::par::map_slice(&seeds, |&s| track_point(s, video, flows, cfg));
        for r in results {
            let track = r?;
            for p in &track.points {
                covered[p.t][grid.node_of(p.x, p.y)] = true;
            }
            tracks.push(track.points);
        }
    }
    let mut trajectories = Vec::new();
    let mut discarded = Vec::new();
    for points in tracks {
        if points.len() >= cfg.min_length {
            trajectories.push(Trajectory {
                id: trajectories.len(),
                points,
            });
        } else {
            discarded.push(points);
        }
    }
    Ok(Generation {
        set: TrajectorySet {
            width: video.width(),
            height: video.height(),
            frames: t_max,
            trajectories,
        },
        discarded,
    })
}

/// Per-trajectory descriptors: mean location, mean color, mean velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryFeatures {
    pub location: [f64; 2],
    pub color: [f64; 3],
    pub velocity: [f64; 2],
}

/// Location and color are means over all points. Velocity averages the
/// `delta_t`-frame displacement over `n = 1..L-delta_t`; for `L <= delta_t`
/// it falls back to the end-to-end displacement over `L-1` frames.
pub fn trajectory_features(
    traj: &Trajectory,
    video: &VideoSequence,
    delta_t: usize,
) -> TrajectoryFeatures {
    let pts = &traj.points;
    let l = pts.len() as f64;
    let mut location = [0.0; 2];
    let mut color = [0.0; 3];
    for p in pts {
        location[0] += p.x;
        location[1] += p.y;
        let c = video.frame(p.t).sample(p.x, p.y);
        for k in 0..3 {
            color[k] += c[k];
        }
    }
    location.iter_mut().for_each(|v| *v /= l);
    color.iter_mut().for_each(|v| *v /= l);
    TrajectoryFeatures {
        location,
        color,
        velocity: mean_velocity(pts, delta_t),
    }
}

pub fn mean_velocity(pts: &[TrajPoint], delta_t: usize) -> [f64; 2] {
    let n = pts.len();
    if n < 2 {
        return [0.0; 2];
    }
    if delta_t == 0 || n <= delta_t {
        let d = (n - 1) as f64;
        return [(pts[n - 1].x - pts[0].x) / d, (pts[n - 1].y - pts[0].y) / d];
    }
    let terms = n - delta_t;
    let dt = delta_t as f64;
    let mut v = [0.0; 2];
    for i in 0..terms {
        v[0] += (pts[i + delta_t].x - pts[i].x) / dt;
        v[1] += (pts[i + delta_t].y - pts[i].y) / dt;
    }
    [v[0] / terms as f64, v[1] / terms as f64]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowField, FlowPair};
    use proptest::prelude::*;

    fn constant_video(w: usize, h: usize, t: usize, c: [u8; 3]) -> VideoSequence {
        VideoSequence::new(vec![Frame::filled(w, h, c); t]).unwrap()
    }

    fn constant_flows(w: usize, h: usize, t: usize, fwd: [f32; 2]) -> FlowSequence {
        let pair = FlowPair {
            forward: FlowField::constant(w, h, fwd),
            backward: FlowField::constant(w, h, [-fwd[0], -fwd[1]]),
        };
        FlowSequence::new(vec![pair; t - 1]).unwrap()
    }

    #[test]
    fn appearance_energy_examples() {
        let a = Frame::filled(3, 3, [10, 20, 30]);
        let b = Frame::filled(3, 3, [13, 24, 30]);
        let p0 = TrajPoint::new(1.0, 1.0, 1);
        let p1 = TrajPoint::new(1.5, 0.5, 2);
        assert_eq!(appearance_energy(&a, &a, &p0, &p1).unwrap(), 0.0);
        assert!((appearance_energy(&a, &b, &p0, &p1).unwrap() - 5.0).abs() < 1e-12);
        let k = Frame::filled(3, 3, [0, 0, 0]);
        let wh = Frame::filled(3, 3, [255, 255, 255]);
        let e = appearance_energy(&k, &wh, &p0, &p1).unwrap();
        assert!((e - 255.0 * 3f64.sqrt()).abs() < 1e-9);
        assert!((e - 441.67).abs() < 0.01);
        assert!(appearance_energy(&a, &b, &p0, &TrajPoint::new(1.0, 1.0, 3)).is_err());
    }

    #[test]
    fn occlusion_energy_examples() {
        assert_eq!(occlusion_energy([2.0, -1.0], [-2.0, 1.0]), 0.0);
        assert_eq!(occlusion_energy([1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(occlusion_energy([3.0, 0.0], [-1.0, 0.0]), 0.5);
        assert_eq!(occlusion_energy([0.0, 0.0], [0.0, 0.0]), 0.0);
    }

    #[test]
    fn step_probability_examples() {
        assert_eq!(step_probability(0.0, 0.0), 1.0);
        assert!((step_probability(2f64.ln() * 0.25, 2f64.ln() * 0.75) - 0.5).abs() < 1e-15);
        assert!((step_probability(4.0, 6.0) - 4.5399929762484854e-5).abs() < 1e-18);
    }

    proptest! {
        #[test]
        fn occlusion_energy_symmetric_and_scale_invariant(
            fx in -20f64..20.0, fy in -20f64..20.0, bx in -20f64..20.0, by in -20f64..20.0,
            s in 0.01f64..100.0
        ) {
            let e = occlusion_energy([fx, fy], [bx, by]);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&e));
            prop_assert!((e - occlusion_energy([bx, by], [fx, fy])).abs() < 1e-12);
            prop_assert!((e - occlusion_energy([s * fx, s * fy], [s * bx, s * by])).abs() < 1e-9);
        }
    }

    #[test]
    fn static_scene_tracks_full_length() {
        let v = constant_video(10, 10, 10, [50, 50, 50]);
        let f = constant_flows(10, 10, 10, [0.0, 0.0]);
        let tr = track_point(
            TrajPoint::new(5.0, 5.0, 1),
            &v,
            &f,
            &TrackerConfig::default(),
        )
        .unwrap();
        assert_eq!(tr.points.len(), 10);
        assert!(tr.points.iter().all(|p| p.x == 5.0 && p.y == 5.0));
        assert!(tr.probabilities.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn uniform_motion_stops_at_border() {
        let v = constant_video(20, 5, 15, [80, 80, 80]);
        let f = constant_flows(20, 5, 15, [2.0, 0.0]);
        let tr = track_point(
            TrajPoint::new(1.0, 2.0, 1),
            &v,
            &f,
            &TrackerConfig::default(),
        )
        .unwrap();
        // x = 1, 3, ..., 19; the next step to 21 leaves the frame
        assert_eq!(tr.points.len(), 10);
        for (n, p) in tr.points.iter().enumerate() {
            assert_eq!(p.x, 1.0 + 2.0 * n as f64);
            assert_eq!(p.t, n + 1);
        }
    }

    #[test]
    fn start_out_of_bounds_is_rejected() {
        let v = constant_video(4, 4, 3, [0; 3]);
        let f = constant_flows(4, 4, 3, [0.0, 0.0]);
        assert!(track_point(
            TrajPoint::new(4.0, 0.0, 1),
            &v,
            &f,
            &TrackerConfig::default()
        )
        .is_err());
        assert!(track_point(
            TrajPoint::new(0.0, 0.0, 4),
            &v,
            &f,
            &TrackerConfig::default()
        )
        .is_err());
    }

    #[test]
    fn erased_object_terminates_within_one_frame() {
        // a red 6x6 block moves (1,0) per frame and is erased at frame k
        let (w, h, t_max, k) = (30, 12, 12, 7);
        let obj = |t: usize, x: usize, y: usize| {
            t < k && (3..9).contains(&y) && x >= 4 + t - 1 && x < 10 + t - 1
        };
        let frames: Vec<Frame> = (1..=t_max)
            .map(|t| {
                Frame::from_fn(w, h, |x, y| {
                    if obj(t, x, y) {
                        [220, 30, 30]
                    } else {
                        [30, 30, 220]
                    }
                })
            })
            .collect();
        let video = VideoSequence::new(frames).unwrap();
        let pairs = (1..t_max)
            .map(|t| {
                let fw: Vec<[f32; 2]> = (0..w * h)
                    .map(|i| {
                        if obj(t, i % w, i / w) {
                            [1.0, 0.0]
                        } else {
                            [0.0, 0.0]
                        }
                    })
                    .collect();
                let bw: Vec<[f32; 2]> = (0..w * h)
                    .map(|i| {
                        if obj(t + 1, i % w, i / w) {
                            [-1.0, 0.0]
                        } else {
                            [0.0, 0.0]
                        }
                    })
                    .collect();
                FlowPair {
                    forward: FlowField::new(w, h, fw).unwrap(),
                    backward: FlowField::new(w, h, bw).unwrap(),
                }
            })
            .collect();
        let flows = FlowSequence::new(pairs).unwrap();
        let tr = track_point(
            TrajPoint::new(6.0, 5.0, 1),
            &video,
            &flows,
            &TrackerConfig::default(),
        )
        .unwrap();
        let end = tr.points.last().unwrap().t;
        assert!(end == k - 1 || end == k, "ended at {end}");
    }

    #[test]
    fn generation_static_scenes() {
        let v = constant_video(10, 10, 2, [9, 9, 9]);
        let f = constant_flows(10, 10, 2, [0.0, 0.0]);
        let cfg = TrackerConfig {
            seed_stride: 1,
            ..Default::default()
        };
        assert!(generate_trajectories(&v, &f, &cfg).unwrap().is_empty());

        let v = constant_video(10, 10, 20, [9, 9, 9]);
        let f = constant_flows(10, 10, 20, [0.0, 0.0]);
        let set = generate_trajectories(&v, &f, &cfg).unwrap();
        assert_eq!(set.len(), 100);
        assert!(set.trajectories.iter().all(|t| t.len() == 20));
        assert!(set.trajectories.iter().enumerate().all(|(i, t)| t.id == i));
        assert_eq!(set.mean_length(), 20.0);
    }

    #[test]
    fn features_static_and_uniform_motion() {
        let v = constant_video(40, 10, 12, [100, 100, 100]);
        let stat = Trajectory {
            id: 0,
            points: (1..=6).map(|t| TrajPoint::new(5.0, 5.0, t)).collect(),
        };
        let f = trajectory_features(&stat, &v, 3);
        assert_eq!(f.location, [5.0, 5.0]);
        assert_eq!(f.color, [100.0, 100.0, 100.0]);
        assert_eq!(f.velocity, [0.0, 0.0]);

        let moving = Trajectory {
            id: 1,
            points: (1..=12)
                .map(|t| TrajPoint::new(2.0 * t as f64, 3.0, t))
                .collect(),
        };
        for dt in [1, 3, 5, 7, 20] {
            let f = trajectory_features(&moving, &v, dt);
            assert!((f.velocity[0] - 2.0).abs() < 1e-12 && f.velocity[1].abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_matches_direct_summation() {
        let xs = [0.0, 1.0, 3.5, 4.0, 8.0, 9.5, 9.0, 12.0, 15.5, 16.0];
        let ys = [2.0, 2.5, 2.0, 1.0, 0.5, 0.0, -1.0, -1.5, -1.0, -3.0];
        let pts: Vec<TrajPoint> = (0..10)
            .map(|i| TrajPoint::new(xs[i], ys[i], i + 1))
            .collect();
        // seven terms n = 1..7 of (x_{n+3} - x_n) / 3
        let ox = ((4.0 - 0.0)
            + (8.0 - 1.0)
            + (9.5 - 3.5)
            + (9.0 - 4.0)
            + (12.0 - 8.0)
            + (15.5 - 9.5)
            + (16.0 - 9.0))
            / 3.0
            / 7.0;
        let oy = ((1.0 - 2.0)
            + (0.5 - 2.5)
            + (0.0 - 2.0)
            + (-1.0 - 1.0)
            + (-1.5 - 0.5)
            + (-1.0 - 0.0)
            + (-3.0 + 1.0))
            / 3.0
            / 7.0;
        let v = mean_velocity(&pts, 3);
        assert!((v[0] - ox).abs() < 1e-12, "{} vs {ox}", v[0]);
        assert!((v[1] - oy).abs() < 1e-12, "{} vs {oy}", v[1]);
    }

    #[test]
    fn text_round_trip() {
        let set = TrajectorySet {
            width: 10,
            height: 10,
            frames: 8,
            trajectories: vec![
                Trajectory {
                    id: 0,
                    points: (2..6)
                        .map(|t| TrajPoint::new(1.25 * t as f64, 3.5, t))
                        .collect(),
                },
                Trajectory {
                    id: 1,
                    points: (1..5)
                        .map(|t| TrajPoint::new(0.0, t as f64 * 0.125, t))
                        .collect(),
                },
            ],
        };
        let text = set.to_text();
        assert!(text.starts_with("0 4 2\n2.500 3.500\n"));
        let back = TrajectorySet::from_text(text.as_bytes(), 10, 10, 8).unwrap();
        assert_eq!(back.trajectories, set.trajectories);
        assert!(TrajectorySet::from_text("0 3 1\n1.0 2.0\n".as_bytes(), 10, 10, 8).is_err());
    }
}
