//! Super-trajectory generation: spatial grid initialization, density-peaks
//! center seeding per grid volume, windowed iterative reassignment, center
//! updates and a final small-cluster merge.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::dpc::{self, DensityMode, DistanceMatrix, DpcScores, DEFAULT_H};
use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::trajectory::{trajectory_features, TrajectoryFeatures, TrajectorySet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusteringConfig {
    /// Number of spatial grid cells `K`.
    pub k: usize,
    pub iterations: usize,
    /// Clusters smaller than this are merged away after the last iteration.
    pub min_cluster_size: usize,
    /// Velocity step `Δt` in frames.
    pub delta_t: usize,
    /// Distance sentinel for pairs that share no frames.
    pub h: f64,
    pub density_mode: DensityMode,
    /// Stop early once an update leaves every center unchanged.
    pub stop_on_convergence: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k: 1200,
            iterations: 5,
            min_cluster_size: 5,
            delta_t: 3,
            h: DEFAULT_H,
            density_mode: DensityMode::Similarity,
            stop_on_convergence: false,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.iterations < 1 || self.min_cluster_size < 1 {
            return Err(Error::Config(
                "K, iterations and min_cluster_size must be at least 1".into(),
            ));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Config(format!(
                "H = {} must be finite and positive",
                self.h
            )));
        }
        Ok(())
    }
}

/// Normalizers that bring the three distance terms to similar scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationContext {
    pub max_intensity: f64,
    /// Spatial sampling step `R = sqrt(S / K)`.
    pub r: f64,
    /// Mean velocity magnitude over all trajectories.
    pub mean_motion: f64,
    pub h: f64,
}

impl NormalizationContext {
    pub fn new(
        width: usize,
        height: usize,
        k: usize,
        features: &[TrajectoryFeatures],
        h: f64,
    ) -> Self {
        let mean_motion = if features.is_empty() {
            0.0
        } else {
            features
                .iter()
                .map(|f| f.velocity[0].hypot(f.velocity[1]))
                .sum::<f64>()
                / features.len() as f64
        };
        Self {
            max_intensity: 255.0,
            r: sampling_step(width, height, k),
            mean_motion,
            h,
        }
    }

    fn motion_scale(&self) -> f64 {
        if self.mean_motion > 0.0 {
            self.mean_motion
        } else {
            1.0
        }
    }
}

/// `R = sqrt(width * height / K)`.
pub fn sampling_step(width: usize, height: usize, k: usize) -> f64 {
    ((width * height) as f64 / k as f64).sqrt()
}

/// Features of one trajectory plus the frames it spans.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryDescriptor {
    pub features: TrajectoryFeatures,
    pub start: usize,
    pub end: usize,
}

impl TrajectoryDescriptor {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

pub fn describe(
    trajs: &TrajectorySet,
    video: &VideoSequence,
    delta_t: usize,
) -> Vec<TrajectoryDescriptor> {
    crate::par::map_slice(&trajs.trajectories, |t| TrajectoryDescriptor {
        features: trajectory_features(t, video, delta_t),
        start: t.start_frame(),
        end: t.end_frame(),
    })
}

/// Normalized location + color + velocity distance, or `H` when the two
/// trajectories share no frame.
pub fn trajectory_distance(
    a: &TrajectoryDescriptor,
    b: &TrajectoryDescriptor,
    ctx: &NormalizationContext,
) -> f64 {
    if !a.overlaps(b) {
        return ctx.h;
    }
    let (fa, fb) = (&a.features, &b.features);
    let loc = (fa.location[0] - fb.location[0]).hypot(fa.location[1] - fb.location[1]) / ctx.r;
    let col = ((fa.color[0] - fb.color[0]).powi(2)
        + (fa.color[1] - fb.color[1]).powi(2)
        + (fa.color[2] - fb.color[2]).powi(2))
    .sqrt()
        / ctx.max_intensity;
    let vel = (fa.velocity[0] - fb.velocity[0]).hypot(fa.velocity[1] - fb.velocity[1])
        / ctx.motion_scale();
    (loc + col + vel).min(ctx.h)
}

/// Spatial grid with cell side `r`; the last row and column absorb the
/// remainder of the frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub r: f64,
    pub cols: usize,
    pub rows: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize, k: usize) -> Self {
        let r = sampling_step(width, height, k);
        Self {
            r,
            cols: ((width as f64 / r).floor() as usize).max(1),
            rows: ((height as f64 / r).floor() as usize).max(1),
        }
    }

    pub fn cell(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = ((x / self.r).floor().max(0.0) as usize).min(self.cols - 1);
        let cy = ((y / self.r).floor().max(0.0) as usize).min(self.rows - 1);
        (cx, cy)
    }
}

/// Group trajectory indices by the grid cell holding their first point.
/// Groups are in row-major cell order and may be empty.
pub fn grid_partition(trajs: &TrajectorySet, k: usize) -> (Grid, Vec<Vec<usize>>) {
    let grid = Grid::new(trajs.width, trajs.height, k.max(1));
    let mut groups = vec![Vec::new(); grid.cols * grid.rows];
    for (i, t) in trajs.trajectories.iter().enumerate() {
        let p = t.points[0];
        let (cx, cy) = grid.cell(p.x, p.y);
        groups[cy * grid.cols + cx].push(i);
    }
    (grid, groups)
}

/// `max(1, round(T / L̄))` with halves rounded up.
pub fn initial_center_count(frames: usize, mean_len: f64) -> usize {
    if mean_len <= 0.0 {
        return 1;
    }
    ((frames as f64 / mean_len + 0.5).floor() as usize).max(1)
}

fn group_matrix(
    members: &[usize],
    descs: &[TrajectoryDescriptor],
    ctx: &NormalizationContext,
) -> DistanceMatrix {
    DistanceMatrix::from_fn(members.len(), ctx.h, |a, b| {
        trajectory_distance(&descs[members[a]], &descs[members[b]], ctx)
    })
}

/// Density-peaks centers of one grid group (trajectory indices).
pub fn initial_centers(
    group: &[usize],
    descs: &[TrajectoryDescriptor],
    frames: usize,
    mean_len: f64,
    ctx: &NormalizationContext,
    mode: DensityMode,
) -> Result<Vec<usize>> {
    if group.is_empty() {
        return Err(Error::Contract(
            "initial centers need a non-empty group".into(),
        ));
    }
    let d = group_matrix(group, descs, ctx);
    let c = initial_center_count(frames, mean_len);
    Ok(dpc::select_centers(&d, c, mode)?
        .into_iter()
        .map(|i| group[i])
        .collect())
}

/// Cluster membership over trajectory indices. `labels[i]` indexes `centers`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub centers: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.centers.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }
}

struct CenterIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl CenterIndex {
    fn new(centers: &[usize], descs: &[TrajectoryDescriptor], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (slot, &c) in centers.iter().enumerate() {
            let l = descs[c].features.location;
            buckets
                .entry(((l[0] / cell).floor() as i64, (l[1] / cell).floor() as i64))
                .or_default()
                .push(slot);
        }
        Self { cell, buckets }
    }

    /// Slots whose bucket could hold a center within `cell` (max-norm) of `l`.
    fn near(&self, l: [f64; 2]) -> Vec<usize> {
        let bx = (l[0] / self.cell).floor() as i64;
        let by = (l[1] / self.cell).floor() as i64;
        let mut out = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(v) = self.buckets.get(&(bx + dx, by + dy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Nearest center among those whose `2R x 2R` window (centered on the
/// center's mean location) contains the trajectory's mean location. A
/// trajectory matching no window, or only windows at distance `H`, goes to
/// the globally nearest center. Distance ties go to the lower slot.
pub fn assign_to_centers(
    descs: &[TrajectoryDescriptor],
    centers: &[usize],
    ctx: &NormalizationContext,
) -> Vec<usize> {
    let index = CenterIndex::new(centers, descs, ctx.r);
    crate::par::map_range(descs.len(), |j| {
        let lj = descs[j].features.location;
        let mut best: Option<(f64, usize)> = None;
        let mut kappa = ctx.h;
        for slot in index.near(lj) {
            let lc = descs[centers[slot]].features.location;
            if (lj[0] - lc[0]).abs() > ctx.r || (lj[1] - lc[1]).abs() > ctx.r {
                continue;
            }
            let d = trajectory_distance(&descs[j], &descs[centers[slot]], ctx);
            if d < kappa {
                kappa = d;
                best = Some((d, slot));
            }
        }
        match best {
            Some((_, slot)) => slot,
            None => nearest_slot(j, descs, centers, ctx, |_| true),
        }
    })
}

fn nearest_slot(
    j: usize,
    descs: &[TrajectoryDescriptor],
    centers: &[usize],
    ctx: &NormalizationContext,
    allowed: impl Fn(usize) -> bool,
) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for (slot, &c) in centers.iter().enumerate() {
        if !allowed(slot) {
            continue;
        }
        let d = trajectory_distance(&descs[j], &descs[c], ctx);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, slot));
        }
    }
    best.expect("at least one allowed center").1
}

/// Member with the highest within-cluster gamma (density peaks with `C = 1`).
fn update_center(
    members: &[usize],
    descs: &[TrajectoryDescriptor],
    ctx: &NormalizationContext,
    mode: DensityMode,
) -> usize {
    if members.len() == 1 {
        return members[0];
    }
    let d = group_matrix(members, descs, ctx);
    let scores = DpcScores::compute(&d, mode);
    let picked = dpc::select_centers_with(&d, &scores, 1).expect("non-empty cluster");
    let best = picked
        .into_iter()
        .min_by(|&a, &b| scores.gamma_cmp(a, b))
        .expect("at least one center");
    members[best]
}

/// Iterative assignment/update from the given initial centers, followed by
/// merging clusters below `min_cluster_size` into their nearest survivor.
pub fn refine(
    descs: &[TrajectoryDescriptor],
    initial: &[usize],
    ctx: &NormalizationContext,
    cfg: &ClusteringConfig,
) -> Result<Partition> {
    if initial.is_empty() {
        return Err(Error::Contract(
            "refinement needs at least one center".into(),
        ));
    }
    let mut centers = initial.to_vec();
    let mut labels = Vec::new();
    for _ in 0..cfg.iterations.max(1) {
        labels = assign_to_centers(descs, &centers, ctx);
        let mut members = vec![Vec::new(); centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let updated = crate::par::map_slice(&members, |m| {
            (!m.is_empty()).then(|| update_center(m, descs, ctx, cfg.density_mode))
        });
        let mut remap = vec![usize::MAX; centers.len()];
        let mut next = Vec::with_capacity(centers.len());
        for (slot, c) in updated.into_iter().enumerate() {
            if let Some(c) = c {
                remap[slot] = next.len();
                next.push(c);
            }
        }
        labels.iter_mut().for_each(|l| *l = remap[*l]);
        let converged = next == centers;
        centers = next;
        if cfg.stop_on_convergence && converged {
            break;
        }
    }
    let partition = Partition { centers, labels };
    Ok(merge_small(partition, descs, ctx, cfg.min_cluster_size))
}

/// Dissolve clusters with fewer than `min_size` members into the nearest
/// surviving center. When no cluster reaches `min_size` nothing is merged.
pub fn merge_small(
    p: Partition,
    descs: &[TrajectoryDescriptor],
    ctx: &NormalizationContext,
    min_size: usize,
) -> Partition {
    let mut sizes = vec![0usize; p.centers.len()];
    for &l in &p.labels {
        sizes[l] += 1;
    }
    let survives: Vec<bool> = sizes.iter().map(|&s| s >= min_size).collect();
    if survives.iter().all(|&s| s) || !survives.iter().any(|&s| s) {
        return p;
    }
    let mut remap = vec![usize::MAX; p.centers.len()];
    let mut centers = Vec::new();
    for (slot, &c) in p.centers.iter().enumerate() {
        if survives[slot] {
            remap[slot] = centers.len();
            centers.push(c);
        }
    }
    let labels = crate::par::map_range(p.labels.len(), |j| {
        let l = p.labels[j];
        if survives[l] {
            remap[l]
        } else {
            remap[nearest_slot(j, descs, &p.centers, ctx, |s| survives[s])]
        }
    });
    Partition { centers, labels }
}

/// A cluster of trajectories. Ids are those of the input trajectory set.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperTrajectory {
    pub id: usize,
    pub center: usize,
    pub members: Vec<usize>,
    pub location: [f64; 2],
    pub color: [f64; 3],
    pub velocity: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperTrajectorySet {
    pub items: Vec<SuperTrajectory>,
}

impl SuperTrajectorySet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Build from a partition over trajectory indices of `trajs`.
    pub fn from_partition(
        p: &Partition,
        trajs: &TrajectorySet,
        descs: &[TrajectoryDescriptor],
    ) -> Self {
        let items = p
            .members()
            .into_iter()
            .enumerate()
            .map(|(slot, m)| {
                let n = m.len() as f64;
                let mut location = [0.0; 2];
                let mut color = [0.0; 3];
                let mut velocity = [0.0; 2];
                for &i in &m {
                    let f = &descs[i].features;
                    (0..2).for_each(|k| location[k] += f.location[k] / n);
                    (0..3).for_each(|k| color[k] += f.color[k] / n);
                    (0..2).for_each(|k| velocity[k] += f.velocity[k] / n);
                }
                SuperTrajectory {
                    id: slot,
                    center: trajs.trajectories[p.centers[slot]].id,
                    members: m.iter().map(|&i| trajs.trajectories[i].id).collect(),
                    location,
                    color,
                    velocity,
                }
            })
            .collect();
        Self { items }
    }

    /// Map from trajectory id to super-trajectory position in `items`.
    pub fn membership(&self) -> HashMap<usize, usize> {
        let mut m = HashMap::new();
        for (k, st) in self.items.iter().enumerate() {
            for &id in &st.members {
                m.insert(id, k);
            }
        }
        m
    }

    /// `supertraj id center_id n` followed by a line of member ids.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for st in &self.items {
            writeln!(s, "supertraj {} {} {}", st.id, st.center, st.members.len()).unwrap();
            let ids: Vec<String> = st.members.iter().map(|m| m.to_string()).collect();
            writeln!(s, "{}", ids.join(" ")).unwrap();
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parse membership back; aggregate features are recomputed from `trajs`
    /// and `descs` (indexed like `trajs.trajectories`).
    pub fn from_text<R: Read>(
        r: R,
        trajs: &TrajectorySet,
        descs: &[TrajectoryDescriptor],
    ) -> Result<Self> {
        let index: HashMap<usize, usize> = trajs
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id, i))
            .collect();
        let lookup = |id: usize| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Format(format!("unknown trajectory id {id}")))
        };
        let mut lines = BufReader::new(r).lines();
        let mut centers = Vec::new();
        let mut labels = vec![usize::MAX; trajs.len()];
        while let Some(line) = lines.next() {
            let line = line.map_err(|e| Error::io("<supertrajectories>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (center, n) = match parts[..] {
                ["supertraj", _, c, n] => (
                    c.parse::<usize>()
                        .map_err(|_| Error::Format(format!("bad center in `{line}`")))?,
                    n.parse::<usize>()
                        .map_err(|_| Error::Format(format!("bad count in `{line}`")))?,
                ),
                _ => {
                    return Err(Error::Format(format!(
                        "expected `supertraj id center n`, got `{line}`"
                    )))
                }
            };
            let ids_line = lines
                .next()
                .ok_or_else(|| Error::Format("missing member line".into()))?
                .map_err(|e| Error::io("<supertrajectories>", e))?;
            let ids: Vec<usize> = ids_line
                .split_whitespace()
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|_| Error::Format(format!("bad member id `{v}`")))
                })
                .collect::<Result<_>>()?;
            if ids.len() != n {
                return Err(Error::Format(format!(
                    "expected {n} members, got {}",
                    ids.len()
                )));
            }
            let slot = centers.len();
            centers.push(lookup(center)?);
            for id in ids {
                let i = lookup(id)?;
                if labels[i] != usize::MAX {
                    return Err(Error::Format(format!("trajectory {id} listed twice")));
                }
                labels[i] = slot;
            }
        }
        if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Format(format!(
                "trajectory {} has no super-trajectory",
                trajs.trajectories[i].id
            )));
        }
        Ok(Self::from_partition(
            &Partition { centers, labels },
            trajs,
            descs,
        ))
    }

    /// Frame `t` painted with each cluster's mean color at the positions of
    /// its trajectories; uncovered pixels stay white.
    pub fn render_frame(&self, trajs: &TrajectorySet, t: usize, block: usize) -> Frame {
        let mut out = Frame::filled(trajs.width, trajs.height, [255, 255, 255]);
        let by_id = self.membership();
        let half = (block.max(1) - 1) / 2;
        for tr in &trajs.trajectories {
            let (Some(p), Some(&k)) = (tr.point_at(t), by_id.get(&tr.id)) else {
                continue;
            };
            let c = self.items[k]
                .color
                .map(|v| v.round().clamp(0.0, 255.0) as u8);
            let (px, py) = p.pixel(trajs.width, trajs.height);
            for y in
                py.saturating_sub(half)..(py.saturating_sub(half) + block.max(1)).min(trajs.height)
            {
                for x in px.saturating_sub(half)
                    ..(px.saturating_sub(half) + block.max(1)).min(trajs.width)
                {
                    out.set(x, y, c);
                }
            }
        }
        out
    }
}

/// End-to-end super-trajectory generation: grid groups, per-group
/// density-peaks centers, then refinement.
pub fn generate_supertrajectories(
    trajs: &TrajectorySet,
    video: &VideoSequence,
    cfg: &ClusteringConfig,
) -> Result<SuperTrajectorySet> {
    Ok(cluster(trajs, video, cfg)?.0)
}

/// Like [`generate_supertrajectories`] but also returns the descriptors and
/// the partition over trajectory indices.
pub fn cluster(
    trajs: &TrajectorySet,
    video: &VideoSequence,
    cfg: &ClusteringConfig,
) -> Result<(SuperTrajectorySet, Vec<TrajectoryDescriptor>, Partition)> {
    cfg.validate()?;
    if trajs.is_empty() {
        return Err(Error::Contract(
            "cannot cluster an empty trajectory set".into(),
        ));
    }
    let descs = describe(trajs, video, cfg.delta_t);
    let feats: Vec<TrajectoryFeatures> = descs.iter().map(|d| d.features).collect();
    let ctx = NormalizationContext::new(trajs.width, trajs.height, cfg.k, &feats, cfg.h);
    let (_, groups) = grid_partition(trajs, cfg.k);
    let mean_len = trajs.mean_length();
    let per_group = crate::par::map_slice(&groups, |g| {
        if g.is_empty() {
            Ok(Vec::new())
        } else {
            initial_centers(g, &descs, trajs.frames, mean_len, &ctx, cfg.density_mode)
        }
    });
    let mut initial = Vec::new();
    for g in per_group {
        initial.extend(g?);
    }
    let partition = refine(&descs, &initial, &ctx, cfg)?;
    let set = SuperTrajectorySet::from_partition(&partition, trajs, &descs);
    Ok((set, descs, partition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{TrajPoint, Trajectory};

    fn desc(
        loc: [f64; 2],
        color: [f64; 3],
        vel: [f64; 2],
        start: usize,
        end: usize,
    ) -> TrajectoryDescriptor {
        TrajectoryDescriptor {
            features: TrajectoryFeatures {
                location: loc,
                color,
                velocity: vel,
            },
            start,
            end,
        }
    }

    fn ctx(r: f64, mean_motion: f64) -> NormalizationContext {
        NormalizationContext {
            max_intensity: 255.0,
            r,
            mean_motion,
            h: DEFAULT_H,
        }
    }

    #[test]
    fn distance_examples() {
        let c = ctx(10.0, 2.0);
        let a = desc([5.0, 5.0], [10.0, 20.0, 30.0], [1.0, 0.0], 1, 5);
        assert_eq!(trajectory_distance(&a, &a, &c), 0.0);
        let far = desc([5.0, 5.0], [10.0, 20.0, 30.0], [1.0, 0.0], 10, 14);
        assert_eq!(trajectory_distance(&a, &far, &c), DEFAULT_H);
        // location 5/10, color 255/255 (3-4-5 scaled by 51), velocity 1/2
        let b = desc(
            [8.0, 9.0],
            [10.0 + 153.0, 20.0 + 204.0, 30.0],
            [1.0, 1.0],
            4,
            9,
        );
        let want = 5.0 / 10.0 + 255.0 / 255.0 + 1.0 / 2.0;
        assert!((trajectory_distance(&a, &b, &c) - want).abs() < 1e-12);
        // zero mean motion falls back to a unit normalizer
        let z = ctx(10.0, 0.0);
        assert!((trajectory_distance(&a, &b, &z) - (0.5 + 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn grid_examples() {
        assert_eq!(sampling_step(400, 300, 1200), 10.0);
        let g = Grid::new(400, 300, 1200);
        assert_eq!((g.cols, g.rows), (40, 30));
        assert_eq!(g.cell(25.0, 7.0), (2, 0));
        assert_eq!(g.cell(399.0, 299.0), (39, 29));
        let g1 = Grid::new(37, 23, 1);
        assert_eq!((g1.cols, g1.rows), (1, 1));
    }

    #[test]
    fn center_count_rounding() {
        assert_eq!(initial_center_count(40, 10.0), 4);
        assert_eq!(initial_center_count(10, 40.0), 1);
        assert_eq!(initial_center_count(25, 10.0), 3);
        assert_eq!(initial_center_count(24, 10.0), 2);
    }

    #[test]
    fn singleton_group_is_its_own_center() {
        let d = vec![desc([1.0, 1.0], [0.0; 3], [0.0; 2], 1, 5)];
        let c =
            initial_centers(&[0], &d, 10, 5.0, &ctx(5.0, 1.0), DensityMode::Similarity).unwrap();
        assert_eq!(c, vec![0]);
    }

    #[test]
    fn temporal_bands_each_get_a_center() {
        // 15 trajectories in 3 non-overlapping bands of 10 frames each
        let descs: Vec<_> = (0..15)
            .map(|i| {
                let band = i / 5;
                let j = (i % 5) as f64;
                desc(
                    [2.0 + j * 0.3, 3.0 + j * 0.2],
                    [100.0; 3],
                    [0.0; 2],
                    band * 10 + 1,
                    band * 10 + 10,
                )
            })
            .collect();
        let group: Vec<usize> = (0..15).collect();
        let c = initial_centers(
            &group,
            &descs,
            30,
            10.0,
            &ctx(5.0, 1.0),
            DensityMode::Similarity,
        )
        .unwrap();
        let mut bands: Vec<usize> = c.iter().map(|&i| i / 5).collect();
        bands.sort_unstable();
        bands.dedup();
        assert_eq!(bands, vec![0, 1, 2]);
    }

    #[test]
    fn refine_identical_trajectories_single_cluster() {
        let descs = vec![desc([4.0, 4.0], [50.0; 3], [1.0, 0.0], 1, 10); 12];
        let p = refine(&descs, &[3], &ctx(5.0, 1.0), &ClusteringConfig::default()).unwrap();
        assert_eq!(p.centers.len(), 1);
        assert!(p.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn refine_separates_two_blobs() {
        let mut descs = Vec::new();
        for i in 0..20 {
            let j = (i % 5) as f64;
            descs.push(desc(
                [10.0 + j, 10.0 + (i / 5) as f64],
                [200.0, 30.0, 30.0],
                [2.0, 0.0],
                1,
                20,
            ));
        }
        for i in 0..20 {
            let j = (i % 5) as f64;
            descs.push(desc(
                [16.0 + j, 10.0 + (i / 5) as f64],
                [30.0, 30.0, 200.0],
                [0.0, 0.0],
                1,
                20,
            ));
        }
        let cfg = ClusteringConfig::default();
        let p = refine(&descs, &[0, 39], &ctx(10.0, 1.0), &cfg).unwrap();
        assert_eq!(p.centers.len(), 2);
        for i in 0..40 {
            assert_eq!(
                p.labels[i],
                p.labels[if i < 20 { 0 } else { 39 }],
                "item {i}"
            );
        }
        assert_ne!(p.labels[0], p.labels[39]);
    }

    #[test]
    fn merge_small_clusters() {
        let descs: Vec<_> = (0..8)
            .map(|i| desc([i as f64, 0.0], [0.0; 3], [0.0; 2], 1, 5))
            .collect();
        let p = Partition {
            centers: vec![0, 6],
            labels: vec![0, 0, 0, 0, 0, 0, 1, 1],
        };
        let m = merge_small(p, &descs, &ctx(4.0, 1.0), 5);
        assert_eq!(m.centers, vec![0]);
        assert!(m.labels.iter().all(|&l| l == 0));
    }

    fn static_set(w: usize, h: usize, t: usize) -> (TrajectorySet, VideoSequence) {
        let video = VideoSequence::new(vec![Frame::filled(w, h, [90, 90, 90]); t]).unwrap();
        let mut trajectories = Vec::new();
        for y in 0..h {
            for x in 0..w {
                trajectories.push(Trajectory {
                    id: trajectories.len(),
                    points: (1..=t)
                        .map(|f| TrajPoint::new(x as f64, y as f64, f))
                        .collect(),
                });
            }
        }
        (
            TrajectorySet {
                width: w,
                height: h,
                frames: t,
                trajectories,
            },
            video,
        )
    }

    #[test]
    fn static_scene_matches_grid_cells() {
        let (trajs, video) = static_set(10, 10, 6);
        let cfg = ClusteringConfig {
            k: 4,
            ..Default::default()
        };
        let set = generate_supertrajectories(&trajs, &video, &cfg).unwrap();
        assert_eq!(set.len(), 4);
        let grid = Grid::new(10, 10, 4);
        for st in &set.items {
            let cells: std::collections::HashSet<_> = st
                .members
                .iter()
                .map(|&id| {
                    let p = trajs.trajectories[id].points[0];
                    grid.cell(p.x, p.y)
                })
                .collect();
            assert_eq!(cells.len(), 1);
            assert_eq!(st.members.len(), 25);
        }
    }

    #[test]
    fn text_round_trip_and_partition() {
        let (trajs, video) = static_set(8, 6, 5);
        let cfg = ClusteringConfig {
            k: 6,
            min_cluster_size: 2,
            ..Default::default()
        };
        let (set, descs, _) = cluster(&trajs, &video, &cfg).unwrap();
        let mut seen = vec![0; trajs.len()];
        for st in &set.items {
            assert!(st.members.contains(&st.center));
            st.members.iter().for_each(|&m| seen[m] += 1);
        }
        assert!(seen.iter().all(|&c| c == 1));
        let back = SuperTrajectorySet::from_text(set.to_text().as_bytes(), &trajs, &descs).unwrap();
        assert_eq!(back, set);
        let frame = set.render_frame(&trajs, 1, 1);
        assert_eq!(frame.get(0, 0), [90, 90, 90]);
    }

    #[test]
    fn empty_set_is_rejected() {
        let (mut trajs, video) = static_set(4, 4, 4);
        trajs.trajectories.clear();
        assert!(matches!(
            generate_supertrajectories(&trajs, &video, &ClusteringConfig::default()),
            Err(Error::Contract(_))
        ));
        assert!(refine(&[], &[], &ctx(1.0, 1.0), &ClusteringConfig::default()).is_err());
    }
}
