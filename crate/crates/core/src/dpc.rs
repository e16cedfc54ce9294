//! Density-peaks clustering with isolated-group handling.
//!
//! Items are ranked by local density `rho`; ties go to the lower index, so
//! "higher density" below always means "earlier in that ranking". `delta` is
//! the distance to the nearest higher-ranked item and `gamma = rho * delta`
//! ranks center candidates. Distances equal to the sentinel `H` mark pairs
//! with no temporal overlap.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Default sentinel distance for pairs that share no frames.
pub const DEFAULT_H: f64 = 1e9;

/// Symmetric pairwise distances with a sentinel for unrelated pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    h: f64,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validate a dense row-major matrix.
    pub fn new(n: usize, entries: Vec<f64>, h: f64) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Contract(format!(
                "{} entries for a {n}x{n} matrix",
                entries.len()
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Contract(format!(
                "sentinel H = {h} must be finite and positive"
            )));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::Contract(format!("d[{i}][{i}] must be 0")));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if v != entries[j * n + i] {
                    return Err(Error::Contract(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
                if !(0.0..=h).contains(&v) {
                    return Err(Error::Contract(format!("d[{i}][{j}] = {v} outside [0, H]")));
                }
            }
        }
        Ok(Self { n, h, entries })
    }

    /// Build from a distance function evaluated on the upper triangle.
    /// Values at or above `h` are stored as `h`.
    pub fn from_fn(n: usize, h: f64, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        let rows = crate::par::map_range(n, |i| {
            ((i + 1)..n).map(|j| f(i, j).min(h)).collect::<Vec<_>>()
        });
        let mut entries = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                let j = i + 1 + k;
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Self { n, h, entries }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn is_unrelated(&self, i: usize, j: usize) -> bool {
        self.get(i, j) >= self.h
    }
}

/// How local density is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityMode {
    /// `rho_i = sum_{j != i} exp(-d_ij)`, with `H` entries contributing 0.
    #[default]
    Similarity,
    /// `rho_i = sum_j d_ij`, the plain distance sum.
    Literal,
}

impl std::str::FromStr for DensityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(DensityMode::Similarity),
            "literal" => Ok(DensityMode::Literal),
            other => Err(Error::Config(format!("unknown density mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for DensityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DensityMode::Similarity => "similarity",
            DensityMode::Literal => "literal",
        })
    }
}

pub fn local_density(d: &DistanceMatrix, mode: DensityMode) -> Vec<f64> {
    crate::par::map_range(d.n, |i| {
        let mut rho = 0.0;
        for j in 0..d.n {
            match mode {
                DensityMode::Literal => rho += d.get(i, j),
                DensityMode::Similarity => {
                    if j != i && !d.is_unrelated(i, j) {
                        rho += (-d.get(i, j)).exp();
                    }
                }
            }
        }
        rho
    })
}

/// `true` if item `j` ranks above item `i`.
#[inline]
pub fn outranks(rho: &[f64], j: usize, i: usize) -> bool {
    rho[j] > rho[i] || (rho[j] == rho[i] && j < i)
}

/// Items sorted from highest to lowest density.
pub fn density_order(rho: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    order
}

/// Distance to the nearest higher-density item. The top-ranked item takes its
/// largest distance to any other item; a singleton gets 0.
pub fn delta_distance(d: &DistanceMatrix, rho: &[f64]) -> Vec<f64> {
    crate::par::map_range(d.n, |i| {
        let mut best = f64::INFINITY;
        let mut top = true;
        for j in 0..d.n {
            if j != i && outranks(rho, j, i) {
                top = false;
                best = best.min(d.get(i, j));
            }
        }
        if top {
            (0..d.n)
                .filter(|&j| j != i)
                .map(|j| d.get(i, j))
                .fold(0.0, f64::max)
        } else {
            best
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpcScores {
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl DpcScores {
    pub fn compute(d: &DistanceMatrix, mode: DensityMode) -> Self {
        let rho = local_density(d, mode);
        let delta = delta_distance(d, &rho);
        let gamma = rho.iter().zip(&delta).map(|(r, s)| r * s).collect();
        Self { rho, delta, gamma }
    }

    /// Higher gamma first, then higher rho, then lower index.
    pub fn gamma_cmp(&self, a: usize, b: usize) -> Ordering {
        self.gamma[b]
            .total_cmp(&self.gamma[a])
            .then(self.rho[b].total_cmp(&self.rho[a]))
            .then(a.cmp(&b))
    }

    /// Items with `delta == H`: the density peaks of groups that share no
    /// frames with any denser item.
    pub fn isolated(&self, h: f64) -> Vec<usize> {
        (0..self.delta.len())
            .filter(|&i| self.delta[i] >= h)
            .collect()
    }
}

/// Pick cluster centers. If more isolated groups exist than `c` requests,
/// every isolated-group peak becomes a center; otherwise the `c` items with
/// the highest gamma do (`c` capped at `n`). Centers come back in gamma order.
pub fn select_centers(d: &DistanceMatrix, c: usize, mode: DensityMode) -> Result<Vec<usize>> {
    let scores = DpcScores::compute(d, mode);
    select_centers_with(d, &scores, c)
}

pub fn select_centers_with(d: &DistanceMatrix, scores: &DpcScores, c: usize) -> Result<Vec<usize>> {
    if c < 1 {
        return Err(Error::Contract(
            "requested center count must be at least 1".into(),
        ));
    }
    if d.n == 0 {
        return Err(Error::Contract(
            "cannot select centers from zero items".into(),
        ));
    }
    let mut isolated = scores.isolated(d.h);
    if c < isolated.len() {
        isolated.sort_by(|&a, &b| scores.gamma_cmp(a, b));
        return Ok(isolated);
    }
    let mut order: Vec<usize> = (0..d.n).collect();
    order.sort_by(|&a, &b| scores.gamma_cmp(a, b));
    order.truncate(c.min(d.n));
    Ok(order)
}

/// Final labeling: `labels[i]` indexes into `centers`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub centers: Vec<usize>,
    pub labels: Vec<usize>,
}

impl ClusterAssignment {
    /// Item index of the center that `i` belongs to.
    pub fn center_of(&self, i: usize) -> usize {
        self.centers[self.labels[i]]
    }
}

/// Walk items in decreasing density; each non-center copies the label of its
/// nearest reachable higher-density item. Items with no such neighbor go to
/// the nearest center, or to the lowest-index center when every center is at
/// distance `H`.
pub fn assign_members(
    d: &DistanceMatrix,
    rho: &[f64],
    centers: &[usize],
) -> Result<ClusterAssignment> {
    if centers.is_empty() {
        return Err(Error::Contract(
            "assignment needs at least one center".into(),
        ));
    }
    let n = d.n;
    let mut slot = vec![usize::MAX; n];
    for (k, &c) in centers.iter().enumerate() {
        if c >= n {
            return Err(Error::Contract(format!(
                "center {c} out of range for {n} items"
            )));
        }
        slot[c] = k;
    }
    let order = density_order(rho);
    let mut labels = vec![usize::MAX; n];
    for (pos, &i) in order.iter().enumerate() {
        if slot[i] != usize::MAX {
            labels[i] = slot[i];
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &j in &order[..pos] {
            if d.is_unrelated(i, j) {
                continue;
            }
            let dij = d.get(i, j);
            if best.is_none_or(|(bd, bj)| dij < bd || (dij == bd && j < bj)) {
                best = Some((dij, j));
            }
        }
        labels[i] = match best {
            Some((_, j)) => labels[j],
            None => nearest_center(d, i, centers),
        };
    }
    Ok(ClusterAssignment {
        centers: centers.to_vec(),
        labels,
    })
}

fn nearest_center(d: &DistanceMatrix, i: usize, centers: &[usize]) -> usize {
    let mut best: Option<(f64, usize, usize)> = None;
    for (k, &c) in centers.iter().enumerate() {
        if d.is_unrelated(i, c) {
            continue;
        }
        let dc = d.get(i, c);
        if best.is_none_or(|(bd, bc, _)| dc < bd || (dc == bd && c < bc)) {
            best = Some((dc, c, k));
        }
    }
    match best {
        Some((_, _, k)) => k,
        None => {
            let (k, _) = centers
                .iter()
                .enumerate()
                .min_by_key(|&(_, &c)| c)
                .expect("centers non-empty");
            k
        }
    }
}
