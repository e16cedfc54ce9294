//! Exact backward nearest-neighbor search over region descriptors.
//!
//! Descriptors are rotated onto their leading principal axes. An orthonormal
//! projection never lengthens a vector, so distances between projected
//! points, and to bounding boxes of projected points, are lower bounds on
//! the true distance. A kd-tree over the projections prunes with those
//! bounds, each node also remembering the earliest frame below it. Every
//! surviving candidate is scored with the full distance in natural order,
//! so rankings match an exhaustive scan bit for bit.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::par;

const LEAF_SIZE: usize = 8;
/// Principal axes kept in the projection.
const PROJ_DIMS: usize = 16;
/// Items used to estimate the covariance; the basis only has to be
/// orthonormal, not optimal.
const COVARIANCE_SAMPLES: usize = 4096;
/// Projected dimensions summed between early-rejection checks.
const ABORT_STRIDE: usize = 8;
/// Slack on every pruning bound, absorbing rounding in the projection.
const SLACK_REL: f64 = 1e-9;
const SLACK_ABS: f64 = 1e-10;
/// Index radius of the seed candidates tried before the tree walk.
const HINT_RADIUS: usize = 4;

/// Flat descriptor store: `data[i * dim..(i + 1) * dim]` is item `i`.
#[derive(Clone, Debug)]
pub struct DescriptorStore {
    pub dim: usize,
    pub data: Vec<f64>,
    pub frames: Vec<usize>,
}

impl DescriptorStore {
    pub fn new(dim: usize, data: Vec<f64>, frames: Vec<usize>) -> Self {
        assert!(
            dim > 0 && data.len() == dim * frames.len(),
            "descriptor store shape"
        );
        Self { dim, data, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

enum Node {
    Leaf { items: Vec<usize> },
    Split { left: usize, right: usize },
}

pub struct KdTree<'a> {
    store: &'a DescriptorStore,
    nodes: Vec<Node>,
    min_frames: Vec<usize>,
    /// Per node, `m` lower then `m` upper box corners.
    boxes: Vec<f64>,
    root: usize,
    m: usize,
    /// Projected items, `m` values each.
    proj: Vec<f64>,
    /// First item of each frame when items are stored frame-major.
    frame_starts: Option<Vec<usize>>,
}

fn loosen(bound: f64) -> f64 {
    bound * (1.0 + SLACK_REL) + SLACK_ABS
}

impl<'a> KdTree<'a> {
    pub fn build(store: &'a DescriptorStore) -> Self {
        let (m, proj) = project(store);
        let mut tree = KdTree {
            store,
            nodes: Vec::new(),
            min_frames: Vec::new(),
            boxes: Vec::new(),
            root: 0,
            m,
            proj,
            frame_starts: frame_starts(&store.frames),
        };
        let items: Vec<usize> = (0..store.len()).collect();
        tree.root = tree.build_node(items);
        tree
    }

    fn p(&self, i: usize) -> &[f64] {
        &self.proj[i * self.m..(i + 1) * self.m]
    }

    fn push(&mut self, node: Node, items: &[usize]) -> usize {
        let m = self.m;
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for &i in items {
            for (a, &v) in self.p(i).iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        self.boxes.extend(lo);
        self.boxes.extend(hi);
        let mf = items
            .iter()
            .map(|&i| self.store.frames[i])
            .min()
            .unwrap_or(usize::MAX);
        self.min_frames.push(mf);
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn build_node(&mut self, mut items: Vec<usize>) -> usize {
        if items.len() <= LEAF_SIZE {
            let all = items.clone();
            return self.push(Node::Leaf { items }, &all);
        }
        let (mut axis, mut spread) = (0, 0.0);
        for a in 0..self.m {
            let (lo, hi) = items
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.p(i)[a];
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > spread {
                (axis, spread) = (a, hi - lo);
            }
        }
        if spread <= 0.0 {
            let all = items.clone();
            return self.push(Node::Leaf { items }, &all);
        }
        let all = items.clone();
        items.sort_by(|&a, &b| self.p(a)[axis].total_cmp(&self.p(b)[axis]).then(a.cmp(&b)));
        let right_items = items.split_off(items.len() / 2);
        let left = self.build_node(items);
        let right = self.build_node(right_items);
        self.push(Node::Split { left, right }, &all)
    }

    /// Squared distance from projected `q` to the box of `node`, summed
    /// until it passes `bound`.
    fn box_distance(&self, node: usize, qp: &[f64], bound: f64) -> f64 {
        let m = self.m;
        let b = &self.boxes[node * 2 * m..(node + 1) * 2 * m];
        let (lo, hi) = b.split_at(m);
        let mut acc = 0.0;
        for (a, &v) in qp.iter().enumerate() {
            let gap = if v < lo[a] {
                lo[a] - v
            } else if v > hi[a] {
                v - hi[a]
            } else {
                continue;
            };
            acc += gap * gap;
            if acc > bound {
                break;
            }
        }
        acc
    }

    /// The `k` nearest items to item `q` among items from frames up to
    /// `frames[q]`, excluding `q`, ordered by (squared distance, index).
    pub fn query(&self, q: usize, k: usize) -> Vec<usize> {
        if k == 0 || self.store.is_empty() {
            return Vec::new();
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        // nearby indices are usually nearby regions, which tightens the
        // bounds before the walk starts
        for i in self.hints(q) {
            self.offer(q, i, k, &mut best);
        }
        if self.min_frames[self.root] <= self.store.frames[q] {
            self.search(self.root, q, k, &mut best);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    fn bound(best: &[(f64, usize)], k: usize) -> f64 {
        if best.len() == k {
            loosen(best[k - 1].0)
        } else {
            f64::INFINITY
        }
    }

    fn hints(&self, q: usize) -> Vec<usize> {
        let n = self.store.len();
        let around = |c: usize| c.saturating_sub(HINT_RADIUS)..(c + HINT_RADIUS + 1).min(n);
        let mut out: Vec<usize> = around(q).collect();
        if let Some(starts) = &self.frame_starts {
            let f = self.store.frames[q];
            if let (Some(&own), Some(&prev)) =
                (starts.get(f), f.checked_sub(1).and_then(|p| starts.get(p)))
            {
                if prev < own {
                    out.extend(around((prev + (q - own)).min(own - 1)));
                }
            }
        }
        out
    }

    fn offer(&self, q: usize, i: usize, k: usize, best: &mut Vec<(f64, usize)>) {
        let s = self.store;
        if i == q || s.frames[i] > s.frames[q] {
            return;
        }
        let bound = Self::bound(best, k);
        if bound.is_finite() && exceeds(self.p(q), self.p(i), bound) {
            return;
        }

        let cand = (squared_distance(s.row(q), s.row(i)), i);
        if best.len() == k && !less(cand, best[k - 1]) {
            return;
        }
        if best.iter().any(|b| b.1 == i) {
            return;
        }
        let pos = best.partition_point(|&b| less(b, cand));
        best.insert(pos, cand);
        best.truncate(k);
    }

    /// Visit `node`, whose box is already known to lie within the bound.
    fn search(&self, node: usize, q: usize, k: usize, best: &mut Vec<(f64, usize)>) {
        match &self.nodes[node] {
            Node::Leaf { items } => {
                for &i in items {
                    self.offer(q, i, k, best);
                }
            }
            &Node::Split { left, right } => {
                let qf = self.store.frames[q];
                let qp = self.p(q);
                let bound = Self::bound(best, k);
                let dl = if self.min_frames[left] > qf {
                    f64::INFINITY
                } else {
                    self.box_distance(left, qp, bound)
                };
                let dr = if self.min_frames[right] > qf {
                    f64::INFINITY
                } else {
                    self.box_distance(right, qp, bound)
                };
                let (near, dn, far, df) = if dr < dl {
                    (right, dr, left, dl)
                } else {
                    (left, dl, right, dr)
                };
                if dn <= bound {
                    self.search(near, q, k, best);
                }
                if df.is_finite() && df <= Self::bound(best, k) {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// Whether the squared distance provably exceeds `bound`, checked on
/// growing prefixes.
fn exceeds(a: &[f64], b: &[f64], bound: f64) -> bool {
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(ABORT_STRIDE).zip(b.chunks(ABORT_STRIDE)) {
        acc += squared_distance(ca, cb);
        if acc > bound {
            return true;
        }
    }
    false
}

/// Per-frame start offsets, or `None` unless frames are non-decreasing.
fn frame_starts(frames: &[usize]) -> Option<Vec<usize>> {
    if frames.windows(2).any(|w| w[1] < w[0]) {
        return None;
    }
    let last = *frames.last()?;
    let mut starts = vec![usize::MAX; last + 1];
    for (i, &f) in frames.iter().enumerate().rev() {
        starts[f] = i;
    }
    // empty frames take the start of the next non-empty one
    let mut next = frames.len();
    for s in starts.iter_mut().rev() {
        if *s == usize::MAX {
            *s = next;
        }
        next = *s;
    }
    Some(starts)
}

/// Centered coordinates along the leading principal axes, estimated from
/// an evenly strided sample.
fn project(s: &DescriptorStore) -> (usize, Vec<f64>) {
    let (n, d) = (s.len(), s.dim);
    let m = PROJ_DIMS.min(d);
    if n == 0 {
        return (m, Vec::new());
    }
    let step = n.div_ceil(COVARIANCE_SAMPLES);
    let sample: Vec<usize> = (0..n).step_by(step).collect();
    let mut mean = vec![0.0; d];
    for &i in &sample {
        for (m, &v) in mean.iter_mut().zip(s.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= sample.len() as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut c = vec![0.0; d];
    for &i in &sample {
        for ((c, &v), &mu) in c.iter_mut().zip(s.row(i)).zip(&mean) {
            *c = v - mu;
        }
        for a in 0..d {
            if c[a] == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .total_cmp(&eig.eigenvalues[x])
            .then(x.cmp(&y))
    });
    // axes stored row-wise for contiguous dot products
    let axes: Vec<f64> = order[..m]
        .iter()
        .flat_map(|&c| {
            eig.eigenvectors
                .column(c)
                .iter()
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for ((dst, &v), &mu) in c.iter_mut().zip(s.row(i)).zip(&mean) {
            *dst = v - mu;
        }
        for (a, o) in out[i * m..(i + 1) * m].iter_mut().enumerate() {
            *o = axes[a * d..(a + 1) * d]
                .iter()
                .zip(&c)
                .map(|(x, y)| x * y)
                .sum();
        }
    }
    (m, out)
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Backward `k`-NN lists for every item: neighbors come from the same or
/// earlier frames.
pub fn knn_backward(store: &DescriptorStore, k: usize) -> Vec<Vec<usize>> {
    let tree = KdTree::build(store);
    par::map_range(store.len(), |q| tree.query(q, k))
}
