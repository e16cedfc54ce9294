//! SLIC superpixels: k-means in (L, a, b, x, y) with a compactness weight,
//! grid seeding, and a connectivity pass that absorbs orphan fragments into
//! their largest neighbor.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::frame::Frame;

/// sRGB (0-255) to CIE L*a*b* under D65.
pub fn rgb_to_lab(c: [u8; 3]) -> [f64; 3] {
    fn lin(v: u8) -> f64 {
        let v = v as f64 / 255.0;
        if v <= 0.04045 {
            v / 12.92
        } else {
            ((v + 0.055) / 1.055).powf(2.4)
        }
    }
    fn f(t: f64) -> f64 {
        const D: f64 = 6.0 / 29.0;
        if t > D * D * D {
            t.cbrt()
        } else {
            t / (3.0 * D * D) + 4.0 / 29.0
        }
    }
    let (r, g, b) = (lin(c[0]), lin(c[1]), lin(c[2]));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn lab_image(frame: &Frame) -> Vec<[f64; 3]> {
    frame.pixels().iter().map(|&c| rgb_to_lab(c)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicConfig {
    pub target_count: usize,
    /// Weight of spatial proximity against Lab color distance.
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            target_count: 2000,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

/// Per-pixel region labels for one frame; labels are `0..count`, numbered in
/// scan order of each region's first pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Superpixels {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl Superpixels {
    /// Pixel indices of each region.
    pub fn regions(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

pub fn slic_regions(frame: &Frame, cfg: &SlicConfig) -> Result<Superpixels> {
    let (w, h) = (frame.width(), frame.height());
    let n = w * h;
    if cfg.target_count == 0 || cfg.target_count > n {
        return Err(Error::Config(format!(
            "superpixel count {} must be in 1..={n} for a {w}x{h} frame",
            cfg.target_count
        )));
    }
    let lab = lab_image(frame);
    let step = (n as f64 / cfg.target_count as f64).sqrt();
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let grad = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| lab[y * w + x];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let dx: f64 = (0..3).map(|k| (at(xr, y)[k] - at(xl, y)[k]).powi(2)).sum();
        let dy: f64 = (0..3).map(|k| (at(x, yd)[k] - at(x, yu)[k]).powi(2)).sum();
        dx + dy
    };

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (((i as f64 + 0.5) * sx) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * sy) as usize).min(h - 1);
            // move the seed to the lowest gradient in its 3x3 neighborhood
            let (mut bx, mut by, mut bg) = (cx, cy, grad(cx, cy));
            for yy in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for xx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = grad(xx, yy);
                    if g < bg {
                        (bx, by, bg) = (xx, yy, g);
                    }
                }
            }
            centers.push(Center {
                lab: lab[by * w + bx],
                x: bx as f64,
                y: by as f64,
            });
        }
    }

    let spatial = (cfg.compactness / step).powi(2);
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    let window = step.ceil() as i64;
    for _ in 0..cfg.iterations.max(1) {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c.x.round() as i64 - window).max(0) as usize;
            let x1 = ((c.x.round() as i64 + window) as usize).min(w - 1);
            let y0 = (c.y.round() as i64 - window).max(0) as usize;
            let y1 = ((c.y.round() as i64 + window) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let p = lab[i];
                    let dc = (p[0] - c.lab[0]).powi(2)
                        + (p[1] - c.lab[1]).powi(2)
                        + (p[2] - c.lab[2]).powi(2);
                    let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = dc + ds * spatial;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k as u32;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l == u32::MAX {
                continue;
            }
            let a = &mut acc[l as usize];
            let p = lab[i];
            a[0] += p[0];
            a[1] += p[1];
            a[2] += p[2];
            a[3] += (i % w) as f64;
            a[4] += (i / w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                *c = Center {
                    lab: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
                    x: a[3] / a[5],
                    y: a[4] / a[5],
                };
            }
        }
    }
    // pixels no window reached join the nearest center in the image plane
    for (i, l) in labels.iter_mut().enumerate() {
        if *l == u32::MAX {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let k = (0..centers.len())
                .min_by(|&a, &b| {
                    let da = (centers[a].x - x).powi(2) + (centers[a].y - y).powi(2);
                    let db = (centers[b].x - x).powi(2) + (centers[b].y - y).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            *l = k as u32;
        }
    }
    let min_size = ((step * step) / 4.0).floor().max(1.0) as usize;
    let labels = enforce_connectivity(w, h, labels, min_size);
    Ok(compact(w, h, labels))
}

/// 4-connected components of equal labels.
fn components(w: usize, h: usize, labels: &[u32]) -> (Vec<usize>, Vec<usize>) {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[s] = id;
        queue.push_back(s);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && labels[j] == labels[i] {
                    comp[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Every label keeps only its largest fragment; other fragments and
/// fragments below `min_size` take the label of their largest neighbor.
fn enforce_connectivity(w: usize, h: usize, mut labels: Vec<u32>, min_size: usize) -> Vec<u32> {
    for _ in 0..32 {
        let (comp, sizes) = components(w, h, &labels);
        if sizes.len() <= 1 {
            break;
        }
        let mut comp_label = vec![0u32; sizes.len()];
        for (i, &c) in comp.iter().enumerate() {
            comp_label[c] = labels[i];
        }
        let max_label = comp_label.iter().copied().max().unwrap_or(0) as usize;
        let mut keeper = vec![usize::MAX; max_label + 1];
        for (c, &l) in comp_label.iter().enumerate() {
            let k = &mut keeper[l as usize];
            if *k == usize::MAX || sizes[c] > sizes[*k] {
                *k = c;
            }
        }
        let absorb: Vec<bool> = (0..sizes.len())
            .map(|c| keeper[comp_label[c] as usize] != c || sizes[c] < min_size)
            .collect();
        if !absorb.iter().any(|&a| a) {
            break;
        }
        // neighbors of each absorbed component
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let a = comp[i];
                for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)]
                    .into_iter()
                    .flatten()
                {
                    let b = comp[j];
                    if a != b {
                        if absorb[a] {
                            neighbors[a].push(b);
                        }
                        if absorb[b] {
                            neighbors[b].push(a);
                        }
                    }
                }
            }
        }
        let mut target = vec![usize::MAX; sizes.len()];
        for c in 0..sizes.len() {
            if !absorb[c] || neighbors[c].is_empty() {
                continue;
            }
            let pick = |only_stable: bool| {
                neighbors[c]
                    .iter()
                    .copied()
                    .filter(|&b| !only_stable || !absorb[b])
                    .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            };
            target[c] = pick(true).or_else(|| pick(false)).unwrap_or(usize::MAX);
        }
        let mut changed = false;
        for i in 0..labels.len() {
            let t = target[comp[i]];
            if t != usize::MAX && labels[i] != comp_label[t] {
                labels[i] = comp_label[t];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Split labels into connected components and number them in scan order.
fn compact(w: usize, h: usize, labels: Vec<u32>) -> Superpixels {
    let (comp, sizes) = components(w, h, &labels);
    Superpixels {
        width: w,
        height: h,
        labels: comp.into_iter().map(|c| c as u32).collect(),
        count: sizes.len(),
    }
}
