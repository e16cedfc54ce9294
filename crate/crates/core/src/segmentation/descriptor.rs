//! Region descriptors: RGB and Lab histograms, a HOG patch around the
//! centroid, and normalized centroid coordinates.

use crate::frame::Frame;

use super::slic::rgb_to_lab;

pub const HIST_BINS: usize = 20;
pub const HOG_PATCH: usize = 15;
pub const HOG_CELL: usize = 5;
pub const HOG_BINS: usize = 6;
pub const HOG_LEN: usize = (HOG_PATCH / HOG_CELL) * (HOG_PATCH / HOG_CELL) * HOG_BINS;
pub const DESCRIPTOR_LEN: usize = 6 * HIST_BINS + HOG_LEN + 2;

const LAB_AB_RANGE: f64 = 110.0;

fn bin(v: f64, lo: f64, hi: f64) -> usize {
    let b = ((v.clamp(lo, hi) - lo) / (hi - lo) * HIST_BINS as f64).floor() as usize;
    b.min(HIST_BINS - 1)
}

/// Descriptor of the region made of `pixels` (row-major indices into `frame`).
pub fn region_descriptor(frame: &Frame, pixels: &[usize]) -> Vec<f64> {
    let w = frame.width();
    let h = frame.height();
    let mut d = vec![0.0; DESCRIPTOR_LEN];
    if pixels.is_empty() {
        return d;
    }
    let px = frame.pixels();
    let (mut sx, mut sy) = (0.0, 0.0);
    for &i in pixels {
        let c = px[i];
        for k in 0..3 {
            d[k * HIST_BINS + bin(c[k] as f64, 0.0, 256.0)] += 1.0;
        }
        let lab = rgb_to_lab(c);
        d[3 * HIST_BINS + bin(lab[0], 0.0, 100.0)] += 1.0;
        d[4 * HIST_BINS + bin(lab[1], -LAB_AB_RANGE, LAB_AB_RANGE)] += 1.0;
        d[5 * HIST_BINS + bin(lab[2], -LAB_AB_RANGE, LAB_AB_RANGE)] += 1.0;
        sx += (i % w) as f64;
        sy += (i / w) as f64;
    }
    let n = pixels.len() as f64;
    d[..6 * HIST_BINS].iter_mut().for_each(|v| *v /= n);
    let (cx, cy) = (sx / n, sy / n);
    hog(
        frame,
        cx,
        cy,
        &mut d[6 * HIST_BINS..6 * HIST_BINS + HOG_LEN],
    );
    let tail = 6 * HIST_BINS + HOG_LEN;
    d[tail] = if w > 1 { cx / (w - 1) as f64 } else { 0.5 };
    d[tail + 1] = if h > 1 { cy / (h - 1) as f64 } else { 0.5 };
    d
}

fn gray(c: [u8; 3]) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

/// Patch origin along one axis: centered on `c`, shifted to stay inside.
fn patch_origin(c: f64, extent: usize) -> (usize, usize) {
    let size = HOG_PATCH.min(extent);
    let start =
        (c.round() as i64 - (HOG_PATCH / 2) as i64).clamp(0, (extent - size) as i64) as usize;
    (start, size)
}

fn hog(frame: &Frame, cx: f64, cy: f64, out: &mut [f64]) {
    let (w, h) = (frame.width(), frame.height());
    let (x0, pw) = patch_origin(cx, w);
    let (y0, ph) = patch_origin(cy, h);
    let at = |x: usize, y: usize| gray(frame.get(x, y));
    let cells = HOG_PATCH / HOG_CELL;
    for py in 0..ph {
        for pxl in 0..pw {
            let (x, y) = (x0 + pxl, y0 + py);
            let gx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut ang = gy.atan2(gx);
            if ang < 0.0 {
                ang += std::f64::consts::PI;
            }
            let b = ((ang / std::f64::consts::PI * HOG_BINS as f64) as usize).min(HOG_BINS - 1);
            let cell = (py / HOG_CELL).min(cells - 1) * cells + (pxl / HOG_CELL).min(cells - 1);
            out[cell * HOG_BINS + b] += mag;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-12 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
}
