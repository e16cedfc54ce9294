//! Dense optical-flow fields: Middlebury `.flo` I/O, bilinear sampling and a
//! crude block-matching estimator for synthetic inputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::frame::{frame_file_name, Frame};

/// Magic number at the start of every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Row-major grid of per-pixel motion vectors `(dx, dy)` in pixels/frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "flow dimensions {width}x{height} must be positive"
            )));
        }
        if vectors.len() != width * height {
            return Err(Error::Contract(format!(
                "flow has {} vectors, expected {}",
                vectors.len(),
                width * height
            )));
        }
        if let Some(i) = vectors
            .iter()
            .position(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::Format(format!(
                "non-finite flow vector at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "flow dimensions must be positive");
        Self {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, v: [f32; 2]) -> Self {
        assert!(width > 0 && height > 0, "flow dimensions must be positive");
        assert!(v[0].is_finite() && v[1].is_finite());
        Self {
            width,
            height,
            vectors: vec![v; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }

    /// Bilinear interpolation of the four grid vectors around `(x, y)`.
    /// Exact at integer coordinates. Positions outside
    /// `[0, w-1] x [0, h-1]` are a contract violation; clamp before calling.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let (wmax, hmax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(0.0..=wmax).contains(&x) || !(0.0..=hmax).contains(&y) {
            return Err(Error::Contract(format!(
                "flow sample ({x}, {y}) outside {}x{} field",
                self.width, self.height
            )));
        }
        Ok(self.sample_unchecked(x, y))
    }

    /// Clamp to the field, then sample.
    pub fn sample_clamped(&self, x: f64, y: f64) -> [f64; 2] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.sample_unchecked(x, y)
    }

    fn sample_unchecked(&self, x: f64, y: f64) -> [f64; 2] {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        let mut out = [0.0; 2];
        for k in 0..2 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }
}

/// Read a Middlebury `.flo` file.
pub fn load_flo(path: &Path) -> Result<FlowField> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    read_flo(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Truncated(m) => Error::Truncated(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_flo<R: Read>(r: &mut R) -> Result<FlowField> {
    let short = |_| Error::Truncated("unexpected end of .flo data".into());
    let magic = r.read_f32::<LittleEndian>().map_err(short)?;
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!("bad .flo magic {magic}")));
    }
    let w = r.read_i32::<LittleEndian>().map_err(short)?;
    let h = r.read_i32::<LittleEndian>().map_err(short)?;
    if w <= 0 || h <= 0 {
        return Err(Error::Format(format!(
            "nonpositive .flo dimensions {w}x{h}"
        )));
    }
    let (w, h) = (w as usize, h as usize);
    let n = w
        .checked_mul(h)
        .ok_or_else(|| Error::Format(format!(".flo dimensions {w}x{h} overflow")))?;
    let mut raw = vec![0f32; 2 * n];
    r.read_f32_into::<LittleEndian>(&mut raw).map_err(short)?;
    let vectors = raw.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    FlowField::new(w, h, vectors)
}

pub fn write_flo(field: &FlowField, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_flo(field, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_flo<W: Write>(field: &FlowField, w: &mut W) -> std::io::Result<()> {
    w.write_f32::<LittleEndian>(FLO_MAGIC)?;
    w.write_i32::<LittleEndian>(field.width as i32)?;
    w.write_i32::<LittleEndian>(field.height as i32)?;
    for v in &field.vectors {
        w.write_f32::<LittleEndian>(v[0])?;
        w.write_f32::<LittleEndian>(v[1])?;
    }
    Ok(())
}

/// Flow for one frame transition `t -> t+1`: the forward field of frame `t`
/// and the backward field of frame `t+1` (which maps `t+1 -> t`).
#[derive(Clone, Debug)]
pub struct FlowPair {
    pub forward: FlowField,
    pub backward: FlowField,
}

/// Flow pairs for every transition of a `T`-frame video; `pairs[i]` covers
/// frames `i+1 -> i+2` (1-based).
#[derive(Clone, Debug)]
pub struct FlowSequence {
    pairs: Vec<FlowPair>,
}

impl FlowSequence {
    pub fn new(pairs: Vec<FlowPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Contract(
                "flow sequence needs at least one transition".into(),
            ));
        }
        let (w, h) = (pairs[0].forward.width, pairs[0].forward.height);
        for (i, p) in pairs.iter().enumerate() {
            for f in [&p.forward, &p.backward] {
                if f.width != w || f.height != h {
                    return Err(Error::Contract(format!(
                        "flow for transition {} is {}x{}, expected {w}x{h}",
                        i + 1,
                        f.width,
                        f.height
                    )));
                }
            }
        }
        Ok(Self { pairs })
    }

    pub fn transitions(&self) -> usize {
        self.pairs.len()
    }

    pub fn width(&self) -> usize {
        self.pairs[0].forward.width
    }

    pub fn height(&self) -> usize {
        self.pairs[0].forward.height
    }

    /// Forward field of frame `t` (1-based, `t < T`).
    pub fn forward(&self, t: usize) -> &FlowField {
        &self.pairs[t - 1].forward
    }

    /// Backward field of frame `t` (1-based, `t > 1`).
    pub fn backward(&self, t: usize) -> &FlowField {
        &self.pairs[t - 2].backward
    }

    pub fn pairs(&self) -> &[FlowPair] {
        &self.pairs
    }

    /// Load `<t>.flo` (forward, frame t) and `<t+1>.rflo` (backward,
    /// frame t+1) for `t = 1..frames-1`. A missing file is reported by name.
    pub fn load_dir(dir: &Path, frames: usize) -> Result<Self> {
        if frames < 2 {
            return Err(Error::Contract(format!(
                "need at least 2 frames, got {frames}"
            )));
        }
        let pairs = crate::par::map_range(frames - 1, |i| -> Result<FlowPair> {
            let t = i + 1;
            let forward = load_flo(&dir.join(frame_file_name(t, "flo")))?;
            let backward = load_flo(&dir.join(frame_file_name(t + 1, "rflo")))?;
            Ok(FlowPair { forward, backward })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        FlowSequence::new(pairs)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, p) in self.pairs.iter().enumerate() {
            write_flo(&p.forward, &dir.join(frame_file_name(i + 1, "flo")))?;
            write_flo(&p.backward, &dir.join(frame_file_name(i + 2, "rflo")))?;
        }
        Ok(())
    }
}

/// Block-matching parameters.
#[derive(Clone, Copy, Debug)]
pub struct BlockMatchConfig {
    pub block: usize,
    pub radius: usize,
}

/// Per-block integer displacement from `a` to `b` minimizing the sum of
/// absolute RGB differences within `±radius`. Candidates that move the block
/// outside `b` are skipped. Ties go to the smallest displacement magnitude,
/// then the smallest `dy`, then the smallest `dx`. Edge tiles absorb the
/// remainder when the block size does not divide the frame.
pub fn estimate_flow_block(a: &Frame, b: &Frame, cfg: BlockMatchConfig) -> Result<FlowField> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Contract(
            "block matching needs equally sized frames".into(),
        ));
    }
    let (w, h) = (a.width(), a.height());
    if cfg.block == 0 || cfg.block > w || cfg.block > h {
        return Err(Error::Config(format!(
            "block size {} does not fit a {w}x{h} frame",
            cfg.block
        )));
    }
    let r = cfg.radius as i64;
    let mut candidates: Vec<(i64, i64)> = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for dy in -r..=r {
        for dx in -r..=r {
            candidates.push((dx, dy));
        }
    }
    candidates.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));

    let tiles_x = (w / cfg.block).max(1);
    let tiles_y = (h / cfg.block).max(1);
    let span = |i: usize, n: usize, size: usize| {
        let start = i * cfg.block;
        let end = if i + 1 == n { size } else { start + cfg.block };
        (start, end)
    };
    let best = crate::par::map_range(tiles_x * tiles_y, |ti| {
        let (x0, x1) = span(ti % tiles_x, tiles_x, w);
        let (y0, y1) = span(ti / tiles_x, tiles_y, h);
        let mut best: Option<(u64, (i64, i64))> = None;
        for &(dx, dy) in &candidates {
            let (bx0, bx1) = (x0 as i64 + dx, x1 as i64 + dx);
            let (by0, by1) = (y0 as i64 + dy, y1 as i64 + dy);
            if bx0 < 0 || by0 < 0 || bx1 > w as i64 || by1 > h as i64 {
                continue;
            }
            let mut sad = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    let pa = a.get(x, y);
                    let pb = b.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                    for k in 0..3 {
                        sad += (pa[k] as i64 - pb[k] as i64).unsigned_abs();
                    }
                }
            }
            if best.is_none_or(|(s, _)| sad < s) {
                best = Some((sad, (dx, dy)));
            }
        }
        best.map_or((0, 0), |(_, d)| d)
    });

    let mut vectors = vec![[0f32; 2]; w * h];
    for (ti, &(dx, dy)) in best.iter().enumerate() {
        let (x0, x1) = span(ti % tiles_x, tiles_x, w);
        let (y0, y1) = span(ti / tiles_x, tiles_y, h);
        for y in y0..y1 {
            for x in x0..x1 {
                vectors[y * w + x] = [dx as f32, dy as f32];
            }
        }
    }
    FlowField::new(w, h, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| {
            let v = ((x as u64 * 2654435761) ^ (y as u64 * 40503)).wrapping_mul(2246822519) >> 7;
            [
                (v & 255) as u8,
                ((v >> 8) & 255) as u8,
                ((v >> 16) & 255) as u8,
            ]
        })
    }

    #[test]
    fn one_by_one_zero_flow() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&0f32.to_le_bytes());
        bytes.extend_from_slice(&0f32.to_le_bytes());
        let f = read_flo(&mut bytes.as_slice()).unwrap();
        assert_eq!(f, FlowField::new(1, 1, vec![[0.0, 0.0]]).unwrap());
    }

    #[test]
    fn flo_errors() {
        let mut bad = Vec::new();
        bad.extend_from_slice(&1.5f32.to_le_bytes());
        bad.extend_from_slice(&[0u8; 16]);
        assert!(matches!(
            read_flo(&mut bad.as_slice()),
            Err(Error::Format(_))
        ));

        let mut zero = Vec::new();
        zero.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        zero.extend_from_slice(&0i32.to_le_bytes());
        zero.extend_from_slice(&4i32.to_le_bytes());
        assert!(matches!(
            read_flo(&mut zero.as_slice()),
            Err(Error::Format(_))
        ));

        let mut short = Vec::new();
        encode_flo(&FlowField::zeros(3, 3), &mut short).unwrap();
        short.truncate(short.len() - 5);
        assert!(matches!(
            read_flo(&mut short.as_slice()),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn missing_flo_names_the_file() {
        let err = load_flo(Path::new("/nonexistent/00003.flo")).unwrap_err();
        assert!(err.to_string().contains("00003.flo"));
    }

    proptest! {
        #[test]
        fn flo_round_trip_is_bit_exact(
            w in 1usize..6, h in 1usize..6,
            seed in proptest::collection::vec(-1e6f32..1e6, 72)
        ) {
            let vectors: Vec<[f32; 2]> = (0..w * h).map(|i| [seed[2 * i], seed[2 * i + 1]]).collect();
            let f = FlowField::new(w, h, vectors).unwrap();
            let mut buf = Vec::new();
            encode_flo(&f, &mut buf).unwrap();
            let g = read_flo(&mut buf.as_slice()).unwrap();
            for (a, b) in f.vectors().iter().zip(g.vectors()) {
                prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
                prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
            prop_assert_eq!((g.width(), g.height()), (w, h));
        }

        #[test]
        fn bilinear_linear_along_axes(a in -50f32..50.0, b in -50f32..50.0, t in 0f64..1.0) {
            let f = FlowField::new(2, 1, vec![[a, b], [b, a]]).unwrap();
            let s = f.sample_bilinear(t, 0.0).unwrap();
            prop_assert!((s[0] - (a as f64 * (1.0 - t) + b as f64 * t)).abs() < 1e-9);
            prop_assert!((s[1] - (b as f64 * (1.0 - t) + a as f64 * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn bilinear_identities() {
        let vectors: Vec<[f32; 2]> = (0..12).map(|i| [i as f32 * 0.5, -(i as f32)]).collect();
        let f = FlowField::new(4, 3, vectors.clone()).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                let s = f.sample_bilinear(x as f64, y as f64).unwrap();
                assert_eq!(
                    s,
                    [vectors[y * 4 + x][0] as f64, vectors[y * 4 + x][1] as f64]
                );
            }
        }
        let c = FlowField::constant(5, 5, [1.25, -3.5]);
        assert_eq!(c.sample_bilinear(2.3, 3.7).unwrap(), [1.25, -3.5]);
        let m = FlowField::new(2, 1, vec![[1.0, 2.0], [3.0, 6.0]]).unwrap();
        assert_eq!(m.sample_bilinear(0.5, 0.0).unwrap(), [2.0, 4.0]);
        assert!(matches!(
            m.sample_bilinear(1.5, 0.0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            m.sample_bilinear(0.0, -0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn block_matching_identical_and_zero_radius() {
        let a = textured(32, 24);
        let f = estimate_flow_block(
            &a,
            &a,
            BlockMatchConfig {
                block: 8,
                radius: 3,
            },
        )
        .unwrap();
        assert!(f.vectors().iter().all(|v| *v == [0.0, 0.0]));
        let b = textured(32, 24);
        let shifted = Frame::from_fn(32, 24, |x, y| b.get(x.saturating_sub(2), y));
        let f = estimate_flow_block(
            &a,
            &shifted,
            BlockMatchConfig {
                block: 8,
                radius: 0,
            },
        )
        .unwrap();
        assert!(f.vectors().iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn block_matching_recovers_translation() {
        let a = textured(48, 40);
        // content at x in a appears at x + 2 in b
        let b = Frame::from_fn(
            48,
            40,
            |x, y| if x >= 2 { a.get(x - 2, y) } else { [0, 0, 0] },
        );
        let f = estimate_flow_block(
            &a,
            &b,
            BlockMatchConfig {
                block: 8,
                radius: 4,
            },
        )
        .unwrap();
        // interior blocks: the displaced block must stay inside the frame
        for ty in 0..5 {
            for tx in 0..5 {
                let v = f.get(tx * 8 + 3, ty * 8 + 3);
                assert_eq!(v, [2.0, 0.0], "tile ({tx},{ty})");
            }
        }
    }

    #[test]
    fn block_larger_than_image_is_config_error() {
        let a = textured(8, 8);
        assert!(matches!(
            estimate_flow_block(
                &a,
                &a,
                BlockMatchConfig {
                    block: 9,
                    radius: 1
                }
            ),
            Err(Error::Config(_))
        ));
    }
}
