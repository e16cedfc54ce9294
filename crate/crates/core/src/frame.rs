//! RGB frames, video sequences and binary masks, with PNG input/output.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// 8-bit RGB image stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract(format!(
                "frame dimensions {width}x{height} must be positive"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "frame has {} pixels, expected {}",
                pixels.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    /// Bilinear RGB sample at a real position. Coordinates are clamped to the
    /// frame first.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let (a, b, c, d) = (
            self.get(x0, y0),
            self.get(x1, y0),
            self.get(x0, y1),
            self.get(x1, y1),
        );
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Frame::new(w as usize, h as usize, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            buf.extend_from_slice(p);
        }
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// An ordered list of equally sized frames, indexed from 1 in the public API.
#[derive(Clone, Debug)]
pub struct VideoSequence {
    frames: Vec<Frame>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Contract(format!(
                "a video needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let (w, h) = (frames[0].width, frames[0].height);
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width != w || f.height != h)
        {
            return Err(Error::Contract(format!(
                "frame {} is {}x{}, expected {w}x{h}",
                i + 1,
                f.width,
                f.height
            )));
        }
        Ok(Self { frames })
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    /// Frame `t`, 1-based.
    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t - 1]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Load every `*.png` in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let files = numbered_files(dir, "png")?;
        let frames = crate::par::map_slice(&files, |p| Frame::load_png(p))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        VideoSequence::new(frames)
    }
}

/// Sorted list of files with the given extension in `dir`.
pub fn numbered_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().and_then(|e| e.to_str()) == Some(ext) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Zero-padded file name for 1-based frame `t`.
pub fn frame_file_name(t: usize, ext: &str) -> String {
    format!("{t:05}.{ext}")
}

/// Per-pixel foreground/background labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    fg: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, fg: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || fg.len() != width * height {
            return Err(Error::Contract(format!(
                "mask data of length {} does not match {width}x{height}",
                fg.len()
            )));
        }
        Ok(Self { width, height, fg })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            fg: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut fg = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                fg.push(f(x, y));
            }
        }
        Self { width, height, fg }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.fg[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.fg[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.fg
    }

    pub fn count(&self) -> usize {
        self.fg.iter().filter(|&&b| b).count()
    }

    /// Read an 8-bit grayscale PNG where 0 is background and 255 foreground.
    /// Any other value is rejected.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        let mut fg = Vec::with_capacity((w * h) as usize);
        for (i, p) in img.pixels().enumerate() {
            match p.0[0] {
                0 => fg.push(false),
                255 => fg.push(true),
                v => {
                    return Err(Error::Format(format!(
                        "{}: mask value {v} at pixel {i} (only 0 and 255 allowed)",
                        path.display()
                    )))
                }
            }
        }
        BinaryMask::new(w as usize, h as usize, fg)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = self.fg.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Write a probability map in [0,1] as a grayscale PNG.
pub fn save_probability_png(width: usize, height: usize, probs: &[f64], path: &Path) -> Result<()> {
    let buf = probs
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(width as u32, height as u32, buf)
        .ok_or_else(|| Error::Contract("probability map size mismatch".into()))?;
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
