//! `key = value` configuration files covering every tunable.
//!
//! ```text
//! # comments start with '#'
//! k = 1200
//! neighbors = 8
//! reverse_track = printed
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::segmentation::SegmentationConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Config {
    pub segmentation: SegmentationConfig,
    /// IoU of two empty masks: 1 when true, 0 otherwise.
    pub empty_iou_one: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            empty_iou_one: true,
        }
    }
}

/// Every recognized key, in file order.
pub const KEYS: &[&str] = &[
    "k",
    "iterations",
    "delta_t",
    "neighbors",
    "superpixels",
    "compactness",
    "slic_iterations",
    "gmm_components",
    "em_iterations",
    "em_tolerance",
    "var_floor",
    "em_seed",
    "seed_stride",
    "min_length",
    "termination_probability",
    "appearance_scale",
    "min_cluster_size",
    "h",
    "density_mode",
    "stop_on_convergence",
    "propagation_iterations",
    "threshold",
    "reverse_track",
    "empty_iou",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl Config {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip(e))))
    }

    /// Apply one `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.segmentation;
        match key {
            "k" => s.clustering.k = parse(key, value)?,
            "iterations" => s.clustering.iterations = parse(key, value)?,
            "delta_t" => s.clustering.delta_t = parse(key, value)?,
            "neighbors" => s.neighbors = parse(key, value)?,
            "superpixels" => s.slic.target_count = parse(key, value)?,
            "compactness" => s.slic.compactness = parse(key, value)?,
            "slic_iterations" => s.slic.iterations = parse(key, value)?,
            "gmm_components" => s.em.components = parse(key, value)?,
            "em_iterations" => s.em.max_iterations = parse(key, value)?,
            "em_tolerance" => s.em.tolerance = parse(key, value)?,
            "var_floor" => s.em.var_floor = parse(key, value)?,
            "em_seed" => s.em.seed = parse(key, value)?,
            "seed_stride" => s.tracker.seed_stride = parse(key, value)?,
            "min_length" => s.tracker.min_length = parse(key, value)?,
            "termination_probability" => s.tracker.termination_probability = parse(key, value)?,
            "appearance_scale" => s.tracker.appearance_scale = parse(key, value)?,
            "min_cluster_size" => s.clustering.min_cluster_size = parse(key, value)?,
            "h" => s.clustering.h = parse(key, value)?,
            "density_mode" => s.clustering.density_mode = value.parse()?,
            "stop_on_convergence" => s.clustering.stop_on_convergence = parse(key, value)?,
            "propagation_iterations" => s.propagation_iterations = parse(key, value)?,
            "threshold" => s.threshold = parse(key, value)?,
            "reverse_track" => s.reverse_track = value.parse()?,
            "empty_iou" => {
                self.empty_iou_one = match value {
                    "1" => true,
                    "0" => false,
                    _ => {
                        return Err(Error::Config(format!(
                            "empty_iou must be 0 or 1, got `{value}`"
                        )))
                    }
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parse and apply `key=value`.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        let s = &self.segmentation;
        if s.clustering.delta_t == 0 || s.neighbors == 0 {
            return Err(Error::Config(
                "delta_t and neighbors must be positive".into(),
            ));
        }
        if !(s.tracker.termination_probability > 0.0 && s.tracker.termination_probability < 1.0) {
            return Err(Error::Config(
                "termination_probability must lie in (0, 1)".into(),
            ));
        }
        if !(s.tracker.appearance_scale.is_finite() && s.tracker.appearance_scale >= 0.0) {
            return Err(Error::Config(
                "appearance_scale must be finite and non-negative".into(),
            ));
        }
        if !(s.em.var_floor > 0.0 && s.em.tolerance >= 0.0 && s.slic.compactness > 0.0) {
            return Err(Error::Config(
                "var_floor and compactness must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.segmentation;
        Some(match key {
            "k" => s.clustering.k.to_string(),
            "iterations" => s.clustering.iterations.to_string(),
            "delta_t" => s.clustering.delta_t.to_string(),
            "neighbors" => s.neighbors.to_string(),
            "superpixels" => s.slic.target_count.to_string(),
            "compactness" => s.slic.compactness.to_string(),
            "slic_iterations" => s.slic.iterations.to_string(),
            "gmm_components" => s.em.components.to_string(),
            "em_iterations" => s.em.max_iterations.to_string(),
            "em_tolerance" => s.em.tolerance.to_string(),
            "var_floor" => s.em.var_floor.to_string(),
            "em_seed" => s.em.seed.to_string(),
            "seed_stride" => s.tracker.seed_stride.to_string(),
            "min_length" => s.tracker.min_length.to_string(),
            "termination_probability" => s.tracker.termination_probability.to_string(),
            "appearance_scale" => s.tracker.appearance_scale.to_string(),
            "min_cluster_size" => s.clustering.min_cluster_size.to_string(),
            "h" => s.clustering.h.to_string(),
            "density_mode" => s.clustering.density_mode.to_string(),
            "stop_on_convergence" => s.clustering.stop_on_convergence.to_string(),
            "propagation_iterations" => s.propagation_iterations.to_string(),
            "threshold" => s.threshold.to_string(),
            "reverse_track" => s.reverse_track.to_string(),
            "empty_iou" => u8::from(self.empty_iou_one).to_string(),
            _ => return None,
        })
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpc::DensityMode;
    use crate::segmentation::ReverseTrack;

    #[test]
    fn defaults() {
        let c = Config::default();
        let s = &c.segmentation;
        assert_eq!(s.clustering.k, 1200);
        assert_eq!(s.clustering.iterations, 5);
        assert_eq!(s.clustering.delta_t, 3);
        assert_eq!(s.neighbors, 8);
        assert_eq!(s.slic.target_count, 2000);
        assert_eq!(s.em.components, 5);
        assert_eq!(s.tracker.seed_stride, 2);
        assert_eq!(s.clustering.min_cluster_size, 5);
        assert_eq!(s.clustering.h, 1e9);
        assert_eq!(s.clustering.density_mode, DensityMode::Similarity);
        assert_eq!(s.propagation_iterations, 10);
        assert_eq!(s.threshold, 0.5);
        assert_eq!(s.tracker.appearance_scale, 1.0 / 50.0);
        assert_eq!(s.reverse_track, ReverseTrack::Printed);
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::default();
        c.apply_override("neighbors=12").unwrap();
        c.apply_override("reverse_track = extrapolated").unwrap();
        c.apply_override("density_mode=literal").unwrap();
        let back = Config::parse_str(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comments_and_errors() {
        let c = Config::parse_str("# hi\n\nk = 64   # grid cells\n").unwrap();
        assert_eq!(c.segmentation.clustering.k, 64);
        for bad in [
            "k = -1",
            "nope = 3",
            "threshold = 1.5",
            "k 3",
            "neighbors = 0",
            "empty_iou = 2",
        ] {
            assert!(
                matches!(Config::parse_str(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
        let e = Config::parse_str("k = 4\nbogus = 1")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn every_key_is_settable() {
        let c = Config::default();
        for k in KEYS {
            let mut d = c;
            d.set(k, &c.get(k).unwrap()).unwrap();
            assert_eq!(d, c, "{k}");
        }
    }
}
