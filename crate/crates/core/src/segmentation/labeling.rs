//! Trajectory categories from the first-frame mask, reverse tracking of
//! late-starting trajectories, and super-trajectory foreground ratios.

use serde::{Deserialize, Serialize};

use crate::clustering::SuperTrajectory;
use crate::error::{Error, Result};
use crate::frame::BinaryMask;
use crate::trajectory::TrajectorySet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Foreground,
    Background,
    /// Started after frame 1 from a virtual source outside the frame.
    Outside,
    Unlabeled,
}

/// One category per trajectory, indexed like `TrajectorySet::trajectories`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryLabeling {
    pub categories: Vec<Category>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub foreground: usize,
    pub background: usize,
    pub outside: usize,
    pub unlabeled: usize,
}

impl TrajectoryLabeling {
    pub fn counts(&self) -> CategoryCounts {
        let mut c = CategoryCounts::default();
        for cat in &self.categories {
            match cat {
                Category::Foreground => c.foreground += 1,
                Category::Background => c.background += 1,
                Category::Outside => c.outside += 1,
                Category::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }
}

/// Frame-1 starters are foreground or background according to the mask at
/// their rounded start pixel; every other trajectory is unlabeled.
pub fn classify_trajectories(
    trajs: &TrajectorySet,
    mask: &BinaryMask,
) -> Result<TrajectoryLabeling> {
    if mask.width() != trajs.width || mask.height() != trajs.height {
        return Err(Error::Contract(format!(
            "mask is {}x{} but frames are {}x{}",
            mask.width(),
            mask.height(),
            trajs.width,
            trajs.height
        )));
    }
    let categories = trajs
        .trajectories
        .iter()
        .map(|t| {
            let p = t.points[0];
            if p.t != 1 {
                return Category::Unlabeled;
            }
            let (x, y) = p.pixel(trajs.width, trajs.height);
            if mask.get(x, y) {
                Category::Foreground
            } else {
                Category::Background
            }
        })
        .collect();
    Ok(TrajectoryLabeling { categories })
}

/// How the virtual source of an unlabeled trajectory is placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReverseTrack {
    /// One mean-velocity step back from the start point.
    #[default]
    Printed,
    /// Extrapolated back to frame 1: `start - (t_start - 1) * v`.
    Extrapolated,
}

impl std::str::FromStr for ReverseTrack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(ReverseTrack::Printed),
            "extrapolated" => Ok(ReverseTrack::Extrapolated),
            other => Err(Error::Config(format!(
                "unknown reverse-track variant `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for ReverseTrack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReverseTrack::Printed => "printed",
            ReverseTrack::Extrapolated => "extrapolated",
        })
    }
}

/// Virtual source position of a trajectory starting at `start` (frame
/// `t_start`) with mean velocity `v`.
pub fn virtual_source(
    start: [f64; 2],
    t_start: usize,
    v: [f64; 2],
    variant: ReverseTrack,
) -> [f64; 2] {
    let steps = match variant {
        ReverseTrack::Printed => 1.0,
        ReverseTrack::Extrapolated => t_start.saturating_sub(1) as f64,
    };
    [start[0] - steps * v[0], start[1] - steps * v[1]]
}

/// Move unlabeled trajectories whose virtual source lies outside the frame
/// into [`Category::Outside`]. `velocities` is indexed like the trajectories.
pub fn reverse_track_sources(
    labeling: &TrajectoryLabeling,
    trajs: &TrajectorySet,
    velocities: &[[f64; 2]],
    variant: ReverseTrack,
) -> TrajectoryLabeling {
    let (wmax, hmax) = ((trajs.width - 1) as f64, (trajs.height - 1) as f64);
    let categories = labeling
        .categories
        .iter()
        .zip(&trajs.trajectories)
        .zip(velocities)
        .map(|((&cat, t), &v)| {
            if cat != Category::Unlabeled {
                return cat;
            }
            let p = t.points[0];
            let [x0, y0] = virtual_source([p.x, p.y], p.t, v, variant);
            if x0 < 0.0 || y0 < 0.0 || x0 > wmax || y0 > hmax {
                Category::Outside
            } else {
                Category::Unlabeled
            }
        })
        .collect();
    TrajectoryLabeling { categories }
}

/// Foreground ratio `|fg| / (|fg| + |bg| + |outside|)` over members, or
/// `None` when no member carries a label. `index_of` maps a trajectory id to
/// its position in the labeling.
pub fn supertraj_probability(
    st: &SuperTrajectory,
    labeling: &TrajectoryLabeling,
    index_of: impl Fn(usize) -> usize,
) -> Option<f64> {
    let (mut fg, mut labeled) = (0usize, 0usize);
    for &id in &st.members {
        match labeling.categories[index_of(id)] {
            Category::Foreground => {
                fg += 1;
                labeled += 1;
            }
            Category::Background | Category::Outside => labeled += 1,
            Category::Unlabeled => {}
        }
    }
    (labeled > 0).then(|| fg as f64 / labeled as f64)
}
