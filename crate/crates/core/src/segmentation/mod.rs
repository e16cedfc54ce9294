//! Mask propagation: trajectory labeling, appearance models, superpixel
//! regions and label diffusion over a backward nearest-neighbor graph.

pub mod descriptor;
pub mod gmm;
pub mod knn;
pub mod labeling;
pub mod pipeline;
pub mod propagation;
pub mod slic;

pub use labeling::{Category, CategoryCounts, ReverseTrack, TrajectoryLabeling};
pub use pipeline::{segment_video, Diagnostics, Segmentation, SegmentationConfig, StageMaps};
