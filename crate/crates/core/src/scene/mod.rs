//! Synthetic traffic scenes: lane layouts, simulation, windowing, source
//! assignment, observation corruption, normalization and dataset files.

pub mod geometry;
pub mod lanes;
pub mod sim;
pub mod window;
pub mod sources;
pub mod normalize;
pub mod dataset;
pub mod vectorize;

pub use dataset::{generate_dataset, generate_scene, read_dataset, split_of, write_dataset, GenerateConfig, SceneRecord, Split};
pub use lanes::{build_lane_graph, LaneSegment, Layout, LayoutSpec};
pub use sources::Source;
pub use vectorize::{vectorize, SceneInput};
