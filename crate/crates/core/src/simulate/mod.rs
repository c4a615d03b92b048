//! Synthetic chessboard floor seen by the downward fisheye camera, with exact
//! ground truth.

mod oracle;
mod render;
mod scene;
mod trajectory;

pub use oracle::oracle_detections;
pub use render::{ground_truth_squares, GroundTruthRecord, GroundTruthSquare, Renderer};
pub use scene::{CameraSpec, LaserSpec, NoiseSpec, OccluderSpec, SceneColors, SceneSpec};
pub use trajectory::{generate_trajectory, TrajectoryKind, TrajectorySpec};
