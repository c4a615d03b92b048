//! Per-frame detectors working on the top-down view: floor tags, the laser
//! crosshair and the chessboard squares.

mod crosshair;
mod lattice;
mod mask;
mod squares;
pub mod tags;

pub use crosshair::{
    crosshair_mask, crosshair_mask_region, detect_crosshair, CrosshairDetection, CrosshairParams,
    CrosshairQuality, CrosshairTracker,
};
pub use lattice::{extend_virtual_squares, Lattice};
pub use mask::mask_region;
pub use squares::{crosshair_line_mask, detect_squares, order_corners, SquareDetection, SquareParams};
pub use tags::{decode_tag_grid, detect_tags, encode_tag, TagDetection, TagParams};
