//! Binary and grayscale image-processing primitives used by the detectors.

mod canny;
mod contour;
mod draw;
mod hough;
mod morphology;
mod poly;
mod subpix;

pub use canny::{canny, canny_region};
pub use contour::{find_contours, Contour};
pub use draw::{draw_thick_segment, fill_polygon};
pub use hough::{hough_lines, HoughLine, HoughParams};
pub use morphology::{close, dilate, erode, open, StructuringElement};
pub use poly::approx_poly;
pub use subpix::{corner_subpix, corner_subpix_masked, SubpixCorner, SubpixParams};
