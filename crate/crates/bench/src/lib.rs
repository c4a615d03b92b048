//! Fixtures shared by the benchmarks.

use gridloc::geometry::Pose2D;
use gridloc::image::ImageBuffer;
use gridloc::locate::{FrameEstimate, PoseSource};
use gridloc::detect::CrosshairQuality;
use gridloc::simulate::{Renderer, SceneSpec};

/// Pose well inside the default board with the crosshair off the lines.
pub fn sample_pose() -> Pose2D {
    Pose2D::new(0.05, 0.07, 20.0)
}

/// Renderer for the default scene and one rendered frame.
pub fn rendered_frame() -> (Renderer, ImageBuffer) {
    let renderer = Renderer::new(SceneSpec::default()).expect("default scene renders");
    let (img, _) = renderer.render(0, 0.0, &sample_pose()).expect("pose is on the board");
    (renderer, img)
}

/// A wobbly line of `n` measured poses at 25/3 fps.
pub fn noisy_line(n: usize) -> Vec<FrameEstimate> {
    (0..n)
        .map(|k| {
            let t = k as f64 * 0.12;
            let wobble = 1e-3 * (k as f64 * 2.3).sin();
            FrameEstimate {
                frame: k,
                t,
                pose: Pose2D::new(0.3 * t, wobble, 0.5 * wobble),
                source: PoseSource::Measured,
                quality: CrosshairQuality::Detected,
            }
        })
        .collect()
}
