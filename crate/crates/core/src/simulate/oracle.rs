use super::render::ground_truth_squares;
use super::scene::SceneSpec;
use crate::detect::{CrosshairDetection, CrosshairQuality, SquareDetection, TagDetection};
use crate::geometry::{Point2, Pose2D};
use crate::locate::FrameDetections;

/// Detections a perfect detector would report for `pose`: the nominal
/// crosshair, every square fully on the canvas and, with `with_tags`, every
/// tag fully on the canvas. Used to exercise the tracker without rendering.
pub fn oracle_detections(scene: &SceneSpec, pose: &Pose2D, with_tags: bool) -> FrameDetections {
    let (w, h) = (scene.view.width as f64, scene.view.height as f64);
    let on_canvas = |p: &Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= w && p.y <= h;
    let gt = ground_truth_squares(scene, pose);
    let squares = gt
        .iter()
        .filter(|s| s.topdown.iter().all(on_canvas))
        .map(|s| SquareDetection::new(s.topdown, false))
        .collect();
    let mut tags = Vec::new();
    if with_tags {
        let floor = &scene.floor;
        let half = 0.5 * scene.tag_scale * floor.square_size;
        for s in &gt {
            let Some(id) = floor.tag_in(s.col, s.row) else { continue };
            let c = floor.world(s.col as f64 + 0.5, s.row as f64 + 0.5);
            let corners = [(-half, half), (half, half), (half, -half), (-half, -half)]
                .map(|(dx, dy)| scene.world_to_topdown(pose, c + Point2::new(dx, dy)));
            if corners.iter().all(on_canvas) {
                tags.push(TagDetection {
                    id,
                    corners,
                    square_center: scene.world_to_topdown(pose, c),
                    rotation: 0,
                });
            }
        }
    }
    FrameDetections {
        crosshair: Some(CrosshairDetection {
            center: scene.view.robot_to_px(scene.laser.offset_forward, 0.0),
            vertical_angle: 90.0,
            horizontal_angle: 0.0,
            quality: CrosshairQuality::Detected,
        }),
        squares,
        tags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locate::{Tracker, TrackerParams};

    #[test]
    fn tracker_on_oracle_detections_recovers_pose() {
        let scene = SceneSpec::default();
        let mut tr = Tracker::new(scene.floor.clone(), TrackerParams::default());
        for k in 0..40 {
            let t = k as f64 * 0.12;
            let pose = Pose2D::new(-0.4 + 0.3 * t, 0.25 + 0.05 * t, 17.0 + 2.0 * t);
            let dets = oracle_detections(&scene, &pose, true);
            let est = tr.step(k, t, &dets).unwrap();
            assert!(est.pose.position().distance(pose.position()) < 1e-6, "{k}: {:?} vs {:?}", est.pose, pose);
            assert!((est.pose.theta - pose.theta).abs() < 1e-6);
        }
    }
}
