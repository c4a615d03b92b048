//! CSV formats for trajectories, ground truth and error statistics.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::CrosshairQuality;
use crate::error::{Error, Result};
use crate::geometry::Pose2D;
use crate::locate::{FrameEstimate, PoseSource};
use crate::simulate::GroundTruthRecord;
use crate::smooth::{DimStats, ErrorStats, TimedPose};

pub const TRAJECTORY_HEADER: [&str; 7] = ["frame", "t", "x_m", "y_m", "theta_deg", "source", "quality"];
pub const GROUND_TRUTH_HEADER: [&str; 6] = ["frame", "t", "x_m", "y_m", "theta_deg", "laser_visible"];

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    frame: usize,
    t: String,
    x_m: String,
    y_m: String,
    theta_deg: String,
    source: PoseSource,
    quality: CrosshairQuality,
}

#[derive(Debug, Deserialize)]
struct PoseRow {
    frame: usize,
    t: f64,
    x_m: f64,
    y_m: f64,
    theta_deg: f64,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_trajectory<W: Write>(out: W, traj: &[FrameEstimate]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for e in traj {
        w.serialize(TrajectoryRow {
            frame: e.frame,
            t: fixed(e.t),
            x_m: fixed(e.pose.x),
            y_m: fixed(e.pose.y),
            theta_deg: fixed(e.pose.theta),
            source: e.source,
            quality: e.quality,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<FrameEstimate>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::InvalidInput(format!("unexpected trajectory header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_err)?;
        let parsed: TrajectoryRow = row.deserialize(Some(&header)).map_err(csv_err)?;
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidInput(format!("bad number '{s}' in frame {}", parsed.frame)))
        };
        out.push(FrameEstimate {
            frame: parsed.frame,
            t: num(&parsed.t)?,
            pose: Pose2D::new(num(&parsed.x_m)?, num(&parsed.y_m)?, num(&parsed.theta_deg)?),
            source: parsed.source,
            quality: parsed.quality,
        });
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(out: W, records: &[GroundTruthRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GROUND_TRUTH_HEADER).map_err(csv_err)?;
    for g in records {
        w.write_record([
            g.frame.to_string(),
            fixed(g.t),
            fixed(g.pose.x),
            fixed(g.pose.y),
            fixed(g.pose.theta),
            (g.laser_visible as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Timed poses from any CSV with `frame,t,x_m,y_m,theta_deg` leading
/// columns (trajectories and ground truth alike).
pub fn read_poses<R: Read>(input: R) -> Result<Vec<(usize, TimedPose)>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().take(5).ne(TRAJECTORY_HEADER.iter().take(5).copied()) {
        return Err(Error::InvalidInput(format!("unexpected pose header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.deserialize::<PoseRow>() {
        let p = row.map_err(csv_err)?;
        out.push((
            p.frame,
            TimedPose {
                t: p.t,
                pose: Pose2D::new(p.x_m, p.y_m, p.theta_deg),
            },
        ));
    }
    Ok(out)
}

pub fn read_poses_file(path: impl AsRef<Path>) -> Result<Vec<(usize, TimedPose)>> {
    read_poses(File::open(path)?)
}

pub fn read_trajectory_file(path: impl AsRef<Path>) -> Result<Vec<FrameEstimate>> {
    read_trajectory(File::open(path)?)
}

pub fn write_trajectory_file(path: impl AsRef<Path>, traj: &[FrameEstimate]) -> Result<()> {
    write_trajectory(File::create(path)?, traj)
}

/// Error table with rows x, y, theta and columns Bias, MAE, 95th, 99th.
pub fn format_stats_table(stats: &ErrorStats) -> String {
    let rows: [(&str, &DimStats); 3] = [("x [mm]", &stats.x), ("y [mm]", &stats.y), ("theta [deg]", &stats.theta)];
    let mut s = format!("{:<12}{:>10}{:>10}{:>10}{:>10}\n", "", "Bias", "MAE", "95th", "99th");
    for (name, d) in rows {
        s += &format!("{name:<12}{:>10.3}{:>10.3}{:>10.3}{:>10.3}\n", d.bias, d.mae, d.p95, d.p99);
    }
    s
}

/// Empirical CDF of the absolute errors: one row per matched frame, sorted
/// per dimension.
pub fn write_cdf<W: Write>(out: W, stats: &ErrorStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fraction", "x_mm", "y_mm", "position_mm", "theta_deg"])
        .map_err(csv_err)?;
    for i in 0..stats.matched {
        w.write_record([
            fixed(stats.x.cdf[i].1),
            fixed(stats.x.cdf[i].0),
            fixed(stats.y.cdf[i].0),
            fixed(stats.position.cdf[i].0),
            fixed(stats.theta.cdf[i].0),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::error_stats;

    fn sample() -> Vec<FrameEstimate> {
        vec![
            FrameEstimate {
                frame: 0,
                t: 0.0,
                pose: Pose2D::new(0.1234567, -2.0, 45.0),
                source: PoseSource::Measured,
                quality: CrosshairQuality::Detected,
            },
            FrameEstimate {
                frame: 1,
                t: 0.12,
                pose: Pose2D::new(0.13, -2.01, -179.5),
                source: PoseSource::MotionModel,
                quality: CrosshairQuality::Fallback,
            },
        ]
    }

    #[test]
    fn trajectory_csv_golden() {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "frame,t,x_m,y_m,theta_deg,source,quality\n\
             0,0.000000,0.123457,-2.000000,45.000000,measured,detected\n\
             1,0.120000,0.130000,-2.010000,-179.500000,motion-model,fallback\n"
        );
    }

    #[test]
    fn trajectory_round_trip() {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &sample()).unwrap();
        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].source, PoseSource::MotionModel);
        assert!((back[0].pose.x - 0.123457).abs() < 1e-12);
        let poses = read_poses(buf.as_slice()).unwrap();
        assert_eq!(poses[1].0, 1);
        assert_eq!(poses[1].1.pose.theta, -179.5);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "frame,time,x,y,theta\n0,0,0,0,0\n";
        assert!(matches!(read_poses(text.as_bytes()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn stats_table_layout() {
        let p: Vec<TimedPose> = sample().iter().map(TimedPose::from).collect();
        let stats = error_stats(&p, &p).unwrap();
        let table = format_stats_table(&stats);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        let head: Vec<&str> = lines[0].split_whitespace().collect();
        assert_eq!(head, ["Bias", "MAE", "95th", "99th"]);
        for (line, name) in lines[1..].iter().zip(["x", "y", "theta"]) {
            let cols: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(cols[0], name);
            assert_eq!(&cols[2..], ["0.000"; 4]);
        }
        let width = lines[0].len();
        assert!(lines.iter().all(|l| l.len() == width));
    }
}
