//! Deterministic SVG rendering of worlds and robot trajectories.

use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::Path;

use depthnav::sim::{Shape, WorldMap};

/// A robot pose parsed from a trajectory log.
#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading; carried through the log format, not drawn.
    #[allow(dead_code)]
    pub theta: f64,
}

/// Parse a pose log CSV with header `x,y,theta`.
pub fn parse_pose_log(text: &str) -> Result<Vec<Pose>> {
    let mut lines = text.lines();
    let header = lines.next().context("empty pose log")?;
    if header.trim() != "x,y,theta" {
        bail!("pose log header must be 'x,y,theta', got '{header}'");
    }
    let mut poses = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("pose log line {}: expected 3 fields", i + 2);
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("pose log line {}: bad number '{s}'", i + 2))
        };
        poses.push(Pose {
            x: parse(fields[0])?,
            y: parse(fields[1])?,
            theta: parse(fields[2])?,
        });
    }
    Ok(poses)
}

/// Serialize one pose track as a pose-log CSV.
pub fn pose_log_csv(poses: &[depthnav::sim::RobotState]) -> String {
    let mut out = String::from("x,y,theta\n");
    for p in poses {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.theta);
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

/// Render the world's obstacles and a trajectory polyline as a standalone
/// SVG document. Identical inputs yield byte-identical output.
pub fn render_trajectory(world: &WorldMap, poses: &[Pose]) -> Result<String> {
    if poses.is_empty() {
        bail!("pose log is empty; nothing to render");
    }
    let b = world.bounds;
    let margin = 0.3;
    let min_x = b.min.x - margin;
    let min_y = -b.max.y - margin; // svg y grows downward; flip world y
    let width = (b.max.x - b.min.x) + 2.0 * margin;
    let height = (b.max.y - b.min.y) + 2.0 * margin;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="640" height="640">"#,
        fmt(min_x),
        fmt(min_y),
        fmt(width),
        fmt(height)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white" stroke="black" stroke-width="0.05"/>"#,
        fmt(b.min.x),
        fmt(-b.max.y),
        fmt(b.max.x - b.min.x),
        fmt(b.max.y - b.min.y)
    );

    // Skip the four implicit boundary walls; the bounds rect covers them.
    for shape in world.obstacles.iter().skip(4) {
        match *shape {
            Shape::Box { min, max } => {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#708090"/>"##,
                    fmt(min.x),
                    fmt(-max.y),
                    fmt(max.x - min.x),
                    fmt(max.y - min.y)
                );
            }
            Shape::Disc { center, radius } => {
                let _ = writeln!(
                    svg,
                    r##"<circle cx="{}" cy="{}" r="{}" fill="#708090"/>"##,
                    fmt(center.x),
                    fmt(-center.y),
                    fmt(radius)
                );
            }
            Shape::Segment { a, b } => {
                let _ = writeln!(
                    svg,
                    r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#708090" stroke-width="0.08"/>"##,
                    fmt(a.x),
                    fmt(-a.y),
                    fmt(b.x),
                    fmt(-b.y)
                );
            }
        }
    }

    let points: Vec<String> = poses
        .iter()
        .map(|p| format!("{},{}", fmt(p.x), fmt(-p.y)))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="0.05"/>"##,
        points.join(" ")
    );

    let start = poses[0];
    let end = poses[poses.len() - 1];
    let _ = writeln!(
        svg,
        r##"<circle cx="{}" cy="{}" r="0.12" fill="#2ca02c"/>"##,
        fmt(start.x),
        fmt(-start.y)
    );
    let _ = writeln!(
        svg,
        r##"<circle cx="{}" cy="{}" r="0.12" fill="#d62728"/>"##,
        fmt(end.x),
        fmt(-end.y)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Count polyline vertices in a rendered document (test support).
#[cfg(test)]
pub fn polyline_vertex_count(svg: &str) -> usize {
    svg.lines()
        .find(|l| l.starts_with("<polyline"))
        .and_then(|l| l.split("points=\"").nth(1))
        .and_then(|rest| rest.split('"').next())
        .map(|pts| pts.split(' ').count())
        .unwrap_or(0)
}

pub fn render_to_file(world: &WorldMap, poses: &[Pose], out: &Path) -> Result<()> {
    let svg = render_trajectory(world, poses)?;
    let tmp = out.with_extension("tmp");
    std::fs::write(&tmp, svg.as_bytes())
        .with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, out).with_context(|| format!("renaming into {}", out.display()))?;
    Ok(())
}
