//! World maps: obstacle geometry, JSON loading, validation, and the
//! collision / raycast queries the environment runs on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geom::{Rect, Shape, Vec2};
use super::robot::RobotState;
use crate::{Error, Result};

/// Current world-file format version.
pub const WORLD_FORMAT: u32 = 1;

/// On-disk world description (`*.world`, JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldFile {
    pub format: u32,
    pub bounds: Rect,
    #[serde(default)]
    pub obstacles: Vec<Shape>,
    pub spawn_regions: Vec<Rect>,
}

/// Validated static world: obstacle shapes (including the four implicit
/// boundary walls), the enclosing bounds, and spawn regions for resets.
///
/// Immutable after load; safe to share across episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub bounds: Rect,
    /// All obstacle shapes. The first four entries are always the boundary
    /// walls derived from `bounds`.
    pub obstacles: Vec<Shape>,
    pub spawn_regions: Vec<Rect>,
}

impl WorldMap {
    /// Build and validate a world from a parsed description.
    pub fn from_file(file: WorldFile) -> Result<Self> {
        if file.format != WORLD_FORMAT {
            return Err(Error::WorldValidation(format!(
                "unsupported format {} (expected {WORLD_FORMAT})",
                file.format
            )));
        }
        if !file.bounds.is_valid() {
            return Err(Error::WorldValidation(format!(
                "bounds min must be strictly below max: {:?}",
                file.bounds
            )));
        }
        let bounds = file.bounds;
        let inside = |p: Vec2| bounds.contains(p);

        for (i, s) in file.obstacles.iter().enumerate() {
            match *s {
                Shape::Segment { a, b } => {
                    if !inside(a) || !inside(b) {
                        return Err(Error::WorldValidation(format!(
                            "obstacle {i}: segment endpoint outside bounds"
                        )));
                    }
                }
                Shape::Box { min, max } => {
                    if !(min.x < max.x && min.y < max.y) {
                        return Err(Error::WorldValidation(format!(
                            "obstacle {i}: box extents must be strictly positive"
                        )));
                    }
                    if !inside(min) || !inside(max) {
                        return Err(Error::WorldValidation(format!(
                            "obstacle {i}: box outside bounds"
                        )));
                    }
                }
                Shape::Disc { center, radius } => {
                    if radius <= 0.0 {
                        return Err(Error::WorldValidation(format!(
                            "obstacle {i}: disc radius must be strictly positive"
                        )));
                    }
                    let r = Vec2::new(radius, radius);
                    if !inside(center.sub(r)) || !inside(center.add(r)) {
                        return Err(Error::WorldValidation(format!(
                            "obstacle {i}: disc outside bounds"
                        )));
                    }
                }
            }
        }
        for (i, r) in file.spawn_regions.iter().enumerate() {
            if !r.is_valid() {
                return Err(Error::WorldValidation(format!(
                    "spawn region {i}: min must be strictly below max"
                )));
            }
            if !inside(r.min) || !inside(r.max) {
                return Err(Error::WorldValidation(format!(
                    "spawn region {i}: outside bounds"
                )));
            }
        }
        if file.spawn_regions.is_empty() {
            return Err(Error::WorldValidation(
                "at least one spawn region is required".into(),
            ));
        }

        // Boundary walls first, then the declared obstacles.
        let corners = bounds.corners();
        let mut obstacles = Vec::with_capacity(4 + file.obstacles.len());
        for k in 0..4 {
            obstacles.push(Shape::Segment {
                a: corners[k],
                b: corners[(k + 1) % 4],
            });
        }
        obstacles.extend(file.obstacles);

        Ok(WorldMap {
            bounds,
            obstacles,
            spawn_regions: file.spawn_regions,
        })
    }

    /// Parse a world document from JSON text.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| Error::WorldSchema {
            path: origin.to_string(),
            detail: format!("{e} (line {}, column {})", e.line(), e.column()),
        })?;
        Self::from_file(file)
    }

    /// Load and validate a world file from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// True iff the robot body disc touches any obstacle or lies outside
    /// the bounds. Tangent contact counts as collision.
    pub fn collides(&self, state: &RobotState) -> bool {
        let p = state.position();
        if !self.bounds.contains(p) {
            return true;
        }
        self.obstacles
            .iter()
            .any(|s| s.distance_to(p) <= state.radius)
    }

    /// Distance along a single ray from `origin` at `bearing` to the nearest
    /// obstacle, clamped to `max_range`.
    pub fn raycast(&self, origin: Vec2, bearing: f64, max_range: f64) -> f64 {
        let dir = Vec2::new(bearing.cos(), bearing.sin());
        let mut nearest = max_range;
        for s in &self.obstacles {
            if let Some(t) = s.ray_hit(origin, dir) {
                if t < nearest {
                    nearest = t;
                }
            }
        }
        nearest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds_8x8() -> Rect {
        Rect::new(Vec2::new(-4.0, -4.0), Vec2::new(4.0, 4.0))
    }

    fn base_file() -> WorldFile {
        WorldFile {
            format: WORLD_FORMAT,
            bounds: bounds_8x8(),
            obstacles: vec![],
            spawn_regions: vec![Rect::new(Vec2::new(-3.0, -3.0), Vec2::new(3.0, 3.0))],
        }
    }

    #[test]
    fn empty_world_gets_four_boundary_walls() {
        let w = WorldMap::from_file(base_file()).unwrap();
        assert_eq!(w.obstacles.len(), 4);
        assert!(w
            .obstacles
            .iter()
            .all(|s| matches!(s, Shape::Segment { .. })));
    }

    #[test]
    fn inverted_box_rejected() {
        let mut f = base_file();
        f.obstacles.push(Shape::Box {
            min: Vec2::new(1.0, 1.0),
            max: Vec2::new(0.5, 2.0),
        });
        let err = WorldMap::from_file(f).unwrap_err();
        assert!(matches!(err, Error::WorldValidation(_)), "{err}");
    }

    #[test]
    fn obstacle_outside_bounds_rejected() {
        let mut f = base_file();
        f.obstacles.push(Shape::Disc {
            center: Vec2::new(3.9, 0.0),
            radius: 0.5,
        });
        assert!(WorldMap::from_file(f).is_err());
    }

    #[test]
    fn parse_failure_reports_line() {
        let err = WorldMap::from_json("{\n \"format\": 1,\n", "inline").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn wall_clearance_vs_penetration() {
        let w = WorldMap::from_file(base_file()).unwrap();
        // 0.3 m from the east wall, radius 0.2: clear.
        let clear = RobotState::new(3.7, 0.0, 0.0, 0.2);
        assert!(!w.collides(&clear));
        // 0.1 m from the wall: penetrating.
        let hit = RobotState::new(3.9, 0.0, 0.0, 0.2);
        assert!(w.collides(&hit));
    }

    #[test]
    fn tangent_disc_contact_is_collision() {
        let mut f = base_file();
        f.obstacles.push(Shape::Disc {
            center: Vec2::new(0.0, 0.0),
            radius: 0.5,
        });
        let w = WorldMap::from_file(f).unwrap();
        // Distance between centers exactly equals the radius sum.
        let tangent = RobotState::new(0.7, 0.0, 0.0, 0.2);
        assert!(w.collides(&tangent));
        let clear = RobotState::new(0.7 + 1e-9, 0.0, 0.0, 0.2);
        assert!(!w.collides(&clear));
    }

    #[test]
    fn raycast_clamps_to_max_range() {
        let w = WorldMap::from_file(base_file()).unwrap();
        let d = w.raycast(Vec2::new(0.0, 0.0), 0.0, 3.0);
        assert_eq!(d, 3.0);
    }
}
