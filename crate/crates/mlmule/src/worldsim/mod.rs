//! World geometry and co-location detection.
//!
//! The world is a row of pairwise-isolated square areas. Each area is
//! split into four quadrant spaces with one fixed device at each
//! quadrant's center, and a central void square carved out of space
//! membership so the middle of an area belongs to no space.

mod walk;
mod trace;

pub use trace::{load_trace, parse_trace, MobilityTrace, TraceRecord};
pub use walk::step_random_walk;

use crate::error::{Error, Result};

pub type TimeStep = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpaceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AreaId(pub usize);

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn euclidean(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn chebyshev(&self, other: &Position) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

/// Axis-aligned square, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub side: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, side: f64) -> Self {
        Rect { min_x, min_y, side }
    }

    pub fn max_x(&self) -> f64 {
        self.min_x + self.side
    }

    pub fn max_y(&self) -> f64 {
        self.min_y + self.side
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x >= self.min_x && p.x <= self.max_x() && p.y >= self.min_y && p.y <= self.max_y()
    }

    pub fn center(&self) -> Position {
        Position::new(self.min_x + self.side / 2.0, self.min_y + self.side / 2.0)
    }
}

/// A mule seen together with a fixed device at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CoLocation {
    pub mule: DeviceId,
    pub fixed: DeviceId,
    pub t: TimeStep,
}

#[derive(Debug, Clone)]
pub struct Space {
    pub id: SpaceId,
    pub bounds: Rect,
    pub fixed_device: DeviceId,
}

#[derive(Debug, Clone)]
pub struct Area {
    pub id: AreaId,
    pub bounds: Rect,
    pub spaces: Vec<Space>,
    pub central_void: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub n_areas: usize,
    pub area_side: f64,
    pub void_frac: f64,
    pub step_length: f64,
    pub comm_radius_mobile: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_areas: 2,
            area_side: 30.0,
            void_frac: 0.25,
            step_length: 1.0,
            comm_radius_mobile: 2.0,
            seed: 0,
        }
    }
}

pub const SPACES_PER_AREA: usize = 4;

#[derive(Debug, Clone)]
pub struct World {
    pub areas: Vec<Area>,
    pub step_length: f64,
    pub comm_radius_mobile: f64,
    pub seed: u64,
}

impl World {
    /// Builds the world from a config. Deterministic: geometry is a pure
    /// function of the config.
    pub fn build(cfg: &WorldConfig) -> Result<World> {
        if cfg.area_side <= 0.0 {
            return Err(Error::config(format!(
                "area_side must be > 0, got {}",
                cfg.area_side
            )));
        }
        if !(0.0..1.0).contains(&cfg.void_frac) {
            return Err(Error::config(format!(
                "void_frac must be in [0, 1), got {}",
                cfg.void_frac
            )));
        }
        if cfg.n_areas == 0 {
            return Err(Error::config("n_areas must be >= 1"));
        }
        if cfg.step_length <= 0.0 {
            return Err(Error::config("step_length must be > 0"));
        }
        if cfg.comm_radius_mobile < 0.0 {
            return Err(Error::config("comm_radius_mobile must be >= 0"));
        }

        // Areas sit in a row with a gap wider than the mobile radio
        // range, so devices in different areas can never be paired.
        let gap = 2.0 * cfg.comm_radius_mobile + 1.0;
        let side = cfg.area_side;
        let half = side / 2.0;

        let mut areas = Vec::with_capacity(cfg.n_areas);
        for a in 0..cfg.n_areas {
            let origin_x = a as f64 * (side + gap);
            let bounds = Rect::new(origin_x, 0.0, side);

            // Quadrants in row-major order from the area origin:
            // 0 = SW, 1 = SE, 2 = NW, 3 = NE.
            let mut spaces = Vec::with_capacity(SPACES_PER_AREA);
            for q in 0..SPACES_PER_AREA {
                let qx = (q % 2) as f64;
                let qy = (q / 2) as f64;
                let sid = SpaceId(a * SPACES_PER_AREA + q);
                spaces.push(Space {
                    id: sid,
                    bounds: Rect::new(origin_x + qx * half, qy * half, half),
                    fixed_device: DeviceId(sid.0),
                });
            }

            let void_side = cfg.void_frac * side;
            let c = bounds.center();
            let central_void = Rect::new(c.x - void_side / 2.0, c.y - void_side / 2.0, void_side);

            areas.push(Area {
                id: AreaId(a),
                bounds,
                spaces,
                central_void,
            });
        }

        Ok(World {
            areas,
            step_length: cfg.step_length,
            comm_radius_mobile: cfg.comm_radius_mobile,
            seed: cfg.seed,
        })
    }

    pub fn n_spaces(&self) -> usize {
        self.areas.len() * SPACES_PER_AREA
    }

    pub fn space(&self, id: SpaceId) -> &Space {
        &self.areas[id.0 / SPACES_PER_AREA].spaces[id.0 % SPACES_PER_AREA]
    }

    pub fn area(&self, id: AreaId) -> &Area {
        &self.areas[id.0]
    }

    pub fn area_of_space(&self, id: SpaceId) -> AreaId {
        AreaId(id.0 / SPACES_PER_AREA)
    }

    /// Fixed devices take ids `0..n_spaces`, one per space.
    pub fn fixed_device_id(&self, space: SpaceId) -> DeviceId {
        DeviceId(space.0)
    }

    /// Mules take ids after the fixed devices: ordinal `k` maps to
    /// `n_spaces + k`.
    pub fn mule_device_id(&self, ordinal: usize) -> DeviceId {
        DeviceId(self.n_spaces() + ordinal)
    }

    /// Position of a space's fixed device: the space center.
    pub fn fixed_position(&self, space: SpaceId) -> Position {
        self.space(space).bounds.center()
    }

    pub fn area_containing(&self, p: Position) -> Option<&Area> {
        self.areas.iter().find(|a| a.bounds.contains(p))
    }

    /// The unique space whose membership region contains `p`, or `None`
    /// for the void, the inter-area gap, or anywhere outside.
    ///
    /// A point on a shared quadrant boundary belongs to the space with
    /// the smaller id; a point inside the void (boundary included)
    /// belongs to no space.
    pub fn locate(&self, p: Position) -> Option<SpaceId> {
        let area = self.area_containing(p)?;
        if area.central_void.side > 0.0 && area.central_void.contains(p) {
            return None;
        }
        area.spaces
            .iter()
            .find(|s| s.bounds.contains(p))
            .map(|s| s.id)
    }
}

/// One co-location event per (mule, fixed device) pair where the mule's
/// position falls inside the fixed device's space. A single event
/// stands for discovery in both directions. `positions` is indexed by
/// mule ordinal; output is sorted by mule ordinal.
pub fn detect_colocations(world: &World, positions: &[Position], t: TimeStep) -> Vec<CoLocation> {
    let mut events = Vec::new();
    for (k, &p) in positions.iter().enumerate() {
        if let Some(sid) = world.locate(p) {
            events.push(CoLocation {
                mule: world.mule_device_id(k),
                fixed: world.fixed_device_id(sid),
                t,
            });
        }
    }
    events
}

/// Unordered mule pairs within `comm_radius_mobile` (closed ball,
/// Euclidean). Pairs are returned as ordinals with `a < b`, sorted.
pub fn detect_mobile_encounters(world: &World, positions: &[Position]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in 0..positions.len() {
        for b in (a + 1)..positions.len() {
            if positions[a].euclidean(&positions[b]) <= world.comm_radius_mobile {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;

    fn world2() -> World {
        World::build(&WorldConfig::default()).unwrap()
    }

    #[test]
    fn build_world_two_areas() {
        let w = world2();
        assert_eq!(w.n_spaces(), 8);
        // One fixed device per space, at the quadrant center.
        for a in &w.areas {
            assert_eq!(a.spaces.len(), 4);
            for s in &a.spaces {
                let c = s.bounds.center();
                assert_eq!(w.fixed_position(s.id), c);
                assert!(w.locate(c) == Some(s.id));
            }
        }
    }

    #[test]
    fn build_world_rejects_bad_geometry() {
        let mut cfg = WorldConfig::default();
        cfg.void_frac = 1.0;
        assert!(World::build(&cfg).is_err());
        let mut cfg = WorldConfig::default();
        cfg.area_side = 0.0;
        assert!(World::build(&cfg).is_err());
    }

    #[test]
    fn zero_void_covers_whole_area() {
        let mut cfg = WorldConfig::default();
        cfg.n_areas = 1;
        cfg.void_frac = 0.0;
        let w = World::build(&cfg).unwrap();
        // every in-area point belongs to a space
        let side = cfg.area_side;
        for i in 0..=10 {
            for j in 0..=10 {
                let p = Position::new(side * i as f64 / 10.0, side * j as f64 / 10.0);
                assert!(w.locate(p).is_some(), "uncovered point {p:?}");
            }
        }
    }

    #[test]
    fn areas_are_isolated_beyond_radio_range() {
        let w = world2();
        let a0 = &w.areas[0].bounds;
        let a1 = &w.areas[1].bounds;
        // Closest approach between the two areas is the inter-area gap.
        let gap = a1.min_x - a0.max_x();
        assert!(gap > w.comm_radius_mobile);
    }

    #[test]
    fn void_center_belongs_to_no_space() {
        let w = world2();
        let c = w.areas[0].bounds.center();
        assert_eq!(w.locate(c), None);
    }

    #[test]
    fn boundary_points_resolve_to_lowest_space_id() {
        // 3x3 lattice over one area with no void; frozen expectations
        // from scanning every corner and edge midpoint by hand.
        let mut cfg = WorldConfig::default();
        cfg.n_areas = 1;
        cfg.void_frac = 0.0;
        cfg.area_side = 30.0;
        let w = World::build(&cfg).unwrap();
        let l = 30.0;
        let h = 15.0;
        let expect = [
            ((0.0, 0.0), 0),
            ((h, 0.0), 0),
            ((l, 0.0), 1),
            ((0.0, h), 0),
            ((h, h), 0),
            ((l, h), 1),
            ((0.0, l), 2),
            ((h, l), 2),
            ((l, l), 3),
        ];
        for ((x, y), sid) in expect {
            assert_eq!(
                w.locate(Position::new(x, y)),
                Some(SpaceId(sid)),
                "at ({x},{y})"
            );
        }
    }

    #[test]
    fn colocation_detection() {
        let w = world2();
        let s0 = w.fixed_position(SpaceId(0));
        let s5 = w.fixed_position(SpaceId(5));
        let void = w.areas[0].bounds.center();
        let positions = vec![s0, void, s5, s0];
        let events = detect_colocations(&w, &positions, 7);
        assert_eq!(events.len(), 3);
        assert_eq!(events[0].mule, w.mule_device_id(0));
        assert_eq!(events[0].fixed, DeviceId(0));
        assert_eq!(events[1].mule, w.mule_device_id(2));
        assert_eq!(events[1].fixed, DeviceId(5));
        // two mules in the same space share the fixed device
        assert_eq!(events[2].fixed, events[0].fixed);
        assert!(events.iter().all(|e| e.t == 7));
    }

    #[test]
    fn encounter_radius_is_a_closed_ball() {
        let w = world2();
        let p0 = Position::new(1.0, 1.0);
        let exactly = Position::new(1.0 + w.comm_radius_mobile, 1.0);
        let beyond = Position::new(1.0 + w.comm_radius_mobile + 1e-9, 1.0);
        assert_eq!(detect_mobile_encounters(&w, &[p0, exactly]), vec![(0, 1)]);
        assert!(detect_mobile_encounters(&w, &[p0, beyond]).is_empty());
        // identical positions pair up
        assert_eq!(detect_mobile_encounters(&w, &[p0, p0]), vec![(0, 1)]);
    }

    #[test]
    fn cross_area_devices_never_pair() {
        let w = world2();
        let a = w.fixed_position(SpaceId(1)); // area 0, east quadrant
        let b = w.fixed_position(SpaceId(4)); // area 1, west quadrant
        assert!(detect_mobile_encounters(&w, &[a, b]).is_empty());
    }
}
