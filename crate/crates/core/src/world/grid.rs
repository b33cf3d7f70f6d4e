use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meters per cell used by generated scenes.
pub const DEFAULT_CELL_SIZE: f64 = 0.05;
/// Collision radius of the agent disc.
pub const DEFAULT_AGENT_RADIUS: f64 = 0.18;
/// Extra clearance a cell center needs before it joins the navigation graph.
/// Covers the dip of the disc-to-square distance between two adjacent centers.
pub const NAV_EPSILON: f64 = 0.005;
/// Clearance values are only tracked up to this distance.
pub const CLEARANCE_CAP: f64 = 0.75;

pub const SEMANTIC_FLOOR: u16 = 0;
pub const SEMANTIC_WALL: u16 = 1;
pub const FIRST_INSTANCE_ID: u16 = 2;
/// Instance ids map onto scene-file letters, so at most 52 instances fit.
pub const MAX_INSTANCE_ID: u16 = FIRST_INSTANCE_ID + 51;

/// A 2-D point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// The twelve target categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    AlarmClock,
    Apple,
    BaseballBat,
    BasketBall,
    Bowl,
    GarbageCan,
    HousePlant,
    Laptop,
    Mug,
    SprayBottle,
    Television,
    Vase,
}

impl Category {
    pub const ALL: [Category; 12] = [
        Category::AlarmClock,
        Category::Apple,
        Category::BaseballBat,
        Category::BasketBall,
        Category::Bowl,
        Category::GarbageCan,
        Category::HousePlant,
        Category::Laptop,
        Category::Mug,
        Category::SprayBottle,
        Category::Television,
        Category::Vase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::AlarmClock => "AlarmClock",
            Category::Apple => "Apple",
            Category::BaseballBat => "BaseballBat",
            Category::BasketBall => "BasketBall",
            Category::Bowl => "Bowl",
            Category::GarbageCan => "GarbageCan",
            Category::HousePlant => "HousePlant",
            Category::Laptop => "Laptop",
            Category::Mug => "Mug",
            Category::SprayBottle => "SprayBottle",
            Category::Television => "Television",
            Category::Vase => "Vase",
        }
    }

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|c| *c == self).unwrap_or(0)
    }

    /// Footprint (width, depth) in meters.
    pub fn footprint_m(self) -> (f64, f64) {
        match self {
            Category::AlarmClock => (0.20, 0.15),
            Category::Apple => (0.15, 0.15),
            Category::BaseballBat => (0.80, 0.10),
            Category::BasketBall => (0.25, 0.25),
            Category::Bowl => (0.25, 0.25),
            Category::GarbageCan => (0.35, 0.35),
            Category::HousePlant => (0.40, 0.40),
            Category::Laptop => (0.35, 0.25),
            Category::Mug => (0.15, 0.15),
            Category::SprayBottle => (0.15, 0.15),
            Category::Television => (0.80, 0.15),
            Category::Vase => (0.25, 0.25),
        }
    }

    /// Rendered height in meters. Every height exceeds the camera height.
    pub fn height_m(self) -> f64 {
        match self {
            Category::AlarmClock => 0.25,
            Category::Apple => 0.20,
            Category::BaseballBat => 0.20,
            Category::BasketBall => 0.25,
            Category::Bowl => 0.20,
            Category::GarbageCan => 0.50,
            Category::HousePlant => 0.80,
            Category::Laptop => 0.25,
            Category::Mug => 0.20,
            Category::SprayBottle => 0.30,
            Category::Television => 0.90,
            Category::Vase => 0.45,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse {
                offset: 0,
                message: format!("unknown category {s:?}"),
            })
    }
}

/// A placed object. Its footprint is the set of cells carrying `instance_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: Category,
    pub instance_id: u16,
    pub footprint: Vec<usize>,
    pub center: Point,
}

/// Agent pose: continuous position, heading in degrees (CCW from +x), discrete pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub pitch: i32,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_heading(heading),
            pitch: 0,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Wrap an angle in degrees into [0, 360).
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Wrap an angle in degrees into (-180, 180].
pub fn wrap_degrees(deg: f64) -> f64 {
    let mut a = deg.rem_euclid(360.0);
    if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Occupancy and semantics of a scene at fixed metric resolution.
///
/// Cell `(i, j)` covers `[i*cs, (i+1)*cs) x [j*cs, (j+1)*cs)` and is stored at
/// `j * width + i`. Everything outside the grid counts as occupied, so the
/// world is always closed. Generated scenes additionally carry a wall ring and
/// are at least 20 cells per side (see [`GridMap::is_closed`]).
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    cell_size: f64,
    width: usize,
    height: usize,
    occupancy: Vec<bool>,
    semantic: Vec<u16>,
    objects: Vec<ObjectInstance>,
    scene_id: String,
    seed: u64,
    clearance: Vec<f32>,
}

impl GridMap {
    /// Build a map from raw layers, checking every structural invariant.
    pub fn from_parts(
        scene_id: impl Into<String>,
        seed: u64,
        cell_size: f64,
        width: usize,
        height: usize,
        semantic: Vec<u16>,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self> {
        let scene_id = scene_id.into();
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidMap(format!("cell_size must be > 0, got {cell_size}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap(format!("empty map {width}x{height}")));
        }
        if semantic.len() != width * height {
            return Err(Error::InvalidMap(format!(
                "expected {} cells, got {}",
                width * height,
                semantic.len()
            )));
        }
        if scene_id.is_empty() || scene_id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidMap(format!("bad scene id {scene_id:?}")));
        }
        for obj in &objects {
            if obj.instance_id < FIRST_INSTANCE_ID || obj.instance_id > MAX_INSTANCE_ID {
                return Err(Error::InvalidMap(format!("instance id {} out of range", obj.instance_id)));
            }
            if obj.footprint.is_empty() {
                return Err(Error::InvalidMap(format!("instance {} has no footprint", obj.instance_id)));
            }
            for &c in &obj.footprint {
                if semantic.get(c) != Some(&obj.instance_id) {
                    return Err(Error::InvalidMap(format!(
                        "footprint cell {c} of instance {} carries another id",
                        obj.instance_id
                    )));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for obj in &objects {
            if !seen.insert(obj.instance_id) {
                return Err(Error::InvalidMap(format!("duplicate instance id {}", obj.instance_id)));
            }
        }
        for (idx, &s) in semantic.iter().enumerate() {
            if s >= FIRST_INSTANCE_ID && !seen.contains(&s) {
                return Err(Error::InvalidMap(format!("cell {idx} carries unknown instance id {s}")));
            }
        }
        let mut objects = objects;
        for obj in &mut objects {
            obj.footprint.sort_unstable();
        }
        objects.sort_by_key(|o| o.instance_id);
        let occupancy: Vec<bool> = semantic.iter().map(|&s| s != SEMANTIC_FLOOR).collect();
        let clearance = compute_clearance(cell_size, width, height, &occupancy);
        Ok(Self {
            cell_size,
            width,
            height,
            occupancy,
            semantic,
            objects,
            scene_id,
            seed,
            clearance,
        })
    }

    /// Boundary ring fully occupied and both sides at least 20 cells.
    pub fn is_closed(&self) -> bool {
        if self.width < 20 || self.height < 20 {
            return false;
        }
        (0..self.height).all(|j| {
            (0..self.width).all(|i| {
                let border = i == 0 || j == 0 || i == self.width - 1 || j == self.height - 1;
                !border || self.occupancy[j * self.width + i]
            })
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }
    pub fn semantic(&self) -> &[u16] {
        &self.semantic
    }
    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    /// Cell containing a metric point, if inside the map.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        if !(p.x.is_finite() && p.y.is_finite()) || p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let i = (p.x / self.cell_size).floor() as usize;
        let j = (p.y / self.cell_size).floor() as usize;
        (i < self.width && j < self.height).then_some((i, j))
    }

    pub fn cell_center(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        Point::new((i as f64 + 0.5) * self.cell_size, (j as f64 + 0.5) * self.cell_size)
    }

    /// Occupancy with out-of-bounds treated as occupied.
    pub fn is_occupied(&self, i: i64, j: i64) -> bool {
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            return true;
        }
        self.occupancy[j as usize * self.width + i as usize]
    }

    pub fn semantic_at(&self, i: i64, j: i64) -> u16 {
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            return SEMANTIC_WALL;
        }
        self.semantic[j as usize * self.width + i as usize]
    }

    /// Distance from a cell center to the nearest occupied cell square, capped.
    pub fn clearance(&self, idx: usize) -> f64 {
        f64::from(self.clearance[idx])
    }

    /// Whether a cell center belongs to the navigation graph for the given radius.
    pub fn is_navigable(&self, idx: usize, radius: f64) -> bool {
        !self.occupancy[idx] && self.clearance(idx) >= radius + NAV_EPSILON
    }

    pub fn instance(&self, instance_id: u16) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    pub fn instances_of(&self, category: Category) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.category == category)
    }

    /// Euclidean distance from a point to the closest point of a cell square.
    pub fn distance_to_cell(&self, p: Point, idx: usize) -> f64 {
        let (i, j) = self.coords(idx);
        let cs = self.cell_size;
        let (x0, y0) = (i as f64 * cs, j as f64 * cs);
        let dx = (x0 - p.x).max(p.x - (x0 + cs)).max(0.0);
        let dy = (y0 - p.y).max(p.y - (y0 + cs)).max(0.0);
        dx.hypot(dy)
    }

    /// Distance from a point to the nearest footprint cell of an instance.
    pub fn distance_to_instance(&self, p: Point, obj: &ObjectInstance) -> f64 {
        obj.footprint
            .iter()
            .map(|&c| self.distance_to_cell(p, c))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether a disc of `radius` at `p` overlaps no occupied cell.
    pub fn disc_clear(&self, p: Point, radius: f64) -> bool {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return false;
        }
        let cs = self.cell_size;
        let i0 = ((p.x - radius) / cs).floor() as i64;
        let i1 = ((p.x + radius) / cs).floor() as i64;
        let j0 = ((p.y - radius) / cs).floor() as i64;
        let j1 = ((p.y + radius) / cs).floor() as i64;
        let r2 = radius * radius;
        for j in j0..=j1 {
            for i in i0..=i1 {
                if !self.is_occupied(i, j) {
                    continue;
                }
                let (x0, y0) = (i as f64 * cs, j as f64 * cs);
                let dx = (x0 - p.x).max(p.x - (x0 + cs)).max(0.0);
                let dy = (y0 - p.y).max(p.y - (y0 + cs)).max(0.0);
                if dx * dx + dy * dy < r2 {
                    return false;
                }
            }
        }
        true
    }

    /// Whether the disc swept from `a` to `b` stays clear.
    pub fn segment_clear(&self, a: Point, b: Point, radius: f64) -> bool {
        let len = a.distance(&b);
        let samples = ((len / (self.cell_size * 0.25)).ceil() as usize).max(1);
        (0..=samples).all(|k| {
            let t = k as f64 / samples as f64;
            self.disc_clear(Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t), radius)
        })
    }

    /// A pose is valid when its disc is clear and its pitch is one of the three levels.
    pub fn validate_pose(&self, pose: &Pose, radius: f64) -> Result<()> {
        if !(pose.x.is_finite() && pose.y.is_finite() && pose.heading.is_finite()) {
            return Err(Error::InvalidPose("non-finite component".into()));
        }
        if ![-30, 0, 30].contains(&pose.pitch) {
            return Err(Error::InvalidPose(format!("pitch {} not in {{-30, 0, 30}}", pose.pitch)));
        }
        if !self.disc_clear(pose.position(), radius) {
            return Err(Error::InvalidPose(format!(
                "agent disc at ({:.3}, {:.3}) overlaps an occupied cell",
                pose.x, pose.y
            )));
        }
        Ok(())
    }

    pub fn free_cell_count(&self) -> usize {
        self.occupancy.iter().filter(|o| !**o).count()
    }
}

fn compute_clearance(cs: f64, width: usize, height: usize, occ: &[bool]) -> Vec<f32> {
    let reach = (CLEARANCE_CAP / cs).ceil() as i64 + 1;
    let mut out = vec![0.0f32; width * height];
    for j in 0..height as i64 {
        for i in 0..width as i64 {
            let idx = j as usize * width + i as usize;
            if occ[idx] {
                continue;
            }
            let cx = (i as f64 + 0.5) * cs;
            let cy = (j as f64 + 0.5) * cs;
            let mut best = CLEARANCE_CAP * CLEARANCE_CAP;
            for dj in -reach..=reach {
                let jj = j + dj;
                for di in -reach..=reach {
                    let ii = i + di;
                    let occupied = ii < 0
                        || jj < 0
                        || ii >= width as i64
                        || jj >= height as i64
                        || occ[jj as usize * width + ii as usize];
                    if !occupied {
                        continue;
                    }
                    let (x0, y0) = (ii as f64 * cs, jj as f64 * cs);
                    let dx = (x0 - cx).max(cx - (x0 + cs)).max(0.0);
                    let dy = (y0 - cy).max(cy - (y0 + cs)).max(0.0);
                    let d2 = dx * dx + dy * dy;
                    if d2 < best {
                        best = d2;
                    }
                }
            }
            out[idx] = best.sqrt() as f32;
        }
    }
    out
}
