//! Procedural apartment-like scenes.
//!
//! Rooms come from recursive splits of the interior. Every split wall gets one
//! door, so the room graph is a tree and always connected. Furniture and target
//! objects are rectangles kept away from door openings. A candidate that breaks
//! connectivity is thrown away and resampled from the same stream.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{
    Category, GridMap, ObjectInstance, Point, DEFAULT_AGENT_RADIUS, DEFAULT_CELL_SIZE, FIRST_INSTANCE_ID,
    MAX_INSTANCE_ID, SEMANTIC_FLOOR, SEMANTIC_WALL,
};
use super::geodesic::success_zone;
use crate::error::{Error, Result};
use crate::rng::{rng_from, SimRng};

/// Parameters for [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size: f64,
    pub rooms_min: u32,
    pub rooms_max: u32,
    pub min_room_m: f64,
    /// Door opening width; also the narrowest passage the generator creates.
    pub door_width_m: f64,
    pub wall_cells: usize,
    pub furniture_per_room_max: u32,
    /// Instances per category.
    pub objects: Vec<(Category, u32)>,
    pub agent_radius: f64,
    /// Radius of the ObjectNav success zone each instance must offer.
    pub object_success_radius: f64,
    pub max_retries: u32,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width_m: 8.0,
            height_m: 8.0,
            cell_size: DEFAULT_CELL_SIZE,
            rooms_min: 3,
            rooms_max: 6,
            min_room_m: 2.2,
            door_width_m: 0.9,
            wall_cells: 2,
            furniture_per_room_max: 2,
            objects: Category::ALL.iter().map(|c| (*c, 1)).collect(),
            agent_radius: DEFAULT_AGENT_RADIUS,
            object_success_radius: 1.0,
            max_retries: 64,
        }
    }
}

impl SceneParams {
    /// Single empty room, handy for tests and previews.
    pub fn empty_room(width_m: f64, height_m: f64) -> Self {
        Self {
            width_m,
            height_m,
            rooms_min: 1,
            rooms_max: 1,
            furniture_per_room_max: 0,
            objects: Vec::new(),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SceneParams(m));
        if !(self.cell_size > 0.0) {
            return bad(format!("cell_size {} must be positive", self.cell_size));
        }
        if self.rooms_min == 0 || self.rooms_min > self.rooms_max {
            return bad(format!("room range {}..={} is empty", self.rooms_min, self.rooms_max));
        }
        if self.door_width_m < 3.0 * self.agent_radius {
            return bad(format!(
                "door width {} m is narrower than 3 x agent radius ({} m)",
                self.door_width_m,
                3.0 * self.agent_radius
            ));
        }
        if self.min_room_m < self.door_width_m + 0.4 {
            return bad(format!("min room size {} m cannot hold a door", self.min_room_m));
        }
        let w = (self.width_m / self.cell_size).round() as usize;
        let h = (self.height_m / self.cell_size).round() as usize;
        if w < 20 || h < 20 {
            return bad(format!("scene of {w}x{h} cells is below the 20x20 minimum"));
        }
        let total: u32 = self.objects.iter().map(|(_, n)| *n).sum();
        if total as usize > usize::from(MAX_INSTANCE_ID - FIRST_INSTANCE_ID + 1) {
            return bad(format!("{total} objects exceed the 52-instance limit"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    i0: usize,
    j0: usize,
    i1: usize, // exclusive
    j1: usize, // exclusive
}

impl Rect {
    fn w(&self) -> usize {
        self.i1 - self.i0
    }
    fn h(&self) -> usize {
        self.j1 - self.j0
    }
    fn expanded(&self, by: usize) -> Rect {
        Rect {
            i0: self.i0.saturating_sub(by),
            j0: self.j0.saturating_sub(by),
            i1: self.i1 + by,
            j1: self.j1 + by,
        }
    }
    fn intersects(&self, o: &Rect) -> bool {
        self.i0 < o.i1 && o.i0 < self.i1 && self.j0 < o.j1 && o.j0 < self.j1
    }
}

struct Layout {
    width: usize,
    height: usize,
    sem: Vec<u16>,
    rooms: Vec<Rect>,
    doors: Vec<Rect>,
}

impl Layout {
    fn fill(&mut self, r: Rect, v: u16) {
        for j in r.j0..r.j1.min(self.height) {
            for i in r.i0..r.i1.min(self.width) {
                self.sem[j * self.width + i] = v;
            }
        }
    }

    fn all_floor(&self, r: Rect) -> bool {
        r.i1 <= self.width
            && r.j1 <= self.height
            && (r.j0..r.j1).all(|j| (r.i0..r.i1).all(|i| self.sem[j * self.width + i] == SEMANTIC_FLOOR))
    }
}

/// Generate a closed, connected scene deterministically from `seed`.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<GridMap> {
    params.validate()?;
    let mut rng = rng_from(seed);
    let mut last_reason = String::new();
    for _ in 0..params.max_retries {
        match try_generate(seed, params, &mut rng) {
            Ok(map) => return Ok(map),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::Generation {
        attempts: params.max_retries,
        reason: last_reason,
    })
}

/// Scene id used for generated scenes.
pub fn scene_id_for_seed(seed: u64) -> String {
    format!("gen-{seed}")
}

fn try_generate(seed: u64, p: &SceneParams, rng: &mut SimRng) -> std::result::Result<GridMap, String> {
    let cs = p.cell_size;
    let width = (p.width_m / cs).round() as usize;
    let height = (p.height_m / cs).round() as usize;
    let t = p.wall_cells.max(1);
    let mut layout = Layout {
        width,
        height,
        sem: vec![SEMANTIC_FLOOR; width * height],
        rooms: Vec::new(),
        doors: Vec::new(),
    };
    // outer wall ring
    layout.fill(Rect { i0: 0, j0: 0, i1: width, j1: t }, SEMANTIC_WALL);
    layout.fill(Rect { i0: 0, j0: height - t, i1: width, j1: height }, SEMANTIC_WALL);
    layout.fill(Rect { i0: 0, j0: 0, i1: t, j1: height }, SEMANTIC_WALL);
    layout.fill(Rect { i0: width - t, j0: 0, i1: width, j1: height }, SEMANTIC_WALL);

    let min_room = (p.min_room_m / cs).ceil() as usize;
    let door = ((p.door_width_m / cs).ceil() as usize).max(1);
    let target_rooms = rng.random_range(p.rooms_min..=p.rooms_max) as usize;
    let mut rooms = vec![Rect {
        i0: t,
        j0: t,
        i1: width - t,
        j1: height - t,
    }];

    while rooms.len() < target_rooms {
        // split the largest room that can still hold two rooms plus a wall
        let mut order: Vec<usize> = (0..rooms.len()).collect();
        order.sort_by_key(|&k| std::cmp::Reverse((rooms[k].w() * rooms[k].h(), k)));
        let mut split_done = false;
        for k in order {
            let r = rooms[k];
            let vertical = if r.w() == r.h() { rng.random_bool(0.5) } else { r.w() > r.h() };
            let span = if vertical { r.w() } else { r.h() };
            if span < 2 * min_room + t {
                continue;
            }
            // split line must keep clear of door openings on the room boundary
            let mut candidates: Vec<usize> = (min_room..=span - min_room - t).collect();
            candidates.retain(|&off| {
                let wall = if vertical {
                    Rect { i0: r.i0 + off, j0: r.j0.saturating_sub(t), i1: r.i0 + off + t, j1: r.j1 + t }
                } else {
                    Rect { i0: r.i0.saturating_sub(t), j0: r.j0 + off, i1: r.i1 + t, j1: r.j0 + off + t }
                };
                let wall = wall.expanded(2);
                !layout.doors.iter().any(|d| d.intersects(&wall))
            });
            if candidates.is_empty() {
                continue;
            }
            let off = candidates[rng.random_range(0..candidates.len())];
            let along = if vertical { r.h() } else { r.w() };
            if along < door + 4 {
                continue;
            }
            let door_at = rng.random_range(2..=along - door - 2);
            let (wall, door_rect, a, b) = if vertical {
                let x = r.i0 + off;
                (
                    Rect { i0: x, j0: r.j0, i1: x + t, j1: r.j1 },
                    Rect { i0: x, j0: r.j0 + door_at, i1: x + t, j1: r.j0 + door_at + door },
                    Rect { i0: r.i0, j0: r.j0, i1: x, j1: r.j1 },
                    Rect { i0: x + t, j0: r.j0, i1: r.i1, j1: r.j1 },
                )
            } else {
                let y = r.j0 + off;
                (
                    Rect { i0: r.i0, j0: y, i1: r.i1, j1: y + t },
                    Rect { i0: r.i0 + door_at, j0: y, i1: r.i0 + door_at + door, j1: y + t },
                    Rect { i0: r.i0, j0: r.j0, i1: r.i1, j1: y },
                    Rect { i0: r.i0, j0: y + t, i1: r.i1, j1: r.j1 },
                )
            };
            layout.fill(wall, SEMANTIC_WALL);
            layout.fill(door_rect, SEMANTIC_FLOOR);
            layout.doors.push(door_rect);
            rooms[k] = a;
            rooms.push(b);
            split_done = true;
            break;
        }
        if !split_done {
            break;
        }
    }
    layout.rooms = rooms;

    // keep-out zones in front of doors
    let door_clear = ((p.door_width_m / cs).ceil() as usize).max(4);
    let keep_out: Vec<Rect> = layout.doors.iter().map(|d| d.expanded(door_clear)).collect();
    let halo = ((2.0 * p.agent_radius + 0.1) / cs).ceil() as usize;

    for room in layout.rooms.clone() {
        let n = if p.furniture_per_room_max == 0 {
            0
        } else {
            rng.random_range(0..=p.furniture_per_room_max)
        };
        for _ in 0..n {
            let fw = rng.random_range((0.3 / cs) as usize..=(0.9 / cs) as usize);
            let fh = rng.random_range((0.3 / cs) as usize..=(0.9 / cs) as usize);
            if room.w() <= fw + 2 || room.h() <= fh + 2 {
                continue;
            }
            // snap against a wall half of the time
            let (i0, j0) = if rng.random_bool(0.5) {
                match rng.random_range(0..4) {
                    0 => (room.i0, rng.random_range(room.j0..room.j1 - fh)),
                    1 => (room.i1 - fw, rng.random_range(room.j0..room.j1 - fh)),
                    2 => (rng.random_range(room.i0..room.i1 - fw), room.j0),
                    _ => (rng.random_range(room.i0..room.i1 - fw), room.j1 - fh),
                }
            } else {
                (
                    rng.random_range(room.i0..room.i1 - fw),
                    rng.random_range(room.j0..room.j1 - fh),
                )
            };
            let r = Rect { i0, j0, i1: i0 + fw, j1: j0 + fh };
            if keep_out.iter().any(|k| k.intersects(&r)) {
                continue;
            }
            // keep a passable gap to anything else already in the room
            if !layout.all_floor(r.expanded(halo).intersect(&room)) {
                continue;
            }
            layout.fill(r, SEMANTIC_WALL);
        }
    }

    let mut objects = Vec::new();
    let mut next_id = FIRST_INSTANCE_ID;
    for &(category, count) in &p.objects {
        for _ in 0..count {
            let (wm, dm) = category.footprint_m();
            let rotate = rng.random_bool(0.5);
            let (wm, dm) = if rotate { (dm, wm) } else { (wm, dm) };
            let ow = ((wm / cs).round() as usize).max(1);
            let oh = ((dm / cs).round() as usize).max(1);
            let mut placed = None;
            for _ in 0..200 {
                let room = layout.rooms[rng.random_range(0..layout.rooms.len())];
                if room.w() <= ow + 2 || room.h() <= oh + 2 {
                    continue;
                }
                let i0 = rng.random_range(room.i0 + 1..room.i1 - ow - 1);
                let j0 = rng.random_range(room.j0 + 1..room.j1 - oh - 1);
                let r = Rect { i0, j0, i1: i0 + ow, j1: j0 + oh };
                if keep_out.iter().any(|k| k.intersects(&r)) {
                    continue;
                }
                if !layout.all_floor(r.expanded(2)) {
                    continue;
                }
                placed = Some(r);
                break;
            }
            let r = placed.ok_or_else(|| format!("no room left for {category}"))?;
            layout.fill(r, next_id);
            let footprint: Vec<usize> = (r.j0..r.j1)
                .flat_map(|j| (r.i0..r.i1).map(move |i| j * width + i))
                .collect();
            objects.push(ObjectInstance {
                category,
                instance_id: next_id,
                footprint,
                center: Point::new(
                    (r.i0 + r.i1) as f64 * 0.5 * cs,
                    (r.j0 + r.j1) as f64 * 0.5 * cs,
                ),
            });
            next_id += 1;
        }
    }

    let map = GridMap::from_parts(scene_id_for_seed(seed), seed, cs, width, height, layout.sem, objects)
        .map_err(|e| e.to_string())?;
    if !free_space_connected(&map) {
        return Err("free space is disconnected".into());
    }
    if !navigable_connected(&map, p.agent_radius) {
        return Err("navigable space is disconnected".into());
    }
    for obj in map.objects() {
        let zone = success_zone(&map, obj.category, p.object_success_radius, p.agent_radius);
        if zone.is_empty() {
            return Err(format!("instance {} has no reachable success zone", obj.instance_id));
        }
    }
    Ok(map)
}

impl Rect {
    fn intersect(&self, o: &Rect) -> Rect {
        let i0 = self.i0.max(o.i0);
        let j0 = self.j0.max(o.j0);
        Rect {
            i0,
            j0,
            i1: self.i1.min(o.i1).max(i0),
            j1: self.j1.min(o.j1).max(j0),
        }
    }
}

/// 8-connected flood fill over free cells; true when every free cell is reached.
pub fn free_space_connected(map: &GridMap) -> bool {
    let cells: Vec<usize> = (0..map.width() * map.height())
        .filter(|&c| !map.occupancy()[c])
        .collect();
    flood_covers(map, &cells, |c| !map.occupancy()[c], false)
}

/// Connectivity of the navigation graph (same adjacency as the geodesic search).
pub fn navigable_connected(map: &GridMap, radius: f64) -> bool {
    let cells: Vec<usize> = (0..map.width() * map.height())
        .filter(|&c| map.is_navigable(c, radius))
        .collect();
    flood_covers(map, &cells, |c| map.is_navigable(c, radius), true)
}

fn flood_covers(
    map: &GridMap,
    cells: &[usize],
    open: impl Fn(usize) -> bool,
    no_corner_cut: bool,
) -> bool {
    let Some(&start) = cells.first() else {
        return true;
    };
    let (w, h) = (map.width() as i64, map.height() as i64);
    let mut seen = vec![false; map.width() * map.height()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 1usize;
    while let Some(c) = queue.pop_front() {
        let (i, j) = map.coords(c);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= w || nj >= h {
                    continue;
                }
                let n = (nj * w + ni) as usize;
                if seen[n] || !open(n) {
                    continue;
                }
                if no_corner_cut && di != 0 && dj != 0 {
                    let a = (j as i64 * w + ni) as usize;
                    let b = (nj * w + i as i64) as usize;
                    if !open(a) || !open(b) {
                        continue;
                    }
                }
                seen[n] = true;
                count += 1;
                queue.push_back(n);
            }
        }
    }
    count == cells.len()
}
