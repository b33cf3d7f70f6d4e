//! Geodesic distances and shortest paths over the navigation graph.
//!
//! The graph has one node per navigable cell (center clear of obstacles by the
//! agent radius) and 8-connected edges: `cell_size` for axis moves and
//! `cell_size * sqrt(2)` for diagonals. Diagonals may not cut a corner. Off-grid
//! endpoints attach to nearby navigable cells by a straight, collision-free
//! segment costed at its Euclidean length.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::grid::{Category, GridMap, Point, DEFAULT_AGENT_RADIUS};
use crate::error::{Error, Result};

/// Radius (in cells) searched when attaching an endpoint to the graph.
const ATTACH_REACH: i64 = 2;

/// What a distance field measures distance to.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalRegion {
    /// A single metric point.
    Point(Point),
    /// Any navigable cell within `radius` of a footprint cell of the category.
    Category { category: Category, radius: f64 },
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    cost: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on (cost, row-major index).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-goal Dijkstra result: distance-to-goal for every navigable cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    radius: f64,
    dist: Vec<f64>,
    next: Vec<u32>,
    goal: GoalRegion,
}

const NO_NEXT: u32 = u32::MAX;

impl DistanceField {
    /// Distance field for the default agent radius.
    pub fn new(map: &GridMap, goal: &GoalRegion) -> Self {
        Self::with_radius(map, goal, DEFAULT_AGENT_RADIUS)
    }

    /// Distance field over cells navigable for a disc of `radius`.
    pub fn with_radius(map: &GridMap, goal: &GoalRegion, radius: f64) -> Self {
        let n = map.width() * map.height();
        let mut dist = vec![f64::INFINITY; n];
        let mut next = vec![NO_NEXT; n];
        let mut heap = BinaryHeap::new();

        let seeds: Vec<(usize, f64)> = match goal {
            GoalRegion::Point(p) => attach_candidates(map, *p, radius),
            GoalRegion::Category { category, radius: zone } => {
                success_zone(map, *category, *zone, radius).into_iter().map(|c| (c, 0.0)).collect()
            }
        };
        for (idx, cost) in seeds {
            if cost < dist[idx] {
                dist[idx] = cost;
                heap.push(Entry { cost, idx });
            }
        }

        let cs = map.cell_size();
        let diag = cs * std::f64::consts::SQRT_2;
        let (w, h) = (map.width() as i64, map.height() as i64);
        while let Some(Entry { cost, idx }) = heap.pop() {
            if cost > dist[idx] {
                continue;
            }
            let (i, j) = map.coords(idx);
            let (i, j) = (i as i64, j as i64);
            for (di, dj) in NEIGHBORS {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= w || nj >= h {
                    continue;
                }
                let nidx = (nj * w + ni) as usize;
                if !map.is_navigable(nidx, radius) {
                    continue;
                }
                let step = if di != 0 && dj != 0 {
                    let a = (j * w + ni) as usize;
                    let b = (nj * w + i) as usize;
                    if !map.is_navigable(a, radius) || !map.is_navigable(b, radius) {
                        continue;
                    }
                    diag
                } else {
                    cs
                };
                let nc = cost + step;
                if nc < dist[nidx] {
                    dist[nidx] = nc;
                    next[nidx] = idx as u32;
                    heap.push(Entry { cost: nc, idx: nidx });
                }
            }
        }
        Self {
            radius,
            dist,
            next,
            goal: goal.clone(),
        }
    }

    pub fn goal(&self) -> &GoalRegion {
        &self.goal
    }

    /// Field value at a cell (infinite when unreachable or not navigable).
    pub fn cell_distance(&self, idx: usize) -> f64 {
        self.dist[idx]
    }

    fn best_entry(&self, map: &GridMap, from: Point) -> Option<(usize, f64)> {
        attach_candidates(map, from, self.radius)
            .into_iter()
            .filter(|(c, _)| self.dist[*c].is_finite())
            .map(|(c, d)| (c, d + self.dist[c]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Geodesic distance from a point, `None` when the goal is unreachable.
    pub fn distance_from(&self, map: &GridMap, from: Point) -> Option<f64> {
        self.best_entry(map, from).map(|(_, d)| d)
    }

    /// Waypoints from `from` to the goal region, endpoints included.
    pub fn path_from(&self, map: &GridMap, from: Point) -> Option<Vec<Point>> {
        let (mut idx, _) = self.best_entry(map, from)?;
        let mut out = vec![from, map.cell_center(idx)];
        while self.next[idx] != NO_NEXT {
            idx = self.next[idx] as usize;
            out.push(map.cell_center(idx));
        }
        if let GoalRegion::Point(p) = self.goal {
            out.push(p);
        }
        Some(out)
    }
}

const NEIGHBORS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Navigable cells near `p` reachable by a clear straight segment, with the segment length.
fn attach_candidates(map: &GridMap, p: Point, radius: f64) -> Vec<(usize, f64)> {
    let Some((ci, cj)) = map.cell_of(p) else {
        return Vec::new();
    };
    if !map.disc_clear(p, radius) {
        return Vec::new();
    }
    let mut out = Vec::new();
    for dj in -ATTACH_REACH..=ATTACH_REACH {
        for di in -ATTACH_REACH..=ATTACH_REACH {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if i < 0 || j < 0 || i >= map.width() as i64 || j >= map.height() as i64 {
                continue;
            }
            let idx = map.index(i as usize, j as usize);
            if !map.is_navigable(idx, radius) {
                continue;
            }
            let c = map.cell_center(idx);
            if map.segment_clear(p, c, radius) {
                out.push((idx, p.distance(&c)));
            }
        }
    }
    out
}

/// Navigable cells whose center lies within `zone` of any instance of the category.
pub fn success_zone(map: &GridMap, category: Category, zone: f64, radius: f64) -> Vec<usize> {
    let instances: Vec<_> = map.instances_of(category).collect();
    if instances.is_empty() {
        return Vec::new();
    }
    (0..map.width() * map.height())
        .filter(|&idx| map.is_navigable(idx, radius))
        .filter(|&idx| {
            let c = map.cell_center(idx);
            instances.iter().any(|o| map.distance_to_instance(c, o) <= zone)
        })
        .collect()
}

/// Geodesic distance from `from` to the goal region; `None` means unreachable.
pub fn geodesic_distance(map: &GridMap, from: Point, goal: &GoalRegion) -> Option<f64> {
    DistanceField::new(map, goal).distance_from(map, from)
}

/// Shortest path as metric waypoints. Segment lengths sum to the geodesic distance.
pub fn shortest_path(map: &GridMap, from: Point, goal: &GoalRegion) -> Result<Vec<Point>> {
    DistanceField::new(map, goal)
        .path_from(map, from)
        .ok_or(Error::Unreachable)
}

/// Sum of consecutive segment lengths of a polyline.
pub fn path_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::grid::{SEMANTIC_FLOOR, SEMANTIC_WALL};

    fn room_with(w: usize, h: usize, extra_walls: &[(usize, usize)]) -> GridMap {
        let mut sem = vec![SEMANTIC_FLOOR; w * h];
        for j in 0..h {
            for i in 0..w {
                if i == 0 || j == 0 || i == w - 1 || j == h - 1 {
                    sem[j * w + i] = SEMANTIC_WALL;
                }
            }
        }
        for &(i, j) in extra_walls {
            sem[j * w + i] = SEMANTIC_WALL;
        }
        GridMap::from_parts("t", 0, 0.05, w, h, sem, vec![]).unwrap()
    }

    #[test]
    fn straight_line_in_open_room() {
        let m = room_with(200, 200, &[]);
        let d = geodesic_distance(&m, Point::new(1.0, 1.0), &GoalRegion::Point(Point::new(1.0, 4.0))).unwrap();
        assert!((d - 3.0).abs() <= 0.05, "{d}");
        let p = shortest_path(&m, Point::new(1.0, 1.0), &GoalRegion::Point(Point::new(1.0, 4.0))).unwrap();
        assert!((path_length(&p) - d).abs() < 1e-9);
    }

    #[test]
    fn sealed_goal_is_unreachable() {
        let mut walls = Vec::new();
        for k in 120..=180 {
            walls.push((k, 120));
            walls.push((k, 180));
            walls.push((120, k));
            walls.push((180, k));
        }
        let m = room_with(200, 200, &walls);
        let goal = GoalRegion::Point(Point::new(7.5, 7.5));
        assert_eq!(geodesic_distance(&m, Point::new(1.0, 1.0), &goal), None);
        assert!(matches!(shortest_path(&m, Point::new(1.0, 1.0), &goal), Err(Error::Unreachable)));
    }

    #[test]
    fn distance_is_symmetric_for_points() {
        let m = room_with(80, 60, &[(40, 10), (40, 11), (40, 12), (41, 30)]);
        let a = Point::new(0.7, 0.9);
        let b = Point::new(3.2, 1.6);
        let ab = geodesic_distance(&m, a, &GoalRegion::Point(b)).unwrap();
        let ba = geodesic_distance(&m, b, &GoalRegion::Point(a)).unwrap();
        assert!((ab - ba).abs() < 1e-9, "{ab} vs {ba}");
    }
}
