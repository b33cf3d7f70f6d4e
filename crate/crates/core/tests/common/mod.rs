#![allow(dead_code)]

use std::sync::Arc;

use robustnav::world::{
    generate_scene, Category, GridMap, ObjectInstance, Point, SceneParams, DEFAULT_CELL_SIZE, SEMANTIC_FLOOR,
    SEMANTIC_WALL,
};

pub const CS: f64 = DEFAULT_CELL_SIZE;

/// Semantic layer of a `w x h` cell room with a two-cell wall ring.
pub fn room_cells(w: usize, h: usize) -> Vec<u16> {
    let mut sem = vec![SEMANTIC_FLOOR; w * h];
    for j in 0..h {
        for i in 0..w {
            if i < 2 || j < 2 || i >= w - 2 || j >= h - 2 {
                sem[j * w + i] = SEMANTIC_WALL;
            }
        }
    }
    sem
}

/// Fill the cell rectangle `[i0, i1) x [j0, j1)` with `id`.
pub fn fill(sem: &mut [u16], w: usize, (i0, i1): (usize, usize), (j0, j1): (usize, usize), id: u16) {
    for j in j0..j1 {
        for i in i0..i1 {
            sem[j * w + i] = id;
        }
    }
}

/// Object instance covering a cell rectangle already filled with its id.
pub fn object(w: usize, category: Category, id: u16, (i0, i1): (usize, usize), (j0, j1): (usize, usize)) -> ObjectInstance {
    let footprint = (j0..j1).flat_map(|j| (i0..i1).map(move |i| j * w + i)).collect();
    ObjectInstance {
        category,
        instance_id: id,
        footprint,
        center: Point::new((i0 + i1) as f64 * CS / 2.0, (j0 + j1) as f64 * CS / 2.0),
    }
}

pub fn map(w: usize, h: usize, sem: Vec<u16>, objects: Vec<ObjectInstance>) -> GridMap {
    GridMap::from_parts("test-scene", 0, CS, w, h, sem, objects).unwrap()
}

/// Empty room of the given size in meters, wall ring included.
pub fn open_room(w_m: f64, h_m: f64) -> GridMap {
    let (w, h) = ((w_m / CS).round() as usize, (h_m / CS).round() as usize);
    map(w, h, room_cells(w, h), Vec::new())
}

pub fn generated(seed: u64) -> Arc<GridMap> {
    Arc::new(generate_scene(seed, &SceneParams::default()).unwrap())
}

pub fn generated_scenes(n: u64) -> Vec<Arc<GridMap>> {
    (0..n).map(generated).collect()
}

/// Cells that a disc of `radius` centered there does not overlap, by brute force.
pub fn brute_navigable(map: &GridMap, radius: f64) -> Vec<bool> {
    let (w, h) = (map.width(), map.height());
    let occupied: Vec<(usize, usize)> = (0..w * h)
        .filter(|&k| map.occupancy()[k])
        .map(|k| (k % w, k / w))
        .collect();
    (0..w * h)
        .map(|k| {
            if map.occupancy()[k] {
                return false;
            }
            let (ci, cj) = ((k % w) as f64 + 0.5, (k / w) as f64 + 0.5);
            occupied.iter().all(|&(i, j)| {
                // distance from the cell center to the occupied square
                let dx = (ci - (i as f64 + 0.5)).abs() - 0.5;
                let dy = (cj - (j as f64 + 0.5)).abs() - 0.5;
                dx.max(0.0).hypot(dy.max(0.0)) * map.cell_size() >= radius
            })
        })
        .collect()
}
