mod common;

use std::collections::{BinaryHeap, VecDeque};
use std::cmp::Reverse;

use proptest::prelude::*;

use common::*;
use robustnav::world::*;
use robustnav::Error;

fn free_flood_fraction(map: &GridMap) -> f64 {
    let (w, h) = (map.width(), map.height());
    let occ = map.occupancy();
    let Some(start) = (0..w * h).find(|&k| !occ[k]) else {
        return 1.0;
    };
    let mut seen = vec![false; w * h];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut reached = 1usize;
    while let Some(k) = queue.pop_front() {
        let (i, j) = ((k % w) as i64, (k / w) as i64);
        for dj in -1..=1i64 {
            for di in -1..=1i64 {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                    continue;
                }
                let n = nj as usize * w + ni as usize;
                if !occ[n] && !seen[n] {
                    seen[n] = true;
                    reached += 1;
                    queue.push_back(n);
                }
            }
        }
    }
    reached as f64 / occ.iter().filter(|o| !**o).count() as f64
}

/// Dijkstra over brute-force navigable cells, 8-connected without corner cutting.
fn oracle_distance(map: &GridMap, nav: &[bool], from: usize, to: usize) -> Option<f64> {
    let (w, h) = (map.width() as i64, map.height() as i64);
    let cs = map.cell_size();
    let mut dist = vec![f64::INFINITY; nav.len()];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Reverse(((0.0f64).to_bits(), from)));
    while let Some(Reverse((bits, k))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[k] {
            continue;
        }
        if k == to {
            return Some(d);
        }
        let (i, j) = (k as i64 % w, k as i64 / w);
        for dj in -1..=1i64 {
            for di in -1..=1i64 {
                let (ni, nj) = (i + di, j + dj);
                if (di == 0 && dj == 0) || ni < 0 || nj < 0 || ni >= w || nj >= h {
                    continue;
                }
                let n = (nj * w + ni) as usize;
                if !nav[n] {
                    continue;
                }
                if di != 0 && dj != 0 && !(nav[(j * w + ni) as usize] && nav[(nj * w + i) as usize]) {
                    continue;
                }
                let nd = d + if di != 0 && dj != 0 { cs * 2f64.sqrt() } else { cs };
                if nd < dist[n] {
                    dist[n] = nd;
                    heap.push(Reverse((nd.to_bits(), n)));
                }
            }
        }
    }
    None
}

fn navigable_points(map: &GridMap) -> Vec<Point> {
    (0..map.width() * map.height())
        .filter(|&k| map.is_navigable(k, DEFAULT_AGENT_RADIUS))
        .map(|k| map.cell_center(k))
        .collect()
}

#[test]
fn generation_is_deterministic() {
    let a = generate_scene(7, &SceneParams::default()).unwrap();
    let b = generate_scene(7, &SceneParams::default()).unwrap();
    assert_eq!(save_scene(&a), save_scene(&b));
    assert_eq!(a, b);
}

#[test]
fn single_room_is_one_rectangle() {
    let map = generate_scene(7, &SceneParams::empty_room(8.0, 8.0)).unwrap();
    let w = map.width();
    let free: Vec<(usize, usize)> = (0..w * map.height())
        .filter(|&k| !map.occupancy()[k])
        .map(|k| (k % w, k / w))
        .collect();
    let (i0, i1) = (free.iter().map(|c| c.0).min().unwrap(), free.iter().map(|c| c.0).max().unwrap());
    let (j0, j1) = (free.iter().map(|c| c.1).min().unwrap(), free.iter().map(|c| c.1).max().unwrap());
    assert_eq!(free.len(), (i1 - i0 + 1) * (j1 - j0 + 1));
    assert_eq!(free_flood_fraction(&map), 1.0);
}

#[test]
fn flood_fill_reaches_every_free_cell() {
    let map = generate_scene(13, &SceneParams::default()).unwrap();
    assert_eq!(free_flood_fraction(&map), 1.0);
}

#[test]
fn bad_params_are_rejected() {
    let p = SceneParams {
        door_width_m: 0.3,
        ..SceneParams::default()
    };
    assert!(matches!(generate_scene(0, &p), Err(Error::SceneParams(_))));
    let p = SceneParams {
        width_m: 0.5,
        ..SceneParams::default()
    };
    assert!(generate_scene(0, &p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_maps_hold_their_invariants(seed in 0u64..10_000) {
        let map = generate_scene(seed, &SceneParams::default()).unwrap();
        prop_assert!(map.is_closed());
        prop_assert!(map.width() >= 20 && map.height() >= 20);
        prop_assert_eq!(free_flood_fraction(&map), 1.0);
        prop_assert!(navigable_connected(&map, DEFAULT_AGENT_RADIUS));
        for c in Category::ALL {
            prop_assert!(map.instances_of(c).count() >= 1, "missing {}", c);
        }
        for o in map.objects() {
            for &cell in &o.footprint {
                prop_assert_eq!(map.semantic()[cell], o.instance_id);
            }
        }
        let back = load_scene(&save_scene(&map)).unwrap();
        prop_assert_eq!(back, map);
    }

    #[test]
    fn geodesic_metric_properties(seed in 0u64..64, picks in proptest::collection::vec(any::<prop::sample::Index>(), 3)) {
        let map = generated(seed);
        let pts = navigable_points(&map);
        let [a, b, c] = [picks[0].get(&pts), picks[1].get(&pts), picks[2].get(&pts)];
        let d = |p: &Point, q: &Point| geodesic_distance(&map, *p, &GoalRegion::Point(*q)).unwrap();
        let (ab, ba, bc, ac) = (d(a, b), d(b, a), d(b, c), d(a, c));
        prop_assert!((ab - ba).abs() < 1e-9, "{} vs {}", ab, ba);
        prop_assert!(ac <= ab + bc + 2.0 * map.cell_size() + 1e-9);
        prop_assert!(ab >= a.distance(b) - 1e-9);

        let path = shortest_path(&map, *a, &GoalRegion::Point(*b)).unwrap();
        prop_assert!((path_length(&path) - ab).abs() < 1e-9);
        prop_assert_eq!(path.first(), Some(a));
        prop_assert_eq!(path.last(), Some(b));
        for seg in path.windows(2) {
            prop_assert!(map.segment_clear(seg[0], seg[1], DEFAULT_AGENT_RADIUS));
        }
    }
}

#[test]
fn open_room_straight_line() {
    let map = open_room(10.0, 10.0);
    let goal = GoalRegion::Point(Point::new(1.0, 4.0));
    let d = geodesic_distance(&map, Point::new(1.0, 1.0), &goal).unwrap();
    assert!((d - 3.0).abs() <= CS, "{d}");
    let path = shortest_path(&map, Point::new(1.0, 1.0), &goal).unwrap();
    assert!((path_length(&path) - d).abs() < 1e-9);
}

#[test]
fn doorway_matches_oracle() {
    let (w, h) = (200, 200);
    let mut sem = room_cells(w, h);
    // full wall at y = 2.5 m with a 0.5 m doorway at x in [4.0, 4.5)
    fill(&mut sem, w, (0, 80), (50, 52), SEMANTIC_WALL);
    fill(&mut sem, w, (90, w), (50, 52), SEMANTIC_WALL);
    let map = map(w, h, sem, Vec::new());
    let (from, to) = (Point::new(1.0, 1.0), Point::new(1.0, 4.0));

    let nav = brute_navigable(&map, DEFAULT_AGENT_RADIUS + NAV_EPSILON);
    let cell = |p: Point| {
        let (i, j) = map.cell_of(p).unwrap();
        map.index(i, j)
    };
    let (cf, ct) = (cell(from), cell(to));
    let expect = oracle_distance(&map, &nav, cf, ct).unwrap()
        + from.distance(&map.cell_center(cf))
        + to.distance(&map.cell_center(ct));

    let d = geodesic_distance(&map, from, &GoalRegion::Point(to)).unwrap();
    assert!((d - expect).abs() <= CS, "geodesic {d}, oracle {expect}");
    assert!(d > 6.5, "must detour through the doorway: {d}");
    let path = shortest_path(&map, from, &GoalRegion::Point(to)).unwrap();
    assert!((path_length(&path) - d).abs() < 1e-9);
    assert!(path.iter().any(|p| p.x > 3.9 && p.x < 4.6 && (p.y - 2.55).abs() < 0.1));
}

#[test]
fn sealed_room_is_unreachable() {
    let (w, h) = (200, 200);
    let mut sem = room_cells(w, h);
    fill(&mut sem, w, (0, w), (100, 102), SEMANTIC_WALL);
    let map = map(w, h, sem, Vec::new());
    let goal = GoalRegion::Point(Point::new(5.0, 8.0));
    assert_eq!(geodesic_distance(&map, Point::new(1.0, 1.0), &goal), None);
    assert!(matches!(
        shortest_path(&map, Point::new(1.0, 1.0), &goal),
        Err(Error::Unreachable)
    ));
}

#[test]
fn scene_file_round_trip_and_errors() {
    let map = generate_scene(3, &SceneParams::default()).unwrap();
    let bytes = save_scene(&map);
    assert_eq!(load_scene(&bytes).unwrap(), map);

    let text = String::from_utf8(bytes.clone()).unwrap();
    let grid_end = text.find("objects").unwrap();
    let truncated = &bytes[..grid_end];
    match load_scene(truncated) {
        Err(Error::Parse { message, .. }) => assert!(message.contains("missing section: objects"), "{message}"),
        other => panic!("{other:?}"),
    }
    let half = text[..text.len() / 2].rfind('\n').unwrap() + 1;
    match load_scene(&bytes[..half]) {
        Err(Error::Parse { message, .. }) => assert!(message.contains("missing section: grid"), "{message}"),
        other => panic!("{other:?}"),
    }
    let bad_header = text.replacen("robustnav-scene", "robustnav-scena", 1);
    assert!(matches!(load_scene(bad_header.as_bytes()), Err(Error::Parse { offset: 0, .. })));
}

#[test]
fn hand_written_five_by_five() {
    let text = "robustnav-scene v1 scene_id=hand cell_size=0.5 width=5 height=5 seed=0\n\
                .....\n\
                .....\n\
                ..#..\n\
                .....\n\
                .....\n\
                objects 0\n";
    let map = load_scene(text.as_bytes()).unwrap();
    assert_eq!((map.width(), map.height(), map.cell_size()), (5, 5, 0.5));
    let occupied: Vec<usize> = (0..25).filter(|&k| map.occupancy()[k]).collect();
    assert_eq!(occupied, vec![2 * 5 + 2]);
    assert!(map.is_occupied(-1, 0) && map.is_occupied(5, 4));
}

#[test]
fn unknown_category_reports_offset() {
    let text = "robustnav-scene v1 scene_id=hand cell_size=0.5 width=3 height=1 seed=0\n\
                .a.\n\
                objects 1\n\
                2 Dragon 0.75 0.25\n";
    let header_and_grid = text.find("2 Dragon").unwrap();
    match load_scene(text.as_bytes()) {
        Err(Error::Parse { offset, message }) => {
            assert_eq!(offset, header_and_grid + 2);
            assert!(message.contains("Dragon"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn inconsistent_row_width_is_rejected() {
    let text = "robustnav-scene v1 scene_id=hand cell_size=0.5 width=3 height=2 seed=0\n...\n....\nobjects 0\n";
    match load_scene(text.as_bytes()) {
        Err(Error::Parse { offset, message }) => {
            assert_eq!(offset, text.find("....").unwrap());
            assert!(message.contains("inconsistent dimensions"));
        }
        other => panic!("{other:?}"),
    }
}
