mod common;

use proptest::prelude::*;

use common::*;
use robustnav::render::*;
use robustnav::world::*;

fn intr(width: usize, h_fov: f64) -> CameraIntrinsics {
    CameraIntrinsics {
        h_fov,
        width,
        height: width,
        max_depth: 10.0,
    }
}

/// Perpendicular depth by marching along the column ray in small steps.
fn marched_depth(map: &GridMap, pose: &Pose, intr: &CameraIntrinsics, col: usize) -> f64 {
    let theta = pose.heading.to_radians();
    let s = intr.column_offset(col);
    let (dx, dy) = (theta.cos() - s * theta.sin(), theta.sin() + s * theta.cos());
    let norm = dx.hypot(dy);
    let (ux, uy) = (dx / norm, dy / norm);
    let step = 0.0005;
    let mut t = 0.0;
    while t / norm < intr.max_depth {
        let (x, y) = (pose.x + ux * t, pose.y + uy * t);
        let (i, j) = ((x / map.cell_size()).floor() as i64, (y / map.cell_size()).floor() as i64);
        if map.is_occupied(i, j) {
            return t / norm;
        }
        t += step;
    }
    intr.max_depth
}

#[test]
fn flat_wall_one_meter_ahead() {
    let map = open_room(4.0, 4.0);
    // inner face of the east wall is at x = 3.9
    let pose = Pose::new(2.9, 2.0, 0.0);
    let i = intr(65, 79.0);
    let f = render(&map, &pose, &i).unwrap();
    let mid = i.height / 2;
    assert!((f64::from(f.depth_at(mid, 32)) - 1.0).abs() <= CS);
}

#[test]
fn heading_wraps_around() {
    let map = generated(4);
    let p = map.cell_center((0..map.width() * map.height()).find(|&k| map.is_navigable(k, 0.18)).unwrap());
    let i = intr(48, 79.0);
    let a = render(&map, &Pose::new(p.x, p.y, 0.0), &i).unwrap();
    let b = render(&map, &Pose::new(p.x, p.y, 360.0), &i).unwrap();
    assert_eq!(a, b);
    let c = render(&map, &Pose::new(p.x, p.y, -90.0), &i).unwrap();
    let d = render(&map, &Pose::new(p.x, p.y, 270.0), &i).unwrap();
    assert_eq!(c, d);
}

#[test]
fn center_column_ignores_fov() {
    let map = generated(2);
    let pts: Vec<Point> = (0..map.width() * map.height())
        .filter(|&k| map.is_navigable(k, 0.18))
        .map(|k| map.cell_center(k))
        .collect();
    for (n, p) in pts.iter().step_by(pts.len() / 10).enumerate() {
        let pose = Pose::new(p.x, p.y, 37.0 * n as f64);
        let wide = render(&map, &pose, &intr(65, 79.0)).unwrap();
        let narrow = render(&map, &pose, &intr(65, 39.5)).unwrap();
        assert_eq!(wide.depth_at(32, 32), narrow.depth_at(32, 32));
    }
}

#[test]
fn invalid_pose_and_intrinsics_are_rejected() {
    let map = open_room(4.0, 4.0);
    assert!(render(&map, &Pose::new(0.05, 0.05, 0.0), &intr(32, 79.0)).is_err());
    assert!(render(&map, &Pose::new(2.0, 2.0, 0.0), &intr(8, 79.0)).is_err());
    assert!(render(&map, &Pose::new(2.0, 2.0, 0.0), &intr(32, 180.0)).is_err());
}

fn room_with_vase(with_wall: bool) -> (GridMap, u16) {
    let (w, h) = (120, 120);
    let mut sem = room_cells(w, h);
    let id = FIRST_INSTANCE_ID;
    // 0.4 m square vase centered 2 m from (1.0, 3.0) at bearing 41 degrees
    let (cx, cy) = (1.0 + 2.0 * 41f64.to_radians().cos(), 3.0 + 2.0 * 41f64.to_radians().sin());
    let (i0, j0) = (((cx - 0.2) / CS).round() as usize, ((cy - 0.2) / CS).round() as usize);
    fill(&mut sem, w, (i0, i0 + 8), (j0, j0 + 8), id);
    if with_wall {
        fill(&mut sem, w, (40, 42), (60, 100), SEMANTIC_WALL);
    }
    let objects = vec![object(w, Category::Vase, id, (i0, i0 + 8), (j0, j0 + 8))];
    (map(w, h, sem, objects), id)
}

#[test]
fn visibility_against_fov_and_occluders() {
    let (map, id) = room_with_vase(false);
    let at_bearing = Pose::new(1.0, 3.0, 0.0);
    assert!(visible(&map, &at_bearing, &intr(64, 79.0), id));
    assert!(!visible(&map, &at_bearing, &intr(64, 39.5), id));
    let facing = Pose::new(1.0, 3.0, 41.0);
    assert!(visible(&map, &facing, &intr(64, 39.5), id));
    assert!(!visible(&map, &Pose::new(1.0, 3.0, 221.0), &intr(64, 79.0), id));

    let (walled, id) = room_with_vase(true);
    assert!(!visible(&walled, &facing, &intr(64, 79.0), id));
    assert!(!visible(&walled, &facing, &intr(64, 79.0), 99));
}

#[test]
fn ppm_round_trip() {
    let f = render(&open_room(4.0, 4.0), &Pose::new(2.0, 2.0, 10.0), &intr(32, 79.0)).unwrap();
    let (w, h, rgb) = decode_ppm(&f.to_ppm()).unwrap();
    assert_eq!((w, h), (32, 32));
    assert_eq!(rgb, f.rgb);
    assert_eq!(f.depth_le_bytes().len(), 32 * 32 * 4);
    assert!(decode_ppm(b"P5\n2 2\n255\n....").is_err());
}

#[test]
fn cast_ray_hits_first_occupied_cell() {
    let map = open_room(4.0, 4.0);
    let hit = cast_ray(&map, 2.0, 2.0, 1.0, 0.0, f64::INFINITY).unwrap();
    assert!((hit.perp - 1.9).abs() < 1e-9);
    assert_eq!(hit.cell, (78, 40));
    assert_eq!(hit.semantic, SEMANTIC_WALL);
    assert!(cast_ray(&map, 2.0, 2.0, 1.0, 0.0, 1.0).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn horizon_depth_matches_marched_rays(seed in 0u64..8, pick in any::<prop::sample::Index>(), heading in 0.0f64..360.0) {
        let map = generated(seed);
        let pts: Vec<usize> = (0..map.width() * map.height()).filter(|&k| map.is_navigable(k, 0.18)).collect();
        let p = map.cell_center(*pick.get(&pts));
        let pose = Pose::new(p.x, p.y, heading);
        let i = intr(48, 79.0);
        let f = render(&map, &pose, &i).unwrap();
        for col in 0..i.width {
            let expect = marched_depth(&map, &pose, &i, col);
            let got = f64::from(f.depth_at(i.height / 2, col));
            prop_assert!((got - expect).abs() < 0.01, "col {}: {} vs {}", col, got, expect);
        }
    }

    #[test]
    fn rendering_is_pure_and_bounded(seed in 0u64..8, pick in any::<prop::sample::Index>(), heading in -720.0f64..720.0) {
        let map = generated(seed);
        let pts: Vec<usize> = (0..map.width() * map.height()).filter(|&k| map.is_navigable(k, 0.18)).collect();
        let p = map.cell_center(*pick.get(&pts));
        let pose = Pose::new(p.x, p.y, heading);
        let i = intr(32, 79.0);
        let a = render(&map, &pose, &i).unwrap();
        let _ = render(&map, &Pose::new(p.x, p.y, heading + 90.0), &i).unwrap();
        let b = render(&map, &pose, &i).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.depth.iter().all(|d| *d > 0.0 && f64::from(*d) <= i.max_depth));
        prop_assert_eq!(a.rgb.len(), 32 * 32 * 3);
    }
}
