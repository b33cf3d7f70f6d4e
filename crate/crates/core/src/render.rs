//! Egocentric RGB-D frames from a 2.5-D grid raycaster.
//!
//! One DDA ray per image column. Each occupied cell is an extruded box that
//! starts at the floor: walls and furniture at [`WALL_HEIGHT`], objects at
//! their category height. Rows below the box show floor, rows above show
//! ceiling. Pitch moves the horizon row by a third of the image height.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::hash_str;
use crate::world::{normalize_heading, GridMap, Pose, DEFAULT_AGENT_RADIUS, FIRST_INSTANCE_ID};

/// Camera height above the floor in meters.
pub const CAMERA_HEIGHT: f64 = 0.15;
pub const WALL_HEIGHT: f64 = 2.5;
pub const CEILING_HEIGHT: f64 = 2.5;
/// Wall cells per colored panel along a face.
const PANEL_CELLS: i64 = 40;

const WALL_PALETTE: [[u8; 3]; 8] = [
    [60, 90, 200],
    [40, 150, 70],
    [190, 50, 60],
    [130, 60, 170],
    [30, 150, 160],
    [210, 190, 40],
    [90, 110, 140],
    [200, 90, 150],
];

const CATEGORY_PALETTE: [[u8; 3]; 12] = [
    [255, 40, 40],
    [220, 20, 90],
    [240, 240, 240],
    [255, 120, 0],
    [0, 220, 255],
    [20, 20, 20],
    [0, 255, 60],
    [70, 70, 255],
    [255, 0, 255],
    [160, 255, 0],
    [0, 0, 120],
    [255, 210, 170],
];

const FLOOR_BASE: [f64; 3] = [150.0, 118.0, 84.0];
const CEILING_BASE: [f64; 3] = [235.0, 232.0, 222.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Horizontal field of view in degrees.
    pub h_fov: f64,
    pub width: usize,
    pub height: usize,
    pub max_depth: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            h_fov: 79.0,
            width: 224,
            height: 224,
            max_depth: 10.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn with_size(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_fov > 0.0 && self.h_fov < 180.0) {
            return Err(Error::InvalidIntrinsics(format!("h_fov {} not in (0, 180)", self.h_fov)));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidIntrinsics(format!(
                "image {}x{} below 16x16",
                self.width, self.height
            )));
        }
        if !(self.max_depth > 0.0) {
            return Err(Error::InvalidIntrinsics(format!("max_depth {}", self.max_depth)));
        }
        Ok(())
    }

    /// Focal length in pixels (square pixels).
    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.h_fov.to_radians() / 2.0).tan()
    }

    /// Horizon row (continuous, in pixel units) for a pitch in degrees.
    pub fn horizon(&self, pitch: i32) -> f64 {
        let shift = (self.height / 3) as f64;
        self.height as f64 / 2.0 + shift * f64::from(pitch.signum())
    }

    /// Lateral camera-plane offset of a column's center (positive = left).
    pub fn column_offset(&self, col: usize) -> f64 {
        (self.width as f64 / 2.0 - (col as f64 + 0.5)) / self.focal()
    }
}

/// Egocentric RGB (row-major, 3 bytes per pixel) and depth (meters) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
}

impl Frame {
    pub fn rgb_at(&self, row: usize, col: usize) -> [u8; 3] {
        let k = (row * self.width + col) * 3;
        [self.rgb[k], self.rgb[k + 1], self.rgb[k + 2]]
    }

    pub fn depth_at(&self, row: usize, col: usize) -> f32 {
        self.depth[row * self.width + col]
    }

    /// Binary PPM (P6) encoding of the RGB channel.
    pub fn to_ppm(&self) -> Vec<u8> {
        encode_ppm(self.width, self.height, &self.rgb)
    }

    /// Depth as raw little-endian f32, row-major.
    pub fn depth_le_bytes(&self) -> Vec<u8> {
        self.depth.iter().flat_map(|d| d.to_le_bytes()).collect()
    }
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Parse a binary P6 PPM with maxval 255. Returns (width, height, rgb).
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse {
                offset: pos,
                message: "truncated PPM header".into(),
            });
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    pos += 1;
    if fields[0].1 != "P6" {
        return Err(Error::Parse {
            offset: 0,
            message: format!("expected P6, got {}", fields[0].1),
        });
    }
    let num = |k: usize| {
        fields[k].1.parse::<usize>().map_err(|_| Error::Parse {
            offset: fields[k].0,
            message: format!("bad PPM number {:?}", fields[k].1),
        })
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(Error::Parse {
            offset: fields[3].0,
            message: "only maxval 255 is supported".into(),
        });
    }
    let need = w * h * 3;
    let data = bytes.get(pos..pos + need).ok_or_else(|| Error::Parse {
        offset: bytes.len(),
        message: format!("PPM payload shorter than {need} bytes"),
    })?;
    Ok((w, h, data.to_vec()))
}

/// First occupied cell hit by a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Forward (perpendicular) distance in meters.
    pub perp: f64,
    pub cell: (i64, i64),
    /// Whether the ray entered the cell through a vertical (constant-x) face.
    pub x_side: bool,
    /// Sign of the ray component normal to the hit face.
    pub step_sign: i64,
    pub semantic: u16,
}

/// Grid DDA along `origin + t * dir` (t in the same units as `dir`'s length).
/// Returns the first occupied cell with the entering parameter `t`.
pub fn cast_ray(map: &GridMap, ox: f64, oy: f64, dx: f64, dy: f64, t_max: f64) -> Option<RayHit> {
    let cs = map.cell_size();
    let (px, py) = (ox / cs, oy / cs);
    let mut ci = px.floor() as i64;
    let mut cj = py.floor() as i64;
    let step_i: i64 = if dx < 0.0 { -1 } else { 1 };
    let step_j: i64 = if dy < 0.0 { -1 } else { 1 };
    let inv_dx = if dx != 0.0 { (cs / dx).abs() } else { f64::INFINITY };
    let inv_dy = if dy != 0.0 { (cs / dy).abs() } else { f64::INFINITY };
    let mut side_i = if dx < 0.0 {
        (px - ci as f64) * inv_dx
    } else {
        (ci as f64 + 1.0 - px) * inv_dx
    };
    let mut side_j = if dy < 0.0 {
        (py - cj as f64) * inv_dy
    } else {
        (cj as f64 + 1.0 - py) * inv_dy
    };
    if map.is_occupied(ci, cj) {
        return Some(RayHit {
            perp: 0.0,
            cell: (ci, cj),
            x_side: true,
            step_sign: step_i,
            semantic: map.semantic_at(ci, cj),
        });
    }
    let limit = (map.width() + map.height()) as i64 * 2 + 4;
    for _ in 0..limit {
        let (t, x_side) = if side_i < side_j {
            let t = side_i;
            side_i += inv_dx;
            ci += step_i;
            (t, true)
        } else {
            let t = side_j;
            side_j += inv_dy;
            cj += step_j;
            (t, false)
        };
        if t > t_max {
            return None;
        }
        if map.is_occupied(ci, cj) {
            return Some(RayHit {
                perp: t,
                cell: (ci, cj),
                x_side,
                step_sign: if x_side { step_i } else { step_j },
                semantic: map.semantic_at(ci, cj),
            });
        }
    }
    None
}

fn wall_color(map: &GridMap, hit: &RayHit) -> [u8; 3] {
    let (i, j) = hit.cell;
    let (line, along) = if hit.x_side { (i, j) } else { (j, i) };
    let face = (u64::from(hit.x_side) << 1) | u64::from(hit.step_sign > 0);
    let key = hash_str(map.scene_id())
        ^ (face.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        ^ ((line as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        ^ (((along.div_euclid(PANEL_CELLS)) as u64).wrapping_mul(0x1656_67B1_9E37_79F9));
    let mixed = crate::rng::derive_seed(key, 0x5741_4c4c);
    WALL_PALETTE[(mixed % WALL_PALETTE.len() as u64) as usize]
}

fn hit_color_and_height(map: &GridMap, hit: &RayHit) -> ([u8; 3], f64) {
    let (base, height) = if hit.semantic >= FIRST_INSTANCE_ID {
        match map.instance(hit.semantic) {
            Some(obj) => (CATEGORY_PALETTE[obj.category.index()], obj.category.height_m()),
            None => (WALL_PALETTE[0], WALL_HEIGHT),
        }
    } else {
        (wall_color(map, hit), WALL_HEIGHT)
    };
    let shade = if hit.x_side { 1.0 } else { 0.85 };
    let c = [
        (f64::from(base[0]) * shade).round() as u8,
        (f64::from(base[1]) * shade).round() as u8,
        (f64::from(base[2]) * shade).round() as u8,
    ];
    (c, height)
}

fn gradient(base: [f64; 3], dist: f64) -> [u8; 3] {
    let s = 0.45 + 0.55 / (1.0 + 0.35 * dist);
    [
        (base[0] * s).round() as u8,
        (base[1] * s).round() as u8,
        (base[2] * s).round() as u8,
    ]
}

/// Render the egocentric frame for `pose`.
pub fn render(map: &GridMap, pose: &Pose, intrinsics: &CameraIntrinsics) -> Result<Frame> {
    intrinsics.validate()?;
    map.validate_pose(pose, DEFAULT_AGENT_RADIUS)?;
    Ok(render_unchecked(map, pose, intrinsics))
}

pub(crate) fn render_unchecked(map: &GridMap, pose: &Pose, intr: &CameraIntrinsics) -> Frame {
    let (w, h) = (intr.width, intr.height);
    let mut rgb = vec![0u8; w * h * 3];
    let mut depth = vec![0f32; w * h];
    let f = intr.focal();
    let horizon = intr.horizon(pose.pitch);
    let theta = normalize_heading(pose.heading).to_radians();
    let (fx, fy) = (theta.cos(), theta.sin());
    let (lx, ly) = (-fy, fx);
    let max_d = intr.max_depth;
    let clamp_depth = |d: f64| -> f32 { d.clamp(1e-3, max_d) as f32 };

    for col in 0..w {
        let s = intr.column_offset(col);
        let (dx, dy) = (fx + s * lx, fy + s * ly);
        let hit = cast_ray(map, pose.x, pose.y, dx, dy, f64::INFINITY);
        let (color, top, bottom, perp) = match hit {
            Some(hit) => {
                let (color, obj_h) = hit_color_and_height(map, &hit);
                let perp = hit.perp.max(1e-6);
                let top = horizon - f * (obj_h - CAMERA_HEIGHT) / perp;
                let bottom = horizon + f * CAMERA_HEIGHT / perp;
                (color, top, bottom, perp)
            }
            None => ([0, 0, 0], horizon, horizon, max_d),
        };
        for row in 0..h {
            let v = row as f64 + 0.5;
            let k = row * w + col;
            let (c, d) = if v >= top && v < bottom {
                (color, perp)
            } else if v >= bottom {
                let d = f * CAMERA_HEIGHT / (v - horizon);
                (gradient(FLOOR_BASE, d), d)
            } else {
                let d = f * (CEILING_HEIGHT - CAMERA_HEIGHT) / (horizon - v);
                (gradient(CEILING_BASE, d), d)
            };
            rgb[k * 3..k * 3 + 3].copy_from_slice(&c);
            depth[k] = clamp_depth(d);
        }
    }
    Frame {
        width: w,
        height: h,
        rgb,
        depth,
    }
}

/// Whether any footprint cell of `instance_id` is seen by an unoccluded ray
/// inside the horizontal field of view and the vertical image extent.
pub fn visible(map: &GridMap, pose: &Pose, intrinsics: &CameraIntrinsics, instance_id: u16) -> bool {
    let Some(obj) = map.instance(instance_id) else {
        return false;
    };
    let theta = normalize_heading(pose.heading).to_radians();
    let (fx, fy) = (theta.cos(), theta.sin());
    let half = intrinsics.h_fov.to_radians() / 2.0;
    let f = intrinsics.focal();
    let horizon = intrinsics.horizon(pose.pitch);
    let h = intrinsics.height as f64;
    let obj_h = obj.category.height_m();
    obj.footprint.iter().any(|&cell| {
        let c = map.cell_center(cell);
        let (vx, vy) = (c.x - pose.x, c.y - pose.y);
        let forward = vx * fx + vy * fy;
        let lateral = -vx * fy + vy * fx;
        if forward <= 0.0 || lateral.atan2(forward).abs() > half {
            return false;
        }
        if forward > intrinsics.max_depth {
            return false;
        }
        let top = horizon - f * (obj_h - CAMERA_HEIGHT) / forward;
        let bottom = horizon + f * CAMERA_HEIGHT / forward;
        if bottom <= 0.0 || top >= h {
            return false;
        }
        let dist = vx.hypot(vy);
        match cast_ray(map, pose.x, pose.y, vx / dist, vy / dist, dist + map.cell_size()) {
            Some(hit) => hit.semantic == instance_id,
            None => false,
        }
    })
}
