//! Seeded visual corruptions applied to the RGB channel of a frame.
//!
//! A [`CorruptionStack`] is bound once per episode. Binding samples the
//! lens-attached state (spatter mask, crack mask, motion-blur angle) so it
//! stays fixed in image space for the whole episode. Speckle noise is drawn
//! fresh per frame from the episode seed and the frame index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::CameraIntrinsics;
use crate::rng::{derive_seed, rng_from, stream, SimRng};

pub const SPECKLE_SIGMA: [f64; 5] = [0.10, 0.18, 0.26, 0.34, 0.45];
pub const DEFOCUS_RADIUS: [usize; 5] = [2, 3, 5, 7, 9];
pub const MOTION_LENGTH: [usize; 5] = [5, 9, 13, 17, 21];
pub const LOW_LIGHT: [(f64, f64); 5] = [(1.1, 0.60), (1.2, 0.45), (1.3, 0.33), (1.4, 0.24), (1.5, 0.18)];
pub const SPATTER_FRACTION: [f64; 5] = [0.05, 0.10, 0.18, 0.28, 0.40];
/// Field of view used by the LowerFOV corruption, in degrees.
pub const LOWER_FOV_DEG: f64 = 39.5;

const MUD: [u8; 3] = [52, 40, 28];
const DROPLET: [f64; 3] = [185.0, 195.0, 205.0];
const DROPLET_ALPHA: f64 = 0.45;
const CRACK_CORE: [u8; 3] = [22, 22, 24];
const CRACK_HALO_GAIN: f64 = 1.15;
const CRACK_HALO_PX: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisKind {
    Spatter,
    MotionBlur,
    DefocusBlur,
    SpeckleNoise,
    LowLighting,
    LowerFov,
    CameraCrack,
}

impl VisKind {
    pub const ALL: [VisKind; 7] = [
        VisKind::Spatter,
        VisKind::MotionBlur,
        VisKind::DefocusBlur,
        VisKind::SpeckleNoise,
        VisKind::LowLighting,
        VisKind::LowerFov,
        VisKind::CameraCrack,
    ];

    pub fn has_severity(self) -> bool {
        !matches!(self, VisKind::LowerFov | VisKind::CameraCrack)
    }

    pub fn name(self) -> &'static str {
        match self {
            VisKind::Spatter => "spatter",
            VisKind::MotionBlur => "motion_blur",
            VisKind::DefocusBlur => "defocus_blur",
            VisKind::SpeckleNoise => "speckle_noise",
            VisKind::LowLighting => "low_lighting",
            VisKind::LowerFov => "lower_fov",
            VisKind::CameraCrack => "camera_crack",
        }
    }
}

impl fmt::Display for VisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        let alias = match norm.as_str() {
            "speckle" => Some(VisKind::SpeckleNoise),
            "defocus" => Some(VisKind::DefocusBlur),
            "lowlight" => Some(VisKind::LowLighting),
            "crack" => Some(VisKind::CameraCrack),
            _ => None,
        };
        alias
            .or_else(|| VisKind::ALL.into_iter().find(|k| k.name().replace('_', "") == norm))
            .ok_or_else(|| Error::InvalidCorruption(format!("unknown visual corruption {s:?}")))
    }
}

/// One visual corruption with its severity (1..=5) and mask seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisCorruption {
    pub kind: VisKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<u8>,
    #[serde(default)]
    pub seed: u64,
}

impl VisCorruption {
    pub fn new(kind: VisKind, severity: Option<u8>, seed: u64) -> Result<Self> {
        let c = Self { kind, severity, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.has_severity(), self.severity) {
            (true, Some(1..=5)) | (false, None) => Ok(()),
            (true, Some(s)) => Err(Error::InvalidCorruption(format!("{} severity {s} not in 1..=5", self.kind))),
            (true, None) => Err(Error::InvalidCorruption(format!("{} requires a severity", self.kind))),
            (false, Some(_)) => Err(Error::InvalidCorruption(format!("{} takes no severity", self.kind))),
        }
    }

    /// Short label, e.g. `defocus_blur:3` or `camera_crack`.
    pub fn label(&self) -> String {
        match self.severity {
            Some(s) => format!("{}:{s}", self.kind),
            None => self.kind.to_string(),
        }
    }

    fn level(&self) -> usize {
        usize::from(self.severity.unwrap_or(1).clamp(1, 5)) - 1
    }
}

impl FromStr for VisCorruption {
    type Err = Error;

    /// `kind`, `kind:severity` or `kind:severity@seed`.
    fn from_str(s: &str) -> Result<Self> {
        let (body, seed) = match s.split_once('@') {
            Some((b, seed)) => (
                b,
                seed.parse()
                    .map_err(|_| Error::InvalidCorruption(format!("bad mask seed in {s:?}")))?,
            ),
            None => (s, 0),
        };
        let (kind, severity) = match body.split_once(':') {
            Some((k, sev)) => (
                k,
                Some(sev.parse().map_err(|_| Error::InvalidCorruption(format!("bad severity in {s:?}")))?),
            ),
            None => (body, None),
        };
        VisCorruption::new(kind.trim().parse()?, severity, seed)
    }
}

/// Ordered visual corruptions applied left to right.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionStack {
    pub layers: Vec<VisCorruption>,
}

impl CorruptionStack {
    pub fn new(layers: Vec<VisCorruption>) -> Result<Self> {
        for l in &layers {
            l.validate()?;
        }
        Ok(Self { layers })
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// `clean` for an empty stack, otherwise labels joined by `+`.
    pub fn label(&self) -> String {
        if self.layers.is_empty() {
            "clean".into()
        } else {
            self.layers.iter().map(VisCorruption::label).collect::<Vec<_>>().join("+")
        }
    }

    /// Camera intrinsics after any renderer-side corruption.
    pub fn intrinsics(&self, base: &CameraIntrinsics) -> CameraIntrinsics {
        let mut out = *base;
        if self.layers.iter().any(|l| l.kind == VisKind::LowerFov) {
            out.h_fov = LOWER_FOV_DEG;
        }
        out
    }

    /// Parse `clean` or layers joined by `+`, e.g. `speckle:3+camera_crack`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "clean" {
            return Ok(Self::default());
        }
        Self::new(s.split('+').map(str::parse).collect::<Result<_>>()?)
    }

    /// Sample per-episode state for frames of `width` x `height`.
    pub fn bind(&self, episode_seed: u64, width: usize, height: usize) -> BoundStack {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let seed = derive_seed(derive_seed(episode_seed, c.seed), k as u64);
                bind_layer(c, seed, width, height)
            })
            .collect();
        BoundStack { width, height, layers }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BoundLayer {
    Speckle { sigma: f64, seed: u64 },
    Convolve(Kernel),
    Lut(Box<[u8; 256]>),
    /// Per-pixel: 0 untouched, 1 droplet tint, 2 mud.
    Spatter(Vec<u8>),
    /// Per-pixel: 0 untouched, 1 halo, 2 core.
    Crack(Vec<u8>),
    Identity,
}

/// Normalized convolution kernel as (dx, dy, weight) taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    taps: Vec<(i64, i64, f32)>,
    /// Row spans `(dy, x0, x1)` for disk kernels, evaluated with prefix sums.
    spans: Option<Vec<(i64, i64, i64)>>,
}

impl Kernel {
    pub fn disk(radius: usize) -> Self {
        let r = radius as i64;
        let mut spans = Vec::new();
        let mut taps = Vec::new();
        for dy in -r..=r {
            let half = ((r * r - dy * dy) as f64).sqrt().floor() as i64;
            spans.push((dy, -half, half));
            for dx in -half..=half {
                taps.push((dx, dy, 1.0f32));
            }
        }
        let n = taps.len() as f32;
        for t in &mut taps {
            t.2 /= n;
        }
        Self { taps, spans: Some(spans) }
    }

    /// Line of `length` pixels through the center at `angle_deg`.
    pub fn line(length: usize, angle_deg: f64) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let half = (length as f64 - 1.0) / 2.0;
        let mut acc: Vec<(i64, i64, f32)> = Vec::new();
        for k in 0..length {
            let t = k as f64 - half;
            let (dx, dy) = ((t * c).round() as i64, (-t * s).round() as i64);
            match acc.iter_mut().find(|(x, y, _)| *x == dx && *y == dy) {
                Some(e) => e.2 += 1.0,
                None => acc.push((dx, dy, 1.0)),
            }
        }
        let total: f32 = acc.iter().map(|t| t.2).sum();
        for t in &mut acc {
            t.2 /= total;
        }
        Self { taps: acc, spans: None }
    }

    pub fn weight_sum(&self) -> f64 {
        self.taps.iter().map(|t| f64::from(t.2)).sum()
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    /// Convolve an RGB image with clamp-to-edge borders.
    pub fn apply(&self, w: usize, h: usize, rgb: &[u8]) -> Vec<u8> {
        match &self.spans {
            Some(spans) => convolve_spans(spans, self.taps.len(), w, h, rgb),
            None => convolve_taps(&self.taps, w, h, rgb),
        }
    }
}

fn convolve_taps(taps: &[(i64, i64, f32)], w: usize, h: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; rgb.len()];
    let (wi, hi) = (w as i64, h as i64);
    for y in 0..hi {
        for x in 0..wi {
            let mut acc = [0f32; 3];
            for &(dx, dy, wt) in taps {
                let sx = (x + dx).clamp(0, wi - 1) as usize;
                let sy = (y + dy).clamp(0, hi - 1) as usize;
                let k = (sy * w + sx) * 3;
                acc[0] += wt * f32::from(rgb[k]);
                acc[1] += wt * f32::from(rgb[k + 1]);
                acc[2] += wt * f32::from(rgb[k + 2]);
            }
            let k = (y as usize * w + x as usize) * 3;
            for c in 0..3 {
                out[k + c] = acc[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

fn convolve_spans(spans: &[(i64, i64, i64)], count: usize, w: usize, h: usize, rgb: &[u8]) -> Vec<u8> {
    let max_dx = spans.iter().map(|s| s.2).max().unwrap_or(0);
    let pad = max_dx as usize;
    let pw = w + 2 * pad;
    // Row prefix sums over a clamp-padded row: prefix[y][c][k] = sum of padded[0..k].
    let mut prefix = vec![0u32; h * 3 * (pw + 1)];
    for y in 0..h {
        for c in 0..3 {
            let base = (y * 3 + c) * (pw + 1);
            let mut run = 0u32;
            for k in 0..pw {
                let sx = (k as i64 - pad as i64).clamp(0, w as i64 - 1) as usize;
                run += u32::from(rgb[(y * w + sx) * 3 + c]);
                prefix[base + k + 1] = run;
            }
        }
    }
    let inv = 1.0 / count as f64;
    let mut out = vec![0u8; rgb.len()];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = [0u64; 3];
            for &(dy, x0, x1) in spans {
                let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                let a = (x + x0 + pad as i64) as usize;
                let b = (x + x1 + pad as i64) as usize + 1;
                for c in 0..3 {
                    let base = (sy * 3 + c) * (pw + 1);
                    acc[c] += u64::from(prefix[base + b] - prefix[base + a]);
                }
            }
            let k = (y as usize * w + x as usize) * 3;
            for c in 0..3 {
                out[k + c] = (acc[c] as f64 * inv).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

fn bind_layer(c: &VisCorruption, seed: u64, w: usize, h: usize) -> BoundLayer {
    let lvl = c.level();
    match c.kind {
        VisKind::SpeckleNoise => BoundLayer::Speckle {
            sigma: SPECKLE_SIGMA[lvl],
            seed: derive_seed(seed, stream::SPECKLE),
        },
        VisKind::DefocusBlur => BoundLayer::Convolve(Kernel::disk(DEFOCUS_RADIUS[lvl])),
        VisKind::MotionBlur => {
            let mut rng = rng_from(derive_seed(seed, stream::BLUR));
            let angle = rng.random_range(0.0..180.0);
            BoundLayer::Convolve(Kernel::line(MOTION_LENGTH[lvl], angle))
        }
        VisKind::LowLighting => {
            let (gamma, gain) = LOW_LIGHT[lvl];
            let mut lut = Box::new([0u8; 256]);
            for (v, out) in lut.iter_mut().enumerate() {
                *out = (255.0 * (v as f64 / 255.0).powf(gamma) * gain).round().clamp(0.0, 255.0) as u8;
            }
            BoundLayer::Lut(lut)
        }
        VisKind::Spatter => BoundLayer::Spatter(spatter_mask(
            &mut rng_from(derive_seed(seed, stream::SPATTER)),
            w,
            h,
            SPATTER_FRACTION[lvl],
        )),
        VisKind::CameraCrack => BoundLayer::Crack(crack_mask(&mut rng_from(derive_seed(seed, stream::CRACK)), w, h)),
        VisKind::LowerFov => BoundLayer::Identity,
    }
}

/// Blob mask covering exactly `round(fraction * w * h)` pixels.
fn spatter_mask(rng: &mut SimRng, w: usize, h: usize, fraction: f64) -> Vec<u8> {
    let n = w * h;
    let target = (fraction * n as f64).round() as usize;
    let mut mask = vec![0u8; n];
    let mut covered = 0;
    let max_r = (w.min(h) as f64 / 18.0).max(2.0);
    while covered < target {
        let kind = if rng.random_bool(0.5) { 2 } else { 1 };
        let (mut x, mut y) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let steps = rng.random_range(4..16);
        for _ in 0..steps {
            let r = rng.random_range(1.5..max_r);
            let ri = r.ceil() as i64;
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    if (dx * dx + dy * dy) as f64 > r * r {
                        continue;
                    }
                    let (px, py) = (x as i64 + dx, y as i64 + dy);
                    if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                        continue;
                    }
                    let k = py as usize * w + px as usize;
                    if mask[k] == 0 {
                        mask[k] = kind;
                        covered += 1;
                        if covered == target {
                            return mask;
                        }
                    }
                }
            }
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let step = rng.random_range(0.5..1.5) * r;
            x = (x + step * a.cos()).clamp(0.0, w as f64 - 1.0);
            y = (y + step * a.sin()).clamp(0.0, h as f64 - 1.0);
        }
    }
    mask
}

/// Polylines radiating from an impact point: 2 marks core pixels, 1 the halo.
fn crack_mask(rng: &mut SimRng, w: usize, h: usize) -> Vec<u8> {
    let (wf, hf) = (w as f64, h as f64);
    let mut mask = vec![0u8; w * h];
    let ix = rng.random_range(0.2 * wf..0.8 * wf);
    let iy = rng.random_range(0.2 * hf..0.8 * hf);
    let lines = rng.random_range(3..=7);
    let diag = wf.hypot(hf);
    let stamp = |mask: &mut Vec<u8>, x: f64, y: f64, core: i64| {
        let reach = core + CRACK_HALO_PX;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (px, py) = (x.round() as i64 + dx, y.round() as i64 + dy);
                if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                    continue;
                }
                let k = py as usize * w + px as usize;
                let cheb = dx.abs().max(dy.abs());
                let v = if cheb < core { 2 } else { 1 };
                mask[k] = mask[k].max(v);
            }
        }
    };
    for _ in 0..lines {
        let core = rng.random_range(1..=3);
        let mut angle = rng.random_range(0.0..std::f64::consts::TAU);
        let budget = rng.random_range(0.3..0.9) * diag;
        let (mut x, mut y) = (ix, iy);
        let mut travelled = 0.0;
        while travelled < budget && x >= 0.0 && y >= 0.0 && x < wf && y < hf {
            let seg: f64 = rng.random_range(6.0..18.0);
            let steps = seg.ceil() as usize;
            for _ in 0..steps {
                stamp(&mut mask, x, y, core);
                x += angle.cos();
                y += angle.sin();
            }
            travelled += seg;
            angle += rng.random_range(-0.45..0.45);
        }
    }
    mask
}

/// Per-episode corruption state.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundStack {
    width: usize,
    height: usize,
    layers: Vec<BoundLayer>,
}

impl BoundStack {
    pub fn is_identity(&self) -> bool {
        self.layers.iter().all(|l| matches!(l, BoundLayer::Identity))
    }

    /// Fraction of pixels touched by the spatter layer, if any.
    pub fn spatter_fraction(&self) -> Option<f64> {
        self.layers.iter().find_map(|l| match l {
            BoundLayer::Spatter(m) => Some(m.iter().filter(|v| **v != 0).count() as f64 / m.len() as f64),
            _ => None,
        })
    }

    /// Crack mask (0 untouched, 1 halo, 2 core), if any.
    pub fn crack_mask(&self) -> Option<&[u8]> {
        self.layers.iter().find_map(|l| match l {
            BoundLayer::Crack(m) => Some(m.as_slice()),
            _ => None,
        })
    }

    /// Corrupt one RGB frame. `frame_index` selects the per-frame noise draw.
    pub fn apply(&self, rgb: &[u8], width: usize, height: usize, frame_index: u64) -> Result<Vec<u8>> {
        if width != self.width || height != self.height || rgb.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width,
                height,
            });
        }
        let mut img = rgb.to_vec();
        for layer in &self.layers {
            match layer {
                BoundLayer::Identity => {}
                BoundLayer::Lut(lut) => {
                    for v in &mut img {
                        *v = lut[usize::from(*v)];
                    }
                }
                BoundLayer::Convolve(k) => img = k.apply(width, height, &img),
                BoundLayer::Speckle { sigma, seed } => {
                    let mut rng = rng_from(derive_seed(*seed, frame_index));
                    let normal = Normal::new(0.0, *sigma).expect("finite sigma");
                    for v in &mut img {
                        let eps: f64 = normal.sample(&mut rng);
                        let x = f64::from(*v);
                        *v = (x + x * eps).round().clamp(0.0, 255.0) as u8;
                    }
                }
                BoundLayer::Spatter(mask) => {
                    for (p, m) in mask.iter().enumerate() {
                        let px = &mut img[p * 3..p * 3 + 3];
                        match m {
                            2 => px.copy_from_slice(&MUD),
                            1 => {
                                for c in 0..3 {
                                    let v = (1.0 - DROPLET_ALPHA) * f64::from(px[c]) + DROPLET_ALPHA * DROPLET[c];
                                    px[c] = v.round().clamp(0.0, 255.0) as u8;
                                }
                            }
                            _ => {}
                        }
                    }
                }
                BoundLayer::Crack(mask) => {
                    for (p, m) in mask.iter().enumerate() {
                        let px = &mut img[p * 3..p * 3 + 3];
                        match m {
                            2 => px.copy_from_slice(&CRACK_CORE),
                            1 => {
                                for v in px.iter_mut() {
                                    *v = (f64::from(*v) * CRACK_HALO_GAIN).round().min(255.0) as u8;
                                }
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        Ok(img)
    }
}

/// Mean absolute difference per channel value.
pub fn distortion(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected_width: a.len(),
            expected_height: 1,
            width: b.len(),
            height: 1,
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: u64 = a.iter().zip(b).map(|(x, y)| u64::from(x.abs_diff(*y))).sum();
    Ok(sum as f64 / a.len() as f64)
}
