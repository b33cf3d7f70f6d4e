//! Versioned text format for scenes.
//!
//! ```text
//! robustnav-scene v1 scene_id=<id> cell_size=<f64> width=<W> height=<H> seed=<u64>
//! <H grid rows of W symbols, row j = 0 first>
//! objects <N>
//! <instance_id> <Category> <center_x> <center_y>      (N lines)
//! ```
//!
//! Grid symbols: `.` floor, `#` wall, and one letter per object instance
//! (`a`..`z` for ids 2..27, `A`..`Z` for ids 28..53). Floats are written in
//! shortest round-trip form, so `load(save(m)) == m`.

use std::fmt::Write as _;

use super::grid::{Category, GridMap, ObjectInstance, Point, FIRST_INSTANCE_ID, MAX_INSTANCE_ID, SEMANTIC_FLOOR, SEMANTIC_WALL};
use crate::error::{Error, Result};

pub const SCENE_MAGIC: &str = "robustnav-scene";
pub const SCENE_VERSION: &str = "v1";

fn symbol_for(id: u16) -> char {
    match id {
        SEMANTIC_FLOOR => '.',
        SEMANTIC_WALL => '#',
        id if id < FIRST_INSTANCE_ID + 26 => (b'a' + (id - FIRST_INSTANCE_ID) as u8) as char,
        id => (b'A' + (id - FIRST_INSTANCE_ID - 26) as u8) as char,
    }
}

fn id_for(symbol: u8) -> Option<u16> {
    match symbol {
        b'.' => Some(SEMANTIC_FLOOR),
        b'#' => Some(SEMANTIC_WALL),
        b'a'..=b'z' => Some(FIRST_INSTANCE_ID + u16::from(symbol - b'a')),
        b'A'..=b'Z' => Some(FIRST_INSTANCE_ID + 26 + u16::from(symbol - b'A')),
        _ => None,
    }
}

pub fn save_scene(map: &GridMap) -> Vec<u8> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{SCENE_MAGIC} {SCENE_VERSION} scene_id={} cell_size={} width={} height={} seed={}",
        map.scene_id(),
        map.cell_size(),
        map.width(),
        map.height(),
        map.seed()
    );
    for j in 0..map.height() {
        for i in 0..map.width() {
            out.push(symbol_for(map.semantic()[map.index(i, j)]));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "objects {}", map.objects().len());
    for o in map.objects() {
        let _ = writeln!(out, "{} {} {} {}", o.instance_id, o.category, o.center.x, o.center.y);
    }
    out.into_bytes()
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    /// Next line and its starting byte offset.
    fn next_line(&mut self) -> Option<(usize, &'a [u8])> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        let end = self.bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(self.bytes.len(), |k| start + k);
        self.pos = end + 1;
        let mut line = &self.bytes[start..end];
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        Some((start, line))
    }
}

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn as_str(offset: usize, line: &[u8]) -> Result<&str> {
    std::str::from_utf8(line).map_err(|e| perr(offset + e.valid_up_to(), "invalid utf-8"))
}

pub fn load_scene(bytes: &[u8]) -> Result<GridMap> {
    let mut lines = Lines { bytes, pos: 0 };
    let (off, header) = lines.next_line().ok_or_else(|| perr(0, "missing section: header"))?;
    let header = as_str(off, header)?;
    let mut tokens = header.split(' ');
    if tokens.next() != Some(SCENE_MAGIC) {
        return Err(perr(off, format!("malformed header: expected {SCENE_MAGIC:?}")));
    }
    match tokens.next() {
        Some(SCENE_VERSION) => {}
        Some(v) => return Err(perr(off + SCENE_MAGIC.len() + 1, format!("unsupported version {v:?}"))),
        None => return Err(perr(off, "malformed header: missing version")),
    }
    let mut scene_id = None;
    let mut cell_size = None;
    let mut width = None;
    let mut height = None;
    let mut seed = None;
    let mut col = SCENE_MAGIC.len() + SCENE_VERSION.len() + 2;
    for tok in tokens {
        let at = off + col;
        col += tok.len() + 1;
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| perr(at, format!("malformed header field {tok:?}")))?;
        let bad = |what: &str| perr(at, format!("malformed header: bad {what} {v:?}"));
        match k {
            "scene_id" => scene_id = Some(v.to_string()),
            "cell_size" => cell_size = Some(v.parse::<f64>().map_err(|_| bad("cell_size"))?),
            "width" => width = Some(v.parse::<usize>().map_err(|_| bad("width"))?),
            "height" => height = Some(v.parse::<usize>().map_err(|_| bad("height"))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad("seed"))?),
            _ => return Err(perr(at, format!("malformed header: unknown field {k:?}"))),
        }
    }
    let missing = |f: &str| perr(off, format!("malformed header: missing {f}"));
    let scene_id = scene_id.ok_or_else(|| missing("scene_id"))?;
    let cell_size = cell_size.ok_or_else(|| missing("cell_size"))?;
    let width = width.ok_or_else(|| missing("width"))?;
    let height = height.ok_or_else(|| missing("height"))?;
    let seed = seed.ok_or_else(|| missing("seed"))?;
    if width == 0 || height == 0 || width.checked_mul(height).is_none() {
        return Err(perr(off, format!("inconsistent dimensions {width}x{height}")));
    }

    let mut semantic = Vec::with_capacity(width * height);
    for j in 0..height {
        let (roff, row) = lines.next_line().ok_or_else(|| {
            perr(bytes.len(), format!("missing section: grid (expected {height} rows, found {j})"))
        })?;
        if row.len() != width {
            return Err(perr(
                roff,
                format!("inconsistent dimensions: grid row {j} has {} symbols, expected {width}", row.len()),
            ));
        }
        for (i, &b) in row.iter().enumerate() {
            let id = id_for(b).ok_or_else(|| perr(roff + i, format!("unknown grid symbol {:?}", b as char)))?;
            semantic.push(id);
        }
    }

    let (ooff, oline) = lines
        .next_line()
        .ok_or_else(|| perr(bytes.len(), "missing section: objects"))?;
    let oline = as_str(ooff, oline)?;
    let count = oline
        .strip_prefix("objects ")
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| perr(ooff, format!("expected `objects <N>`, got {oline:?}")))?;
    let mut objects = Vec::with_capacity(count);
    for k in 0..count {
        let (loff, line) = lines.next_line().ok_or_else(|| {
            perr(bytes.len(), format!("missing section: objects (expected {count} records, found {k})"))
        })?;
        let line = as_str(loff, line)?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 {
            return Err(perr(loff, format!("object record needs 4 fields, got {}", fields.len())));
        }
        let instance_id: u16 = fields[0]
            .parse()
            .map_err(|_| perr(loff, format!("bad instance id {:?}", fields[0])))?;
        if !(FIRST_INSTANCE_ID..=MAX_INSTANCE_ID).contains(&instance_id) {
            return Err(perr(loff, format!("instance id {instance_id} out of range")));
        }
        let cat_off = loff + fields[0].len() + 1;
        let category: Category = fields[1]
            .parse()
            .map_err(|_| perr(cat_off, format!("unknown category {:?}", fields[1])))?;
        let cx: f64 = fields[2].parse().map_err(|_| perr(loff, "bad center x"))?;
        let cy: f64 = fields[3].parse().map_err(|_| perr(loff, "bad center y"))?;
        let footprint: Vec<usize> = semantic
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == instance_id)
            .map(|(c, _)| c)
            .collect();
        if footprint.is_empty() {
            return Err(perr(loff, format!("instance {instance_id} has no grid cells")));
        }
        objects.push(ObjectInstance {
            category,
            instance_id,
            footprint,
            center: Point::new(cx, cy),
        });
    }
    if let Some(&s) = semantic
        .iter()
        .find(|&&s| s >= FIRST_INSTANCE_ID && !objects.iter().any(|o| o.instance_id == s))
    {
        return Err(perr(
            ooff,
            format!("missing section: objects (no record for instance {:?})", symbol_for(s)),
        ));
    }
    while let Some((toff, rest)) = lines.next_line() {
        if !rest.is_empty() {
            return Err(perr(toff, "trailing data after object records"));
        }
    }
    GridMap::from_parts(scene_id, seed, cell_size, width, height, semantic, objects).map_err(|e| match e {
        Error::InvalidMap(m) => perr(off, m),
        other => other,
    })
}
