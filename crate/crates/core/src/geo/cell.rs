//! Equirectangular quadtree cells with Morton (Z-order) codes.
//!
//! A level-`L` cell splits longitude [-180, 180] and latitude [-90, 90] into
//! `2^L` equal steps each. Points are quantized once at the finest level and
//! shifted down, so a point's level-`L` cell is always the parent of its
//! level-`L+1` cell.

use serde::{Deserialize, Serialize};

use super::{BBox, GeoError, GeoPoint};

pub const MAX_CELL_LEVEL: u8 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    level: u8,
    code: u64,
}

/// Spreads the low 32 bits of `v` onto the even bit positions.
#[inline]
fn part1by1(v: u32) -> u64 {
    let mut x = v as u64;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

#[inline]
fn compact1by1(v: u64) -> u32 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x >> 4)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x >> 8)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x >> 16)) & 0x0000_0000_FFFF_FFFF;
    x as u32
}

fn quantize_axis(value: f64, min: f64, span: f64) -> u32 {
    let steps = (1u64 << MAX_CELL_LEVEL) as f64;
    let q = ((value - min) / span * steps).floor();
    q.clamp(0.0, steps - 1.0) as u32
}

/// Quantized (x, y) of a point at `level`; x counts longitude steps.
fn quantize(lon: f64, lat: f64, level: u8) -> (u32, u32) {
    let shift = MAX_CELL_LEVEL - level;
    (
        quantize_axis(lon, -180.0, 360.0) >> shift,
        quantize_axis(lat, -90.0, 180.0) >> shift,
    )
}

pub fn cell_id(p: GeoPoint, level: u8) -> Result<CellId, GeoError> {
    if level > MAX_CELL_LEVEL {
        return Err(GeoError::InvalidLevel(level));
    }
    let (x, y) = quantize(p.lon(), p.lat(), level);
    Ok(CellId::from_xy(level, x, y))
}

impl CellId {
    /// Panics if `level` exceeds [`MAX_CELL_LEVEL`] or the coordinates do not fit it.
    pub fn from_xy(level: u8, x: u32, y: u32) -> Self {
        assert!(level <= MAX_CELL_LEVEL);
        let side = 1u64 << level;
        assert!(
            (x as u64) < side && (y as u64) < side,
            "cell coordinate out of range"
        );
        CellId {
            level,
            code: part1by1(x) | (part1by1(y) << 1),
        }
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn xy(&self) -> (u32, u32) {
        (compact1by1(self.code), compact1by1(self.code >> 1))
    }

    pub fn parent(&self) -> Option<CellId> {
        (self.level > 0).then(|| CellId {
            level: self.level - 1,
            code: self.code >> 2,
        })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        cell_id(p, self.level).map(|c| c == *self).unwrap_or(false)
    }

    /// Face- and corner-adjacent cells at the same level. The domain does not
    /// wrap, so border cells have 5 neighbors and corner cells 3.
    pub fn neighbors(&self) -> Vec<CellId> {
        let (x, y) = self.xy();
        let side = 1i64 << self.level;
        let mut out = Vec::with_capacity(8);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if (0..side).contains(&nx) && (0..side).contains(&ny) {
                    out.push(CellId::from_xy(self.level, nx as u32, ny as u32));
                }
            }
        }
        out
    }

    /// Lon/lat extent of the cell.
    pub fn bounds(&self) -> BBox {
        let (x, y) = self.xy();
        let n = (1u64 << self.level) as f64;
        BBox {
            min_lon: -180.0 + 360.0 * x as f64 / n,
            min_lat: -90.0 + 180.0 * y as f64 / n,
            max_lon: -180.0 + 360.0 * (x as f64 + 1.0) / n,
            max_lat: -90.0 + 180.0 * (y as f64 + 1.0) / n,
        }
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{:x}", self.level, self.code)
    }
}

/// Every cell at `level` overlapping `bbox`.
pub fn cells_in_bbox(bbox: &BBox, level: u8) -> impl Iterator<Item = CellId> {
    let level = level.min(MAX_CELL_LEVEL);
    let (x0, y0) = quantize(bbox.min_lon, bbox.min_lat, level);
    let (x1, y1) = quantize(bbox.max_lon, bbox.max_lat, level);
    (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| CellId::from_xy(level, x, y)))
}
