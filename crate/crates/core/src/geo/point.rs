use serde::{Deserialize, Serialize};

use super::{haversine_m, GeoError, LocalFrame};

/// A WGS84 longitude/latitude pair in degrees.
///
/// Construction validates the range, so every `GeoPoint` in circulation is
/// finite with `lon` in [-180, 180] and `lat` in [-90, 90]. Serialized as a
/// GeoJSON position `[lon, lat]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct GeoPoint {
    lon: f64,
    lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if lon.is_finite()
            && lat.is_finite()
            && (-180.0..=180.0).contains(&lon)
            && (-90.0..=90.0).contains(&lat)
        {
            Ok(Self { lon, lat })
        } else {
            Err(GeoError::InvalidCoordinate { lon, lat })
        }
    }

    /// Builds a point from computed coordinates, wrapping longitude and
    /// clamping latitude into range.
    pub(crate) fn normalized(lon: f64, lat: f64) -> Self {
        debug_assert!(lon.is_finite() && lat.is_finite());
        let mut lon = lon;
        if !(-180.0..=180.0).contains(&lon) {
            lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
        }
        Self {
            lon,
            lat: lat.clamp(-90.0, 90.0),
        }
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }
}

impl TryFrom<[f64; 2]> for GeoPoint {
    type Error = GeoError;

    fn try_from(value: [f64; 2]) -> Result<Self, Self::Error> {
        GeoPoint::new(value[0], value[1])
    }
}

impl From<GeoPoint> for [f64; 2] {
    fn from(p: GeoPoint) -> Self {
        [p.lon, p.lat]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeometryKind {
    Point,
    LineString,
    Polygon,
}

impl std::fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeometryKind::Point => "Point",
            GeometryKind::LineString => "LineString",
            GeometryKind::Polygon => "Polygon",
        })
    }
}

/// Point, line string or polygon (outer ring only).
///
/// Line strings carry at least two points; polygon rings are closed
/// (first == last) with at least four points. The serialized form is a
/// GeoJSON geometry object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub enum Geometry {
    Point(GeoPoint),
    LineString(Vec<GeoPoint>),
    Polygon(Vec<GeoPoint>),
}

impl Geometry {
    pub fn line_string(points: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if points.len() < 2 {
            return Err(GeoError::InvalidGeometry(format!(
                "line string needs at least 2 points, got {}",
                points.len()
            )));
        }
        Ok(Geometry::LineString(points))
    }

    pub fn polygon(ring: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if ring.len() < 4 {
            return Err(GeoError::InvalidGeometry(format!(
                "polygon ring needs at least 4 points, got {}",
                ring.len()
            )));
        }
        if ring.first() != ring.last() {
            return Err(GeoError::InvalidGeometry(
                "polygon ring is not closed".into(),
            ));
        }
        Ok(Geometry::Polygon(ring))
    }

    pub fn kind(&self) -> GeometryKind {
        match self {
            Geometry::Point(_) => GeometryKind::Point,
            Geometry::LineString(_) => GeometryKind::LineString,
            Geometry::Polygon(_) => GeometryKind::Polygon,
        }
    }

    pub fn points(&self) -> &[GeoPoint] {
        match self {
            Geometry::Point(p) => std::slice::from_ref(p),
            Geometry::LineString(pts) | Geometry::Polygon(pts) => pts,
        }
    }

    /// Re-checks the structural invariants (used on deserialized data).
    pub fn validate(&self) -> Result<(), GeoError> {
        match self {
            Geometry::Point(_) => Ok(()),
            Geometry::LineString(pts) => Geometry::line_string(pts.clone()).map(|_| ()),
            Geometry::Polygon(pts) => Geometry::polygon(pts.clone()).map(|_| ()),
        }
    }

    /// Representative point: the point itself, the half-length point of a
    /// line string, or the area centroid of a polygon.
    pub fn anchor(&self) -> GeoPoint {
        match self {
            Geometry::Point(p) => *p,
            Geometry::LineString(pts) => line_midpoint(pts),
            Geometry::Polygon(ring) => ring_centroid(ring),
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_points(self.points())
    }

    /// Consecutive vertex pairs; empty for points.
    pub fn segments(&self) -> impl Iterator<Item = (GeoPoint, GeoPoint)> + '_ {
        let pts = match self {
            Geometry::Point(_) => &[][..],
            Geometry::LineString(pts) | Geometry::Polygon(pts) => &pts[..],
        };
        pts.windows(2).map(|w| (w[0], w[1]))
    }
}

fn line_midpoint(pts: &[GeoPoint]) -> GeoPoint {
    let lengths: Vec<f64> = pts.windows(2).map(|w| haversine_m(w[0], w[1])).collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return pts[0];
    }
    let mut remaining = total / 2.0;
    for (w, len) in pts.windows(2).zip(&lengths) {
        if remaining <= *len && *len > 0.0 {
            let t = remaining / len;
            return GeoPoint::normalized(
                w[0].lon() + t * (w[1].lon() - w[0].lon()),
                w[0].lat() + t * (w[1].lat() - w[0].lat()),
            );
        }
        remaining -= len;
    }
    *pts.last().expect("line string has points")
}

fn ring_centroid(ring: &[GeoPoint]) -> GeoPoint {
    let frame = LocalFrame::at(ring[0]);
    let xy: Vec<(f64, f64)> = ring.iter().map(|p| frame.to_xy(*p)).collect();
    let (mut area2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for w in xy.windows(2) {
        let cross = w[0].0 * w[1].1 - w[1].0 * w[0].1;
        area2 += cross;
        cx += (w[0].0 + w[1].0) * cross;
        cy += (w[0].1 + w[1].1) * cross;
    }
    if area2.abs() < 1e-9 {
        // Degenerate ring: fall back to the vertex mean (closing vertex excluded).
        let body = &xy[..xy.len() - 1];
        let n = body.len() as f64;
        let (sx, sy) = body
            .iter()
            .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        return frame.from_xy(sx / n, sy / n);
    }
    frame.from_xy(cx / (3.0 * area2), cy / (3.0 * area2))
}

/// Axis-aligned lon/lat bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn of_points(points: &[GeoPoint]) -> Self {
        let mut b = BBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for p in points {
            b.min_lon = b.min_lon.min(p.lon());
            b.min_lat = b.min_lat.min(p.lat());
            b.max_lon = b.max_lon.max(p.lon());
            b.max_lat = b.max_lat.max(p.lat());
        }
        b
    }

    /// Box around `center` that contains every point within `radius_m`.
    pub fn around(center: GeoPoint, radius_m: f64) -> Self {
        BBox::of_points(&[center]).expanded(radius_m)
    }

    /// Grows the box by `meters` on every side.
    pub fn expanded(&self, meters: f64) -> Self {
        let dlat = meters / super::METERS_PER_DEGREE;
        let max_abs_lat = self.min_lat.abs().max(self.max_lat.abs()) + dlat;
        let cos = max_abs_lat.min(89.999).to_radians().cos();
        let dlon = (dlat / cos).min(360.0);
        BBox {
            min_lon: (self.min_lon - dlon).max(-180.0),
            min_lat: (self.min_lat - dlat).max(-90.0),
            max_lon: (self.max_lon + dlon).min(180.0),
            max_lat: (self.max_lat + dlat).min(90.0),
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
            && self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", content = "coordinates")]
enum RawGeometry {
    Point([f64; 2]),
    LineString(Vec<[f64; 2]>),
    Polygon(Vec<Vec<[f64; 2]>>),
}

fn to_points(raw: Vec<[f64; 2]>) -> Result<Vec<GeoPoint>, GeoError> {
    raw.into_iter().map(GeoPoint::try_from).collect()
}

impl TryFrom<RawGeometry> for Geometry {
    type Error = GeoError;

    fn try_from(raw: RawGeometry) -> Result<Self, Self::Error> {
        match raw {
            RawGeometry::Point(p) => Ok(Geometry::Point(GeoPoint::try_from(p)?)),
            RawGeometry::LineString(pts) => Geometry::line_string(to_points(pts)?),
            RawGeometry::Polygon(rings) => {
                let outer = rings
                    .into_iter()
                    .next()
                    .ok_or_else(|| GeoError::InvalidGeometry("polygon has no rings".into()))?;
                Geometry::polygon(to_points(outer)?)
            }
        }
    }
}

impl From<Geometry> for RawGeometry {
    fn from(g: Geometry) -> Self {
        let raw = |pts: Vec<GeoPoint>| pts.into_iter().map(<[f64; 2]>::from).collect::<Vec<_>>();
        match g {
            Geometry::Point(p) => RawGeometry::Point(p.into()),
            Geometry::LineString(pts) => RawGeometry::LineString(raw(pts)),
            Geometry::Polygon(ring) => RawGeometry::Polygon(vec![raw(ring)]),
        }
    }
}
