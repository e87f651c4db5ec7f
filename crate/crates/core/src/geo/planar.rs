//! Planar computations in a local equirectangular frame. City-scale error of
//! the projection is far below the tolerances used elsewhere, and all reported
//! distances are re-measured with [`haversine_m`] on the projected feet.

use super::{haversine_m, GeoError, GeoPoint, Geometry, METERS_PER_DEGREE};

/// Equirectangular projection centered on `origin`, in meters.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: GeoPoint,
    kx: f64,
    ky: f64,
}

impl LocalFrame {
    pub fn at(origin: GeoPoint) -> Self {
        let cos = origin.lat().to_radians().cos().max(1e-9);
        Self {
            origin,
            kx: cos * METERS_PER_DEGREE,
            ky: METERS_PER_DEGREE,
        }
    }

    #[inline]
    pub fn to_xy(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon() - self.origin.lon()) * self.kx,
            (p.lat() - self.origin.lat()) * self.ky,
        )
    }

    #[inline]
    pub fn from_xy(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint::normalized(
            self.origin.lon() + x / self.kx,
            self.origin.lat() + y / self.ky,
        )
    }
}

type Xy = (f64, f64);

#[inline]
fn sub(a: Xy, b: Xy) -> Xy {
    (a.0 - b.0, a.1 - b.1)
}

#[inline]
fn cross(a: Xy, b: Xy) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

#[inline]
fn dot(a: Xy, b: Xy) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

#[inline]
fn norm(a: Xy) -> f64 {
    a.0.hypot(a.1)
}

/// Parameter and foot of the projection of `p` onto segment `ab`.
fn project_on_segment(p: Xy, a: Xy, b: Xy) -> (f64, Xy) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return (0.0, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    (t, (a.0 + t * ab.0, a.1 + t * ab.1))
}

/// Intersection point of segments `p1p2` and `q1q2`, including touching and
/// collinear overlap.
fn segment_intersection(p1: Xy, p2: Xy, q1: Xy, q2: Xy) -> Option<Xy> {
    let r = sub(p2, p1);
    let s = sub(q2, q1);
    let denom = cross(r, s);
    let qp = sub(q1, p1);
    let scale = (norm(r) * norm(s)).max(f64::MIN_POSITIVE);
    if denom.abs() <= 1e-12 * scale {
        // Parallel: intersect only when collinear and overlapping.
        if cross(qp, r).abs() > 1e-9 * norm(r).max(1e-12) {
            return None;
        }
        let on = |pt: Xy, a: Xy, b: Xy| {
            let (t, f) = project_on_segment(pt, a, b);
            let _ = t;
            norm(sub(pt, f)) <= 1e-9
        };
        for (pt, a, b) in [(q1, p1, p2), (q2, p1, p2), (p1, q1, q2), (p2, q1, q2)] {
            if on(pt, a, b) {
                return Some(pt);
            }
        }
        return None;
    }
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((p1.0 + t * r.0, p1.1 + t * r.1))
    } else {
        None
    }
}

/// Minimum distance from `p` to `g` and the nearest point on `g`.
///
/// Line strings and polygon boundaries are scanned segment by segment; the
/// foot of the perpendicular is found in a frame centered on `p` and the
/// returned distance is the great-circle distance to that foot. Vertices are
/// always candidates, so the result never exceeds the distance to any vertex.
pub fn point_to_geometry_m(p: GeoPoint, g: &Geometry) -> Result<(f64, GeoPoint), GeoError> {
    let pts = g.points();
    if pts.is_empty() {
        return Err(GeoError::InvalidGeometry("empty geometry".into()));
    }
    if let Geometry::Point(q) = g {
        return Ok((haversine_m(p, *q), *q));
    }
    let frame = LocalFrame::at(p);
    let mut best = (f64::INFINITY, p);
    for v in pts {
        let d = haversine_m(p, *v);
        if d < best.0 {
            best = (d, *v);
        }
    }
    for (a, b) in g.segments() {
        let (t, foot) = project_on_segment((0.0, 0.0), frame.to_xy(a), frame.to_xy(b));
        if t <= 0.0 || t >= 1.0 {
            continue;
        }
        if norm(foot) < 1e-9 {
            return Ok((0.0, p));
        }
        let q = frame.from_xy(foot.0, foot.1);
        let d = haversine_m(p, q);
        if d < best.0 {
            best = (d, q);
        }
    }
    Ok(best)
}

/// Closest pair of points between two geometries: `(distance, on_a, on_b)`.
///
/// Extended geometries are compared by their lines/boundaries; when they touch
/// or cross the distance is zero and both points are the first crossing.
pub fn closest_points(a: &Geometry, b: &Geometry) -> Result<(f64, GeoPoint, GeoPoint), GeoError> {
    if let Geometry::Point(p) = a {
        let (d, q) = point_to_geometry_m(*p, b)?;
        return Ok((d, *p, q));
    }
    if let Geometry::Point(q) = b {
        let (d, p) = point_to_geometry_m(*q, a)?;
        return Ok((d, p, *q));
    }
    let frame = LocalFrame::at(a.points()[0]);
    let pa: Vec<Xy> = a.points().iter().map(|p| frame.to_xy(*p)).collect();
    let pb: Vec<Xy> = b.points().iter().map(|p| frame.to_xy(*p)).collect();
    for sa in pa.windows(2) {
        for sb in pb.windows(2) {
            if let Some(x) = segment_intersection(sa[0], sa[1], sb[0], sb[1]) {
                let q = frame.from_xy(x.0, x.1);
                return Ok((0.0, q, q));
            }
        }
    }
    let mut best = (f64::INFINITY, (0.0, 0.0), (0.0, 0.0));
    for (from, to, flip) in [(&pa, &pb, false), (&pb, &pa, true)] {
        for v in from.iter() {
            for s in to.windows(2) {
                let (_, foot) = project_on_segment(*v, s[0], s[1]);
                let d = norm(sub(*v, foot));
                if d < best.0 {
                    best = if flip { (d, foot, *v) } else { (d, *v, foot) };
                }
            }
        }
    }
    let (p, q) = (
        frame.from_xy(best.1 .0, best.1 .1),
        frame.from_xy(best.2 .0, best.2 .1),
    );
    Ok((haversine_m(p, q), p, q))
}

/// Points where two line geometries cross or pass within `tolerance_m` of
/// each other, one per segment pair (callers merge near-duplicates).
pub fn segments_within(a: &Geometry, b: &Geometry, tolerance_m: f64) -> Vec<GeoPoint> {
    let Some(first) = a.points().first() else {
        return Vec::new();
    };
    let frame = LocalFrame::at(*first);
    let pa: Vec<Xy> = a.points().iter().map(|p| frame.to_xy(*p)).collect();
    let pb: Vec<Xy> = b.points().iter().map(|p| frame.to_xy(*p)).collect();
    let mut out = Vec::new();
    for sa in pa.windows(2) {
        for sb in pb.windows(2) {
            if let Some(x) = segment_intersection(sa[0], sa[1], sb[0], sb[1]) {
                out.push(frame.from_xy(x.0, x.1));
                continue;
            }
            let mut best = (f64::INFINITY, (0.0, 0.0), (0.0, 0.0));
            for (v, s0, s1) in [
                (sa[0], sb[0], sb[1]),
                (sa[1], sb[0], sb[1]),
                (sb[0], sa[0], sa[1]),
                (sb[1], sa[0], sa[1]),
            ] {
                let (_, foot) = project_on_segment(v, s0, s1);
                let d = norm(sub(v, foot));
                if d < best.0 {
                    best = (d, v, foot);
                }
            }
            if best.0 <= tolerance_m {
                let mid = ((best.1 .0 + best.2 .0) / 2.0, (best.1 .1 + best.2 .1) / 2.0);
                out.push(frame.from_xy(mid.0, mid.1));
            }
        }
    }
    out
}

/// Even-odd test of `p` against a closed ring (boundary points are unspecified).
pub fn point_in_polygon(p: GeoPoint, ring: &[GeoPoint]) -> bool {
    let (x, y) = (p.lon(), p.lat());
    let mut inside = false;
    for w in ring.windows(2) {
        let (xi, yi, xj, yj) = (w[0].lon(), w[0].lat(), w[1].lon(), w[1].lat());
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

/// Whether `line` enters the interior of the polygon `ring`: a segment
/// properly crosses the boundary, or a vertex lies strictly inside. Returns
/// the first crossing point (or the first interior vertex).
pub fn polyline_crosses_polygon(line: &Geometry, ring: &[GeoPoint]) -> Option<GeoPoint> {
    let first = *line.points().first()?;
    let frame = LocalFrame::at(first);
    let pl: Vec<Xy> = line.points().iter().map(|p| frame.to_xy(*p)).collect();
    let pr: Vec<Xy> = ring.iter().map(|p| frame.to_xy(*p)).collect();
    for sl in pl.windows(2) {
        for sr in pr.windows(2) {
            let d1 = cross(sub(sr[1], sr[0]), sub(sl[0], sr[0]));
            let d2 = cross(sub(sr[1], sr[0]), sub(sl[1], sr[0]));
            let d3 = cross(sub(sl[1], sl[0]), sub(sr[0], sl[0]));
            let d4 = cross(sub(sl[1], sl[0]), sub(sr[1], sl[0]));
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                let x = segment_intersection(sl[0], sl[1], sr[0], sr[1])?;
                return Some(frame.from_xy(x.0, x.1));
            }
        }
    }
    let boundary = Geometry::Polygon(ring.to_vec());
    line.points().iter().copied().find(|v| {
        point_in_polygon(*v, ring)
            && point_to_geometry_m(*v, &boundary)
                .map(|(d, _)| d > 1e-6)
                .unwrap_or(false)
    })
}
