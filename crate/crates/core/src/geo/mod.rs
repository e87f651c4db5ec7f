//! Geodesy primitives shared by every other module: points and geometries,
//! great-circle distance and bearing, eight-way direction quantization,
//! Morton-coded quadtree cells and point-to-geometry distances.
//!
//! All distances are in meters on a sphere of radius [`EARTH_RADIUS_M`].

mod cell;
mod measure;
mod planar;
mod point;

pub use cell::{cell_id, cells_in_bbox, CellId, MAX_CELL_LEVEL};
pub use measure::{
    cardinal8, destination_point, haversine_m, initial_bearing_deg, Cardinal, Transition,
    ZERO_DISTANCE_M,
};
pub use planar::{
    closest_points, point_in_polygon, point_to_geometry_m, polyline_crosses_polygon,
    segments_within, LocalFrame,
};
pub use point::{BBox, GeoPoint, Geometry, GeometryKind};

/// Mean Earth radius used for all spherical computations.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude on the reference sphere.
pub const METERS_PER_DEGREE: f64 = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("invalid coordinate (lon {lon}, lat {lat})")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("bearing is undefined between coincident points")]
    UndefinedBearing,
    #[error("bearing {0} is outside [0, 360)")]
    InvalidBearing(f64),
    #[error("cell level {0} is outside [0, {MAX_CELL_LEVEL}]")]
    InvalidLevel(u8),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}
