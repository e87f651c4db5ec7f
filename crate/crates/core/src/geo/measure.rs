use serde::{Deserialize, Serialize};

use super::{GeoError, GeoPoint, EARTH_RADIUS_M};

/// Great-circle distance in meters.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat().to_radians(), b.lat().to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon() - a.lon()).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.min(1.0).sqrt().asin()
}

/// Initial great-circle bearing from `a` to `b`, clockwise from north, in [0, 360).
pub fn initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> Result<f64, GeoError> {
    if a == b {
        return Err(GeoError::UndefinedBearing);
    }
    let (phi1, phi2) = (a.lat().to_radians(), b.lat().to_radians());
    let dlambda = (b.lon() - a.lon()).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(normalize_bearing(y.atan2(x).to_degrees()))
}

pub(crate) fn normalize_bearing(deg: f64) -> f64 {
    let b = deg.rem_euclid(360.0);
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

/// Point reached by travelling `distance_m` from `origin` along `bearing_deg`.
pub fn destination_point(origin: GeoPoint, bearing_deg: f64, distance_m: f64) -> GeoPoint {
    let delta = distance_m / EARTH_RADIUS_M;
    let theta = bearing_deg.to_radians();
    let phi1 = origin.lat().to_radians();
    let lambda1 = origin.lon().to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    GeoPoint::normalized(lambda2.to_degrees(), phi2.to_degrees())
}

/// Eight-way compass direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cardinal {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Cardinal {
    pub const ALL: [Cardinal; 8] = [
        Cardinal::N,
        Cardinal::NE,
        Cardinal::E,
        Cardinal::SE,
        Cardinal::S,
        Cardinal::SW,
        Cardinal::W,
        Cardinal::NW,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Cardinal::N => "N",
            Cardinal::NE => "NE",
            Cardinal::E => "E",
            Cardinal::SE => "SE",
            Cardinal::S => "S",
            Cardinal::SW => "SW",
            Cardinal::W => "W",
            Cardinal::NW => "NW",
        }
    }

    /// Lower-case compass word ("north", "southwest", ...).
    pub fn word(self) -> &'static str {
        match self {
            Cardinal::N => "north",
            Cardinal::NE => "northeast",
            Cardinal::E => "east",
            Cardinal::SE => "southeast",
            Cardinal::S => "south",
            Cardinal::SW => "southwest",
            Cardinal::W => "west",
            Cardinal::NW => "northwest",
        }
    }

    /// Bearing at the middle of the sector.
    pub fn center_bearing(self) -> f64 {
        Cardinal::ALL.iter().position(|c| *c == self).unwrap() as f64 * 45.0
    }

    pub fn parse(s: &str) -> Option<Cardinal> {
        Cardinal::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl std::fmt::Display for Cardinal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Quantizes a bearing into one of eight 45° sectors centered on the compass
/// points. A bearing exactly on a sector boundary belongs to the clockwise-next
/// sector (22.5 → NE).
pub fn cardinal8(bearing_deg: f64) -> Result<Cardinal, GeoError> {
    if !bearing_deg.is_finite() || !(0.0..360.0).contains(&bearing_deg) {
        return Err(GeoError::InvalidBearing(bearing_deg));
    }
    let sector = (((bearing_deg + 22.5) % 360.0) / 45.0).floor() as usize;
    Ok(Cardinal::ALL[sector.min(7)])
}

/// Distances below this render as "0.0m" and carry no bearing.
pub const ZERO_DISTANCE_M: f64 = 0.05;

/// A (distance, direction) move between two consecutive waypoints.
///
/// `bearing_deg` is `None` for zero-length moves, where direction is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub distance_m: f64,
    pub bearing_deg: Option<f64>,
}

impl Transition {
    pub fn new(distance_m: f64, bearing_deg: Option<f64>) -> Result<Self, GeoError> {
        if !distance_m.is_finite() || distance_m < 0.0 {
            return Err(GeoError::InvalidGeometry(format!(
                "transition distance {distance_m}"
            )));
        }
        if let Some(b) = bearing_deg {
            cardinal8(b)?;
        }
        Ok(Self {
            distance_m,
            bearing_deg,
        })
    }

    pub fn between(from: GeoPoint, to: GeoPoint) -> Self {
        let distance_m = haversine_m(from, to);
        let bearing_deg = if distance_m < ZERO_DISTANCE_M {
            None
        } else {
            initial_bearing_deg(from, to).ok()
        };
        Self {
            distance_m,
            bearing_deg,
        }
    }

    pub fn cardinal(&self) -> Option<Cardinal> {
        self.bearing_deg.and_then(|b| cardinal8(b).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    /// Independent spherical law of cosines route.
    fn law_of_cosines_m(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
        let dl = (b.lon() - a.lon()).to_radians();
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_M * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn haversine_examples() {
        let a = pt(12.5, 41.9);
        assert_eq!(haversine_m(a, a), 0.0);
        let d = haversine_m(pt(0.0, 0.0), pt(0.0, 0.001));
        let arc = std::f64::consts::PI * EARTH_RADIUS_M / 180.0 * 0.001;
        assert!((d - arc).abs() < 1e-9);
        assert!((d - 111.1949).abs() < 0.001);

        let (p, q) = (pt(-73.9196, 40.7724), pt(-73.9231, 40.6670));
        assert!((haversine_m(p, q) - law_of_cosines_m(p, q)).abs() < 0.5);
    }

    #[test]
    fn bearing_examples() {
        let o = pt(0.0, 0.0);
        assert!(initial_bearing_deg(o, pt(0.0, 1.0)).unwrap().abs() < 1e-12);
        assert!((initial_bearing_deg(o, pt(1.0, 0.0)).unwrap() - 90.0).abs() < 1e-12);
        assert!((initial_bearing_deg(o, pt(-1.0, 0.0)).unwrap() - 270.0).abs() < 1e-12);
        assert_eq!(initial_bearing_deg(o, o), Err(GeoError::UndefinedBearing));
    }

    #[test]
    fn cardinal_examples() {
        let quoted = [
            (52.0, Cardinal::NE),
            (143.0, Cardinal::SE),
            (223.0, Cardinal::SW),
            (128.0, Cardinal::SE),
            (342.0, Cardinal::N),
            (72.0, Cardinal::E),
            (206.0, Cardinal::SW),
            (263.0, Cardinal::W),
            (114.0, Cardinal::SE),
        ];
        for (b, c) in quoted {
            assert_eq!(cardinal8(b).unwrap(), c, "bearing {b}");
        }
        assert_eq!(cardinal8(22.5).unwrap(), Cardinal::NE);
        assert_eq!(cardinal8(337.5).unwrap(), Cardinal::N);
        assert_eq!(cardinal8(0.0).unwrap(), Cardinal::N);
        assert!(cardinal8(360.0).is_err());
        assert!(cardinal8(-0.1).is_err());
        assert!(cardinal8(f64::NAN).is_err());
    }

    #[test]
    fn destination_inverts_distance_and_bearing() {
        let o = pt(103.8693, 1.31);
        for bearing in [0.0, 45.0, 133.0, 270.0, 342.0] {
            let p = destination_point(o, bearing, 250.0);
            assert!((haversine_m(o, p) - 250.0).abs() < 1e-6);
            assert!((initial_bearing_deg(o, p).unwrap() - bearing).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_transition_has_no_bearing() {
        let o = pt(1.0, 1.0);
        let t = Transition::between(o, o);
        assert_eq!(t.distance_m, 0.0);
        assert!(t.bearing_deg.is_none() && t.cardinal().is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_point() -> impl Strategy<Value = GeoPoint> {
            (-180.0..=180.0f64, -90.0..=90.0f64).prop_map(|(lon, lat)| pt(lon, lat))
        }

        proptest! {
            #[test]
            fn haversine_symmetric_and_triangle(a in any_point(), b in any_point(), c in any_point()) {
                prop_assert_eq!(haversine_m(a, b), haversine_m(b, a));
                let ab = haversine_m(a, b);
                let bound = haversine_m(a, c) + haversine_m(c, b);
                prop_assert!(ab <= bound * (1.0 + 1e-6) + 1e-6);
            }

            #[test]
            fn cardinal_sectors_are_45_wide(b in 0.0..360.0f64) {
                let c = cardinal8(b).unwrap();
                let center = c.center_bearing();
                let diff = ((b - center + 540.0) % 360.0) - 180.0;
                prop_assert!((-22.5..22.5).contains(&diff), "b={} c={:?}", b, c);
            }
        }
    }
}
