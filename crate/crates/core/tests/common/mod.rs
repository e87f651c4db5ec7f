//! Shared helpers for the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use urbangraph_core::geo::GeoPoint;
use urbangraph_core::graph::{build_graph, GraphBuildConfig, SpatialGraph};
use urbangraph_core::synth::{kallang_image, kallang_nodes, KALLANG_IMAGE_ID};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Compares `actual` with a checked-in file. Set `UPDATE_FIXTURES=1` to
/// rewrite the file instead.
pub fn golden(rel: &str, actual: &str) {
    let path = fixtures_dir().join(rel);
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_FIXTURES=1)", path.display()));
    if expected != actual {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .unwrap_or(expected.lines().count().min(actual.lines().count()));
        panic!(
            "{} differs from golden at line {}:\n  golden: {:?}\n  actual: {:?}",
            path.display(),
            line + 1,
            expected.lines().nth(line),
            actual.lines().nth(line)
        );
    }
}

pub fn kallang_graph() -> SpatialGraph {
    let mut g = build_graph(kallang_nodes(), GraphBuildConfig::default()).unwrap();
    g.anchor_image(KALLANG_IMAGE_ID, kallang_image()).unwrap();
    g
}

const R: f64 = 6_371_000.0;

/// Great-circle distance by the spherical law of cosines.
pub fn cosine_law_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
    let dl = (b.lon() - a.lon()).to_radians();
    let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    R * c.clamp(-1.0, 1.0).acos()
}

/// Initial bearing written out from the spherical triangle formula.
pub fn bearing_oracle(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
    let dl = (b.lon() - a.lon()).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let deg = y.atan2(x).to_degrees();
    (deg + 360.0) % 360.0
}

/// Great-circle distance from the straight chord between unit vectors.
/// Accurate at centimetre scale, unlike the cosine law.
pub fn chord_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let v = |p: GeoPoint| {
        let (la, lo) = (p.lat().to_radians(), p.lon().to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (x, y) = (v(a), v(b));
    let c = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
    2.0 * R * (c / 2.0).min(1.0).asin()
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
