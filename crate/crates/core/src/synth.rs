//! Deterministic synthetic cities for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geo::{destination_point, GeoPoint, Geometry};
use crate::graph::{GraphNode, NodeKind};

/// Image id of the Kallang fixture viewpoint.
pub const KALLANG_IMAGE_ID: &str = "539125490832143";

pub fn kallang_image() -> GeoPoint {
    GeoPoint::new(103.8693, 1.3100).expect("valid")
}

fn line(points: &[GeoPoint]) -> Geometry {
    Geometry::line_string(points.to_vec()).expect("valid line")
}

/// Square ring with the given south-west corner, side and rotation.
fn square(sw: GeoPoint, side_m: f64, heading: f64) -> Geometry {
    let a = sw;
    let b = destination_point(a, heading, side_m);
    let c = destination_point(b, (heading + 90.0) % 360.0, side_m);
    let d = destination_point(a, (heading + 90.0) % 360.0, side_m);
    Geometry::polygon(vec![a, b, c, d, a]).expect("valid ring")
}

/// A small neighbourhood around the Kallang viewpoint: Kallang Road passes
/// 2.0 m from the image at a bearing of 342°, and its crossing with Geylang
/// Road lies 3.2 m further along the road at 72°.
pub fn kallang_nodes() -> Vec<GraphNode> {
    let img = kallang_image();
    let foot = destination_point(img, 342.0, 2.0);
    let cross = destination_point(foot, 72.0, 3.2);
    let kallang = line(&[
        destination_point(foot, 252.0, 350.0),
        destination_point(foot, 72.0, 350.0),
    ]);
    let geylang = line(&[
        destination_point(cross, 310.0, 150.0),
        destination_point(cross, 130.0, 500.0),
    ]);
    let far = destination_point(cross, 130.0, 380.0);
    // Kampong Bugis sits 8 m south-west of Geylang Road, with Kampong Bugis
    // Road 8 m beyond its far side, so both roads bound it.
    let bugis_sw = destination_point(destination_point(cross, 130.0, 100.0), 220.0, 8.0);
    let bugis = square(bugis_sw, 180.0, 130.0);
    let bugis_road_start =
        destination_point(destination_point(bugis_sw, 220.0, 188.0), 310.0, 20.0);
    let bugis_road = line(&[
        bugis_road_start,
        destination_point(bugis_road_start, 130.0, 240.0),
    ]);
    let banyan = destination_point(
        destination_point(bugis_road_start, 130.0, 120.0),
        220.0,
        28.0,
    );
    let estate = square(
        destination_point(destination_point(foot, 162.0, 10.0), 252.0, 130.0),
        100.0,
        72.0,
    );

    vec![
        GraphNode::new("way/kallang-road", NodeKind::Road, kallang)
            .with_name("Kallang Road")
            .with_category("primary"),
        GraphNode::new("way/geylang-road", NodeKind::Road, geylang)
            .with_name("Geylang Road")
            .with_category("primary"),
        GraphNode::new("way/kampong-bugis-road", NodeKind::Road, bugis_road)
            .with_name("Kampong Bugis Road")
            .with_category("residential"),
        GraphNode::new(
            "node/riverside-park",
            NodeKind::Poi,
            Geometry::Point(destination_point(far, 40.0, 25.0)),
        )
        .with_name("Kallang Riverside Park North")
        .with_category("park"),
        GraphNode::new("node/banyan-tree", NodeKind::Poi, Geometry::Point(banyan))
            .with_name("Banyan Tree & Ruin")
            .with_category("attraction")
            .with_attr("historic_district", "Kampong Bugis"),
        GraphNode::new(
            "node/lavender-food",
            NodeKind::Poi,
            Geometry::Point(destination_point(img, 100.0, 60.0)),
        )
        .with_name("Lavender Food Square")
        .with_category("food_court")
        .with_attr("addr:street", "Kallang Road")
        .with_attr("addr:housenumber", "380")
        .with_attr("addr:postcode", "339696")
        .with_attr("opening_hours", "06:00-23:00"),
        GraphNode::new(
            "node/bench-17",
            NodeKind::Poi,
            Geometry::Point(destination_point(img, 200.0, 30.0)),
        )
        .with_category("bench"),
        GraphNode::new(
            "node/lavender-mrt",
            NodeKind::TransitFacility,
            Geometry::Point(destination_point(img, 300.0, 120.0)),
        )
        .with_name("Lavender MRT Station")
        .with_category("subway_entrance"),
        GraphNode::new("area/kampong-bugis", NodeKind::Aoi, bugis)
            .with_name("Kampong Bugis")
            .with_category("neighbourhood")
            .with_attr("planning_area", "Kallang")
            .with_attr("city", "Singapore")
            .with_attr("country", "Singapore"),
        GraphNode::new("area/kallang-bahru", NodeKind::Aoi, estate)
            .with_name("Kallang Bahru Estate")
            .with_category("residential")
            .with_attr("building_use", "residential")
            .with_attr("planning_area", "Kallang")
            .with_attr("district", "Central Region")
            .with_attr("city", "Singapore")
            .with_attr("country", "Singapore"),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub origin: (f64, f64),
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_m: f64,
    pub pois_per_block: f64,
    pub aoi_fraction: f64,
    pub transit_per_block: f64,
    pub images_per_block: f64,
    pub unnamed_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            origin: (103.80, 1.28),
            blocks_x: 6,
            blocks_y: 6,
            block_m: 120.0,
            pois_per_block: 3.0,
            aoi_fraction: 0.3,
            transit_per_block: 0.1,
            images_per_block: 1.0,
            unnamed_fraction: 0.1,
        }
    }
}

/// A generated city: entity nodes plus street-view image locations.
#[derive(Debug, Clone)]
pub struct SynthCity {
    pub nodes: Vec<GraphNode>,
    pub images: Vec<(String, GeoPoint)>,
}

const POI_CATEGORIES: [&str; 10] = [
    "cafe",
    "restaurant",
    "school",
    "clinic",
    "bank",
    "pharmacy",
    "library",
    "hotel",
    "supermarket",
    "museum",
];
const POI_WORDS: [&str; 12] = [
    "Golden", "Harbour", "Lotus", "Maple", "Union", "Crescent", "Garden", "Pioneer", "Summit",
    "River", "Civic", "Jade",
];

fn count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    let whole = mean.floor();
    whole as usize + usize::from(rng.gen_bool((mean - whole).clamp(0.0, 1.0)))
}

/// Rectangular street grid split into one road per block edge, with POIs set
/// back from the streets, block AOIs, transit stops and viewpoints on the
/// sidewalks. Identical configs give identical cities.
pub fn grid_city(cfg: &SynthConfig) -> SynthCity {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = GeoPoint::new(cfg.origin.0, cfg.origin.1).expect("valid origin");
    let at = |i: f64, j: f64| {
        destination_point(
            destination_point(origin, 90.0, i * cfg.block_m),
            0.0,
            j * cfg.block_m,
        )
    };
    let mut nodes = Vec::new();
    let mut images = Vec::new();

    for j in 0..=cfg.blocks_y {
        for i in 0..cfg.blocks_x {
            let g = line(&[at(i as f64, j as f64), at(i as f64 + 1.0, j as f64)]);
            nodes.push(
                GraphNode::new(format!("h{j}-{i}"), NodeKind::Road, g)
                    .with_name(format!("Avenue {}", j + 1)),
            );
        }
    }
    for i in 0..=cfg.blocks_x {
        for j in 0..cfg.blocks_y {
            let g = line(&[at(i as f64, j as f64), at(i as f64, j as f64 + 1.0)]);
            nodes.push(
                GraphNode::new(format!("v{i}-{j}"), NodeKind::Road, g)
                    .with_name(format!("Street {}", i + 1)),
            );
        }
    }

    let mut poi = 0usize;
    for j in 0..cfg.blocks_y {
        for i in 0..cfg.blocks_x {
            let (fi, fj) = (i as f64, j as f64);
            let setback = 5.0 / cfg.block_m;
            for _ in 0..count(&mut rng, cfg.pois_per_block) {
                // Keep POIs in a band near one of the four block edges.
                let t = rng.gen_range(0.1..0.9);
                let off = rng.gen_range(setback..0.35);
                let (u, v) = match rng.gen_range(0..4) {
                    0 => (t, off),
                    1 => (t, 1.0 - off),
                    2 => (off, t),
                    _ => (1.0 - off, t),
                };
                let category = POI_CATEGORIES[rng.gen_range(0..POI_CATEGORIES.len())];
                let mut n = GraphNode::new(
                    format!("poi{poi}"),
                    NodeKind::Poi,
                    Geometry::Point(at(fi + u, fj + v)),
                )
                .with_category(category);
                if !rng.gen_bool(cfg.unnamed_fraction) {
                    let w = POI_WORDS[rng.gen_range(0..POI_WORDS.len())];
                    n = n.with_name(format!("{w} {category} {poi}"));
                }
                if rng.gen_bool(0.3) {
                    n = n.with_attr("addr:street", format!("Avenue {}", j + 1));
                }
                nodes.push(n);
                poi += 1;
            }
            if rng.gen_bool(cfg.aoi_fraction.clamp(0.0, 1.0)) {
                let inset = 8.0 / cfg.block_m;
                let ring = vec![
                    at(fi + inset, fj + inset),
                    at(fi + 1.0 - inset, fj + inset),
                    at(fi + 1.0 - inset, fj + 1.0 - inset),
                    at(fi + inset, fj + 1.0 - inset),
                    at(fi + inset, fj + inset),
                ];
                nodes.push(
                    GraphNode::new(
                        format!("aoi{j}-{i}"),
                        NodeKind::Aoi,
                        Geometry::polygon(ring).expect("ring"),
                    )
                    .with_name(format!("Block {}-{}", j + 1, i + 1))
                    .with_category("residential")
                    .with_attr("planning_area", format!("Sector {}", j / 4 + 1)),
                );
            }
            for k in 0..count(&mut rng, cfg.transit_per_block) {
                let p = at(fi + rng.gen_range(0.2..0.8), fj + 0.08);
                nodes.push(
                    GraphNode::new(
                        format!("bus{j}-{i}-{k}"),
                        NodeKind::TransitFacility,
                        Geometry::Point(p),
                    )
                    .with_name(format!("Stop {j}-{i}"))
                    .with_category("bus_stop"),
                );
            }
            for _ in 0..count(&mut rng, cfg.images_per_block) {
                let p = at(
                    fi + rng.gen_range(0.05..0.95),
                    fj + rng.gen_range(0.02..0.08),
                );
                images.push((format!("{}", 1_000_000_000 + images.len() as u64), p));
            }
        }
    }
    SynthCity { nodes, images }
}

/// The checked-in demo city: exactly 100 roads, 50 POIs, 5 AOIs and 20
/// viewpoints. Viewpoints are returned both as nodes and as image records.
pub fn fixture_city(seed: u64) -> SynthCity {
    let (bx, by, block) = (7usize, 6usize, 110.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = GeoPoint::new(-73.9235, 40.7560).expect("valid origin");
    let at = |x: f64, y: f64| {
        destination_point(destination_point(origin, 90.0, x * block), 0.0, y * block)
    };
    let mut nodes = Vec::new();
    for j in 0..=by {
        for i in 0..bx {
            let g = line(&[at(i as f64, j as f64), at(i as f64 + 1.0, j as f64)]);
            nodes.push(
                GraphNode::new(format!("road/h{j:02}-{i:02}"), NodeKind::Road, g)
                    .with_name(if i < 4 {
                        format!("{} Ave", j + 30)
                    } else {
                        format!("{} Rd", j + 30)
                    })
                    .with_category("residential"),
            );
        }
    }
    for i in 0..=bx {
        for j in 0..by {
            let g = line(&[at(i as f64, j as f64), at(i as f64, j as f64 + 1.0)]);
            nodes.push(
                GraphNode::new(format!("road/v{i:02}-{j:02}"), NodeKind::Road, g)
                    .with_name(if j < 3 {
                        format!("{} St", i + 21)
                    } else {
                        format!("{} Pl", i + 21)
                    })
                    .with_category("residential"),
            );
        }
    }
    // Three diagonal boulevards bring the road count to 100 and add
    // junctions away from the grid corners.
    for (k, (a, b)) in [
        ((0.0, 0.5), (3.5, 6.0)),
        ((2.5, 0.0), (7.0, 4.5)),
        ((4.0, 6.0), (7.0, 2.5)),
    ]
    .into_iter()
    .enumerate()
    {
        let g = line(&[
            at(a.0, a.1),
            at((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0),
            at(b.0, b.1),
        ]);
        nodes.push(
            GraphNode::new(format!("road/d{k}"), NodeKind::Road, g)
                .with_name(["Queens Blvd", "Northern Blvd", "Broadway"][k])
                .with_category("primary"),
        );
    }

    for n in 0..50 {
        let (i, j) = (rng.gen_range(0..bx), rng.gen_range(0..by));
        let t = rng.gen_range(0.1..0.9);
        let off = rng.gen_range(0.05..0.3);
        let (u, v) = if rng.gen_bool(0.5) {
            (t, off)
        } else {
            (off, t)
        };
        let category = POI_CATEGORIES[rng.gen_range(0..POI_CATEGORIES.len())];
        let mut node = GraphNode::new(
            format!("poi/{n:03}"),
            NodeKind::Poi,
            Geometry::Point(at(i as f64 + u, j as f64 + v)),
        )
        .with_category(category);
        if n % 10 != 9 {
            let w = POI_WORDS[rng.gen_range(0..POI_WORDS.len())];
            node = node.with_name(format!("{w} {category} {n}"));
        }
        if rng.gen_bool(0.4) {
            node = node.with_attr("addr:street", format!("{} Ave", j + 30));
        }
        nodes.push(node);
    }

    let mut blocks: Vec<(usize, usize)> =
        (0..by).flat_map(|j| (0..bx).map(move |i| (i, j))).collect();
    for k in 0..5 {
        let (i, j) = blocks.swap_remove(rng.gen_range(0..blocks.len()));
        let (fi, fj, inset) = (i as f64, j as f64, 0.08);
        let ring = vec![
            at(fi + inset, fj + inset),
            at(fi + 1.0 - inset, fj + inset),
            at(fi + 1.0 - inset, fj + 1.0 - inset),
            at(fi + inset, fj + 1.0 - inset),
            at(fi + inset, fj + inset),
        ];
        nodes.push(
            GraphNode::new(
                format!("aoi/{k}"),
                NodeKind::Aoi,
                Geometry::polygon(ring).expect("ring"),
            )
            .with_name(
                [
                    "Sunnyside Gardens",
                    "Dutch Kills",
                    "Blissville",
                    "Hunters Point",
                    "Ravenswood",
                ][k],
            )
            .with_category("neighbourhood")
            .with_attr("district", "Queens")
            .with_attr("city", "New York"),
        );
    }

    let mut images = Vec::new();
    for n in 0..20u64 {
        let (i, j) = (rng.gen_range(0..bx), rng.gen_range(0..=by));
        let p = at(
            i as f64 + rng.gen_range(0.05..0.95),
            j as f64 + rng.gen_range(0.01..0.05),
        );
        let id = format!("{}", 4_000_000_000_000u64 + n * 7_919);
        nodes.push(GraphNode::new(
            id.clone(),
            NodeKind::Viewpoint,
            Geometry::Point(p),
        ));
        images.push((id, p));
    }
    SynthCity { nodes, images }
}

/// Irregular city for oracle comparisons: random polyline roads (some
/// sharing vertices), POIs, transit stops, viewpoints and square AOIs inside
/// a square of `extent_m`. Node count before derived intersections is
/// `roads + pois + aois + 2 * roads / 5` at most.
pub fn random_city(
    seed: u64,
    roads: usize,
    pois: usize,
    aois: usize,
    extent_m: f64,
) -> Vec<GraphNode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = GeoPoint::new(rng.gen_range(-120.0..120.0), rng.gen_range(-50.0..50.0))
        .expect("valid origin");
    let at = |rng: &mut ChaCha8Rng| {
        destination_point(
            destination_point(origin, 90.0, rng.gen_range(0.0..extent_m)),
            0.0,
            rng.gen_range(0.0..extent_m),
        )
    };
    let mut nodes = Vec::new();
    let mut vertices: Vec<GeoPoint> = Vec::new();
    for r in 0..roads {
        let n = rng.gen_range(2..=4);
        let mut pts = Vec::with_capacity(n);
        for k in 0..n {
            // Reuse an earlier vertex now and then so roads share junctions.
            let p = if k == 0 && !vertices.is_empty() && rng.gen_bool(0.3) {
                vertices[rng.gen_range(0..vertices.len())]
            } else if k == 0 {
                at(&mut rng)
            } else {
                let prev: GeoPoint = pts[k - 1];
                destination_point(prev, rng.gen_range(0.0..360.0), rng.gen_range(40.0..250.0))
            };
            pts.push(p);
        }
        vertices.extend(&pts);
        let mut node = GraphNode::new(format!("r{r:03}"), NodeKind::Road, line(&pts));
        if rng.gen_bool(0.85) {
            node = node.with_name(format!("Road {}", rng.gen_range(0..roads.max(1))));
        }
        nodes.push(node);
    }
    for i in 0..pois {
        let mut node = GraphNode::new(
            format!("p{i:03}"),
            NodeKind::Poi,
            Geometry::Point(at(&mut rng)),
        )
        .with_category(POI_CATEGORIES[rng.gen_range(0..POI_CATEGORIES.len())]);
        if rng.gen_bool(0.8) {
            node = node.with_name(format!("Place {i}"));
        }
        nodes.push(node);
    }
    for i in 0..roads / 5 {
        nodes.push(
            GraphNode::new(
                format!("t{i:03}"),
                NodeKind::TransitFacility,
                Geometry::Point(at(&mut rng)),
            )
            .with_name(format!("Stop {i}")),
        );
        nodes.push(GraphNode::new(
            format!("v{i:03}"),
            NodeKind::Viewpoint,
            Geometry::Point(at(&mut rng)),
        ));
    }
    for i in 0..aois {
        let sw = at(&mut rng);
        let side = rng.gen_range(30.0..200.0);
        nodes.push(
            GraphNode::new(
                format!("a{i:03}"),
                NodeKind::Aoi,
                square(sw, side, rng.gen_range(0.0..90.0)),
            )
            .with_name(format!("Area {i}")),
        );
    }
    nodes
}
