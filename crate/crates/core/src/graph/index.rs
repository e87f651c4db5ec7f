use std::collections::HashMap;

use crate::geo::{cells_in_bbox, BBox, CellId, Geometry};

/// Cell index over full geometry extents (every segment's bbox cells), used
/// to find candidate entities near a query box without scanning the graph.
#[derive(Debug, Clone)]
pub(crate) struct ExtentIndex {
    level: u8,
    cells: HashMap<CellId, Vec<usize>>,
}

impl ExtentIndex {
    pub(crate) fn new(level: u8) -> Self {
        Self {
            level,
            cells: HashMap::new(),
        }
    }

    pub(crate) fn insert(&mut self, idx: usize, geometry: &Geometry) {
        let mut covered: Vec<CellId> = match geometry {
            Geometry::Point(p) => cells_in_bbox(&BBox::of_points(&[*p]), self.level).collect(),
            _ => geometry
                .segments()
                .flat_map(|(a, b)| cells_in_bbox(&BBox::of_points(&[a, b]), self.level))
                .collect(),
        };
        covered.sort_unstable();
        covered.dedup();
        for cell in covered {
            self.cells.entry(cell).or_default().push(idx);
        }
    }

    /// Sorted, de-duplicated node indices whose extent touches `bbox`'s cells.
    pub(crate) fn query(&self, bbox: &BBox) -> Vec<usize> {
        let mut out = Vec::new();
        for cell in cells_in_bbox(bbox, self.level) {
            if let Some(list) = self.cells.get(&cell) {
                out.extend_from_slice(list);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
