#![no_main]

use libfuzzer_sys::fuzz_target;
use urbangraph_core::graph::{read_graph_from, validate_graph};

// Input is meta, nodes and edges joined by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(3, |&b| b == 0);
    let (Some(meta), Some(nodes), Some(edges)) = (parts.next(), parts.next(), parts.next()) else {
        return;
    };
    if let Ok((g, _)) = read_graph_from(nodes, edges, meta) {
        let _ = validate_graph(&g);
    }
});
