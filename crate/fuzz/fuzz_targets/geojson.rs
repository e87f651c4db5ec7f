#![no_main]

use libfuzzer_sys::fuzz_target;
use urbangraph_core::graph::{build_graph, load_geojson, GraphBuildConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok((nodes, _)) = load_geojson(data) {
        // Whatever loads must also build; small inputs only to keep runs fast.
        if nodes.len() <= 64 {
            let _ = build_graph(nodes, GraphBuildConfig::default());
        }
    }
});
