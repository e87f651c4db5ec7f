#![no_main]

use libfuzzer_sys::fuzz_target;
use urbangraph_core::subgraph::{describe_subgraph, parse_subgraph, serialize_subgraph};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = parse_subgraph(data) {
        let doc = serialize_subgraph(&s);
        let back = parse_subgraph(&doc).expect("serialized document parses");
        assert_eq!(back, s);
        let _ = describe_subgraph(&s);
    }
});
