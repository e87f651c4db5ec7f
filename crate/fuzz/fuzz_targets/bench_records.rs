#![no_main]

use libfuzzer_sys::fuzz_target;
use urbangraph_core::bench::{evaluate, load_embeddings, parse_instances};

// One input feeds both readers; the evaluation only runs when both accept it.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let instances = parse_instances(text);
    let store = load_embeddings(text);
    if let (Ok(instances), Ok(store)) = (instances, store) {
        let _ = evaluate(&instances, &store, &store, 5);
    }
});
