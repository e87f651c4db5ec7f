#![no_main]

use libfuzzer_sys::fuzz_target;
use urbangraph_core::srp::{parse_srp, render_srp};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(path) = parse_srp(text) {
        let rendered = render_srp(&path);
        let again = parse_srp(&rendered).expect("rendered path parses");
        assert_eq!(render_srp(&again), rendered);
    }
});
