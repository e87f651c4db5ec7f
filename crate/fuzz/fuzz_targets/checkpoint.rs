#![no_main]

use libfuzzer_sys::fuzz_target;
use urbangraph_encoder::{read_checkpoint, write_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = read_checkpoint(data) {
        let bytes = write_checkpoint(&params);
        assert_eq!(
            read_checkpoint(&bytes).expect("rewritten checkpoint reads"),
            params
        );
    }
});
