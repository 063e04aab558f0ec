#![no_main]

use libfuzzer_sys::fuzz_target;
use vnsim_core::io::{decode, encode};

// `read_snapshot` is a file read around `decode`; fuzz the decoder directly.
fuzz_target!(|data: &[u8]| {
    if let Ok(state) = decode(data) {
        let bytes = encode(&state);
        let again = decode(&bytes).expect("re-encoded snapshot rejected");
        assert_eq!(encode(&again), bytes);
    }
});
