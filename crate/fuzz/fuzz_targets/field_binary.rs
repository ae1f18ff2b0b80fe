#![no_main]

use fluctlab::spectral::{from_binary, to_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = from_binary(data) {
        // Byte-exact, including NaN payloads.
        assert_eq!(to_binary(&field), data);
    }
});
