#![no_main]

use fluctlab::spectral::{from_json, to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(field) = from_json(text) {
        let again = from_json(&to_json(&field)).expect("own output parses");
        assert_eq!(again.lattice(), field.lattice());
        for (a, b) in again.coeffs().iter().zip(field.coeffs()) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
});
