#![no_main]

use fluctlab::meanfield::CurveIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(index) = CurveIndex::parse(text) {
        assert_eq!(CurveIndex::parse(&index.to_json()).ok(), Some(index));
    }
});
