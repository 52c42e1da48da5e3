#![no_main]
use cascade_lab::grid::parse_case;
use libfuzzer_sys::fuzz_target;
use std::path::Path;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_case(s, Path::new("fuzz.case"));
    }
});
