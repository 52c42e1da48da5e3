#![no_main]
use cascade_lab::cascade::{read_dataset, write_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // anything that parses must survive a write/read round trip
    if let Ok(ds) = read_dataset(data) {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        read_dataset(buf.as_slice()).unwrap();
    }
});
