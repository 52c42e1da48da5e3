#![no_main]
use cascade_lab::InteractionModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = InteractionModel::from_json_str(s) {
            let mut buf = Vec::new();
            m.write_json(&mut buf).unwrap();
            assert_eq!(InteractionModel::read_json(buf.as_slice()).unwrap(), m);
        }
    }
});
