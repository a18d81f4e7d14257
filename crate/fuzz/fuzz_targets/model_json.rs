#![no_main]

use libfuzzer_sys::fuzz_target;
use reactnav::{Model, ScanVector};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = Model::from_json(text) {
        for scan in [
            ScanVector::new(5.0, 5.0, 5.0, 5.0),
            ScanVector::new(450.0, 20.0, 90.0, 7.5),
        ] {
            model.predict(&scan);
        }
        assert_eq!(Model::from_json(&model.to_json()).expect("round trip"), model);
    }
});
