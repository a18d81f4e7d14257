#![no_main]

use libfuzzer_sys::fuzz_target;
use reactnav::dataset::{emit_csv, parse_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = parse_csv(data) {
        let again = parse_csv(&emit_csv(&ds)).expect("emitted CSV parses");
        assert_eq!(again.labels(), ds.labels());
    }
});
