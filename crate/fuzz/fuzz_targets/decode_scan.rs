#![no_main]

use libfuzzer_sys::fuzz_target;
use reactnav::serial::{decode_scan, encode_scan};

fuzz_target!(|data: &[u8]| {
    if let Ok(scan) = decode_scan(data) {
        assert!(scan.in_envelope());
        let again = decode_scan(encode_scan(&scan).as_bytes()).expect("re-encoded frame decodes");
        for (a, b) in scan.channels().iter().zip(again.channels()) {
            assert!((a - b).abs() <= 0.005 + 1e-9);
        }
    }
});
