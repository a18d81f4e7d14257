#![no_main]

use libfuzzer_sys::fuzz_target;
use reactnav::serial::{decode_command, encode_command};

fuzz_target!(|data: &[u8]| {
    for &byte in data {
        if let Ok(cmd) = decode_command(byte) {
            assert_eq!(encode_command(cmd), byte);
        }
    }
});
