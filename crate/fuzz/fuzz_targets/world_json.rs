#![no_main]

use libfuzzer_sys::fuzz_target;
use reactnav::WorldSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(world) = WorldSpec::from_json(text) {
        let _ = world.validate();
        WorldSpec::from_json(&world.to_json()).expect("serialized world parses");
    }
});
