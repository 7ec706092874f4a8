#![no_main]

use libfuzzer_sys::fuzz_target;
use sandnet::scenario::{parse_scenario, serialize_scenario};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_scenario(text) {
        let written = serialize_scenario(&spec);
        let again = parse_scenario(&written).expect("serialized scenario parses");
        assert_eq!(spec, again);
        assert_eq!(written, serialize_scenario(&again));
    }
});
