#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Any input must yield a spec or a typed error, never a panic.
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = sandnet::scenario::parse_scenario(text);
    }
});
