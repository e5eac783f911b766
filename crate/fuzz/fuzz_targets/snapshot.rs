#![no_main]

use influence_core::hierarchy::parse_snapshot;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_snapshot(data);
});
