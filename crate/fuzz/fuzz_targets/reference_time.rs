#![no_main]

use influence_core::pipeline::parse_reference_time;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_reference_time(data);
});
