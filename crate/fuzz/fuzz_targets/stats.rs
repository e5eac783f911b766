#![no_main]

use influence_core::pipeline::parse_stats;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_stats(data);
});
