#![no_main]

use influence_core::evaluation::parse_population;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_population(data);
});
