#![no_main]

use influence_core::features::dump::parse_maxima;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_maxima(data);
});
