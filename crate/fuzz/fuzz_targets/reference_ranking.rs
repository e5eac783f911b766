#![no_main]

use influence_core::evaluation::ReferenceRanking;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = ReferenceRanking::parse("fuzz", data);
});
