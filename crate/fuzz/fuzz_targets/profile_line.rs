#![no_main]

use influence_core::event::ProfileSnapshot;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = ProfileSnapshot::parse_line(data);
});
