#![no_main]

use influence_core::pipeline::parse_user_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    for id in parse_user_list(data) {
        assert!(!id.is_empty() && !id.starts_with('#'));
    }
});
