#![no_main]

use influence_core::registry::FeatureRegistry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = FeatureRegistry::from_toml(data);
});
