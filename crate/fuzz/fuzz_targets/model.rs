#![no_main]

use influence_core::registry::FeatureRegistry;
use influence_core::training::parse_model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_model(data, &FeatureRegistry::default_config());
});
