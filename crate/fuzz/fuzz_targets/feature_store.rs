#![no_main]

use influence_core::features::dump::parse_feature_store;
use influence_core::registry::FeatureRegistry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_feature_store(data, &FeatureRegistry::default_config());
});
