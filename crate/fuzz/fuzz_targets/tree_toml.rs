#![no_main]

use influence_core::hierarchy::TreeSpec;
use influence_core::registry::FeatureRegistry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = TreeSpec::from_toml(data, &FeatureRegistry::default_config());
});
