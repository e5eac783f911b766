#![no_main]

use libfuzzer_sys::fuzz_target;
use std::path::Path;

use influence_core::pipeline::{Overrides, RunConfig};

fuzz_target!(|data: &str| {
    let _ = RunConfig::from_toml(data, Path::new("/nonexistent"), &Overrides::default());
});
