#![no_main]

use influence_core::codec::Record;
use influence_core::event::UserIdentity;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(r) = Record::parse(data) {
        let _ = UserIdentity::from_record(&r);
    }
});
