#![no_main]

use influence_core::codec::Record;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(r) = Record::parse(data) {
        let again = Record::parse(&r.to_string()).expect("written record must parse");
        assert_eq!(r, again);
    }
});
