#![no_main]

use influence_core::event::PairwiseLabel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(l) = PairwiseLabel::parse_line(data) {
        assert_eq!(
            PairwiseLabel::parse_line(&l.to_record().to_string()).unwrap(),
            l
        );
    }
});
