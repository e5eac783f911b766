#![no_main]

use influence_core::event::InteractionEvent;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(e) = InteractionEvent::parse_line(data) {
        assert_eq!(
            InteractionEvent::parse_line(&e.to_record().to_string()).unwrap(),
            e
        );
    }
});
