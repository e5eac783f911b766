#![no_main]

use influence_core::event::GraphEdge;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(e) = GraphEdge::parse_line(data) {
        assert_eq!(
            GraphEdge::parse_line(&e.to_record().to_string()).unwrap(),
            e
        );
    }
});
