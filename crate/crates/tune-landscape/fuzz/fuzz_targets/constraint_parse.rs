#![no_main]

use libfuzzer_sys::fuzz_target;
use tune_landscape::constraint;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing must never panic, and anything that parses must
    // round-trip structurally through its rendering.
    if let Ok(expr) = constraint::parse(src) {
        let rendered = expr.to_string();
        let reparsed = constraint::parse(&rendered).expect("rendering must reparse");
        assert_eq!(reparsed, expr, "round trip changed the expression");
        let lookup = |_: &str| Some(3i64);
        let _ = constraint::evaluate(&expr, &lookup);
    }
    let _ = constraint::parse_any(src);
});
