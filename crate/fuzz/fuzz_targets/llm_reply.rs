#![no_main]

use hdtwin::agents::{extract_reply_text, parse_reply};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_reply(text);
    if let Ok(inner) = extract_reply_text(text) {
        let _ = parse_reply(&inner);
    }
});
