#![no_main]

use hdtwin::agents::{format_replay, parse_replay};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(entries) = parse_replay(text) {
        let again = parse_replay(&format_replay(&entries)).expect("formatted replay parses");
        assert_eq!(entries, again);
    }
});
