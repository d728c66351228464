#![no_main]

use hdtwin::dsl::{canonicalize, parse_model_spec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = parse_model_spec(text) else {
        return;
    };
    // Canonical text must parse back to the same spec and be a fixed point.
    let canon = canonicalize(&spec);
    let again = parse_model_spec(&canon).expect("canonical text parses");
    assert!(spec.structurally_eq(&again));
    assert_eq!(canon, canonicalize(&again));
});
