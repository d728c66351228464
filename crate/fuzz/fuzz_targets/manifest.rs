#![no_main]

use hdtwin::engine::{BundleManifest, SplitManifest};
use hdtwin::orchestrator::RunManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = BundleManifest::from_toml_str(text);
    let _ = SplitManifest::from_toml_str(text);
    if let Ok(m) = toml::from_str::<RunManifest>(text) {
        let _ = toml::to_string(&m);
    }
});
