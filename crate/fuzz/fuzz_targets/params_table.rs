#![no_main]

use std::sync::Arc;

use hdtwin::dsl::parse_model_spec;
use hdtwin::engine::ParamLayout;
use hdtwin::optim::{format_params_table, params_from_table, parse_params_table};
use libfuzzer_sys::fuzz_target;

const SPEC: &str = "param a = 1\nmlp net(x) hidden [2] act tanh outputs 1\nd(x)/dt = a * x + net[0]\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(entries) = parse_params_table(text) else {
        return;
    };
    let spec = parse_model_spec(SPEC).unwrap();
    let layout = Arc::new(ParamLayout::from_spec(&spec));
    if let Ok(p) = params_from_table(layout.clone(), &entries) {
        let back = parse_params_table(&format_params_table(&p)).expect("formatted table parses");
        let q = params_from_table(layout, &back).expect("formatted table fits its layout");
        assert_eq!(
            p.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            q.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
});
