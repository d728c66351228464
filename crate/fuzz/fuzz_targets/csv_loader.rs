#![no_main]

use hdtwin::engine::read_trajectory_csv;
use hdtwin::systems::{builtin_system, load_csv_reader, SplitRule};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&which, body)) = data.split_first() else {
        return;
    };
    let id = if which % 2 == 0 { "lv2" } else { "cancer-chemo-radio" };
    let schema = builtin_system(id).unwrap().schema;
    let _ = read_trajectory_csv(body, &schema);
    let rule = if which & 2 == 0 {
        SplitRule::hare_lynx()
    } else {
        SplitRule::Fractions {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    };
    if let Ok(b) = load_csv_reader(body, &schema, &rule, "fuzz") {
        assert!(b.train.trajectories.len() <= 1);
    }
});
