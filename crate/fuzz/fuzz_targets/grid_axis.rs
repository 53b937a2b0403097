#![no_main]

use libfuzzer_sys::fuzz_target;
use spdp_harness::grid::{parse_axis, parse_value};

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = std::str::from_utf8(data) else { return };
    if let Ok(axis) = parse_axis(spec) {
        assert!(!axis.values.is_empty());
        assert!(axis.values.iter().all(|v| v.is_finite()));
    }
    if let Ok(v) = parse_value(spec) {
        assert!(v.is_finite());
    }
});
