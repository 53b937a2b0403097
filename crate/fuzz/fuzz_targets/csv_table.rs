#![no_main]

use libfuzzer_sys::fuzz_target;
use spdp_harness::Table;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(t) = Table::parse(text) else { return };
    assert!(t.records.iter().all(|r| r.len() == t.headers.len()));
    if let (Some(x), Some(y)) = (t.headers.first(), t.headers.last()) {
        let _ = t.pairs(x, y, None);
    }
});
