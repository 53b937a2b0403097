#![no_main]

use libfuzzer_sys::fuzz_target;
use spdp_core::Dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ds) = Dataset::parse(text) else { return };
    // Anything accepted must survive a round trip unchanged.
    let again = Dataset::parse(&ds.to_text()).expect("serialized dataset reparses");
    assert_eq!(ds, again);
});
