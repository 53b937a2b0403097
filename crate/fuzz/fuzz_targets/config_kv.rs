#![no_main]

use libfuzzer_sys::fuzz_target;
use spdp_harness::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::parse(text) {
        let again = Config::parse(&cfg.to_text()).expect("serialized config reparses");
        assert_eq!(cfg, again);
    }
    let mut cfg = Config::default();
    let _ = cfg.apply_override(text);
});
