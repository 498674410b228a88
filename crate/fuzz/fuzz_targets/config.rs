//! Run-config TOML. Valid configs survive a serialise/parse cycle with the
//! same content hash.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mmsense_core::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        let back = RunConfig::from_toml(&cfg.to_toml()).expect("own encoding parses");
        assert_eq!(back.hash(), cfg.hash());
    }
});
