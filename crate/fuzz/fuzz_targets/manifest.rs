#![no_main]

use libfuzzer_sys::fuzz_target;
use mmsense_data::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = Manifest::from_jsonl(text) {
        let once = m.to_jsonl();
        let back = Manifest::from_jsonl(&once).expect("own encoding decodes");
        assert_eq!(back.len(), m.len());
        assert_eq!(back.to_jsonl(), once);
    }
});
