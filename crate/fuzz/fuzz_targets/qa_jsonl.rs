#![no_main]

use libfuzzer_sys::fuzz_target;
use mmsense_data::curation::{qa_from_jsonl, to_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = qa_from_jsonl(text) {
        let once = to_jsonl(&rows);
        let back = qa_from_jsonl(&once).expect("own encoding decodes");
        assert_eq!(to_jsonl(&back), once);
    }
});
