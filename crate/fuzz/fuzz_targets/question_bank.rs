#![no_main]

use libfuzzer_sys::fuzz_target;
use mmsense_data::curation::QuestionBank;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(bank) = QuestionBank::from_text(text) {
        let back = QuestionBank::from_text(&bank.to_text()).expect("own encoding decodes");
        assert_eq!(back.questions(), bank.questions());
    }
});
