#![no_main]

use libfuzzer_sys::fuzz_target;
use mmsense_data::Vocab;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(v) = Vocab::from_text(text) {
        let back = Vocab::from_text(&v.to_text()).expect("own encoding decodes");
        assert_eq!(back.tokens(), v.tokens());
        let ids: Vec<u32> = (0..v.tokens().len() as u32).collect();
        let _ = v.decode(&ids);
    }
});
