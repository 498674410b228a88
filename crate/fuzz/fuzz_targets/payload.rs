#![no_main]

use libfuzzer_sys::fuzz_target;
use mmsense_data::Payload;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = Payload::from_bytes(data) {
        assert_eq!(p.numel(), p.data().len());
        let once = p.to_bytes();
        let back = Payload::from_bytes(&once).expect("own encoding decodes");
        assert_eq!(back.shape(), p.shape());
        assert_eq!(back.to_bytes(), once);
    }
});
