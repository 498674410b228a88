//! Checkpoint decoding at both precisions. Accepted inputs must re-encode to
//! a fixed point.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mmsense_tensor::{checkpoint, Float};

fn round_trip<T: Float>(data: &[u8]) {
    let Ok(ckpt) = checkpoint::from_bytes::<T>(data) else {
        return;
    };
    let meta = ckpt.metadata.clone();
    let once = checkpoint::to_bytes(&ckpt.into_store(), &meta).expect("decoded store encodes");
    let again = checkpoint::from_bytes::<T>(&once).expect("own encoding decodes");
    let twice = checkpoint::to_bytes(&again.into_store(), &meta).unwrap();
    assert_eq!(once, twice);
}

fuzz_target!(|data: &[u8]| {
    round_trip::<f32>(data);
    round_trip::<f64>(data);
});
