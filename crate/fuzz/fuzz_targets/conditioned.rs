#![no_main]

use libfuzzer_sys::fuzz_target;
use miltremor::pipeline::{decode_conditioned, encode_conditioned};

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = decode_conditioned(data) {
        assert_eq!(encode_conditioned(&c), data);
    }
});
