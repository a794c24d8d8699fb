#![no_main]

use libfuzzer_sys::fuzz_target;
use miltremor::bags::{decode_bag, encode_bag};

fuzz_target!(|data: &[u8]| {
    if let Ok(bag) = decode_bag(data) {
        assert!(bag.real_count() <= bag.capacity);
        assert_eq!(encode_bag(&bag), data, "accepted caches are canonical");
    }
});
