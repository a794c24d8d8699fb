#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use miltremor::ingest::{parse_manifest, LabelSet};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_manifest(text, Path::new("base")) {
        for e in entries {
            assert!(LabelSet::from_annotation(&e.annotation).0.iter().all(|&l| l <= 1));
        }
    }
});
