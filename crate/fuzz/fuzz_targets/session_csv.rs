#![no_main]

use libfuzzer_sys::fuzz_target;
use miltremor::ingest::{parse_session_csv, validate_session, write_session_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(raw) = parse_session_csv(text, "s", "s.csv") {
        let report = validate_session(&raw);
        if let Some(m) = report.missing_fraction {
            assert!((0.0..=1.0).contains(&m));
        }
        let again = parse_session_csv(&write_session_csv(&raw), "s", "s.csv").expect("written CSV parses");
        assert_eq!(again.timestamps.len(), raw.timestamps.len());
    }
});
