#![no_main]

use libfuzzer_sys::fuzz_target;
use miltremor::pipeline::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml(text) {
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.hash().len(), 16);
    }
});
