#![no_main]

use libfuzzer_sys::fuzz_target;
use miltremor::mil::MilModel;
use miltremor::nn::decode_checkpoint;

fuzz_target!(|data: &[u8]| {
    if decode_checkpoint(data).is_ok() {
        let _ = MilModel::<f32>::from_checkpoint(data);
    }
});
