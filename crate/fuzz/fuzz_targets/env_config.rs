#![no_main]

use iotfp::synthgen::EnvConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = EnvConfig::parse(text) {
            let _ = cfg.to_spec();
        }
    }
});
