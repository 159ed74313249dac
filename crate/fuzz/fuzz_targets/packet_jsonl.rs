#![no_main]

use iotfp::flowcore::io::{assemble, read_packets};
use iotfp::flowcore::FlowConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = assemble(read_packets(data), FlowConfig::default(), None) {
        for r in &records {
            assert!(r.duration() <= 30.0);
            assert!(r.validate(50, 30.0).is_ok());
        }
    }
});
