#![no_main]

use iotfp::flowcore::io::read_flows;
use iotfp::flowcore::FlowConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_flows(data, &FlowConfig::default());
});
