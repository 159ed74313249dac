#![no_main]

use iotfp::store::{decode_model, encode_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((model, provenance)) = decode_model(data) {
        let bytes = encode_model(&model, &provenance);
        let (again, prov_again) = decode_model(&bytes).expect("encoded model decodes");
        assert_eq!(encode_model(&again, &prov_again), bytes);
    }
});
