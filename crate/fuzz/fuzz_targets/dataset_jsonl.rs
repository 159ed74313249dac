#![no_main]

use iotfp::store::{parse_rows, write_rows};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(dataset) = parse_rows(data) {
        let mut out = Vec::new();
        if write_rows(&mut out, dataset.rows()).is_ok() {
            let again = parse_rows(&out).expect("written rows parse");
            assert_eq!(again.rows(), dataset.rows());
        }
    }
});
