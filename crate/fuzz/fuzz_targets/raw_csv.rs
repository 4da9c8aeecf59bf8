#![no_main]
use libfuzzer_sys::fuzz_target;

use sbrtune::dataset::{read_raw_csv, RawSchema};

fuzz_target!(|data: &[u8]| {
    if let Ok(reports) = read_raw_csv(data, &RawSchema::default()) {
        for r in &reports {
            assert!(r.label <= 1);
        }
    }
});
