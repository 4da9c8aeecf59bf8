#![no_main]
use libfuzzer_sys::fuzz_target;

use sbrtune::textprep::parse_stopwords;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        for w in parse_stopwords(s) {
            assert!(!w.is_empty());
        }
    }
});
