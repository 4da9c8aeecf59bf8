#![no_main]
use libfuzzer_sys::fuzz_target;

use sbrtune::textprep::{tokenize_with, TokenizeOptions};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        for keep_alphanumeric in [false, true] {
            for tok in tokenize_with(s, TokenizeOptions { keep_alphanumeric }) {
                assert!(tok.chars().count() >= 2);
                assert!(tok.chars().all(char::is_alphanumeric));
            }
        }
    }
});
