#![no_main]
use libfuzzer_sys::fuzz_target;

use sbrtune::textprep::{read_vocabulary_csv, write_vocabulary_csv};

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    if let Ok(v) = read_vocabulary_csv(rest, n as usize) {
        let mut out = Vec::new();
        write_vocabulary_csv(&v, &mut out).unwrap();
        assert_eq!(read_vocabulary_csv(out.as_slice(), n as usize).unwrap(), v);
    }
});
