#![no_main]
use libfuzzer_sys::fuzz_target;

use sbrtune::dataset::{read_matrix_csv, write_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = read_matrix_csv(data, "label") {
        let mut out = Vec::new();
        write_matrix(&m, &mut out).unwrap();
        let again = read_matrix_csv(out.as_slice(), "label").unwrap();
        assert_eq!(again.labels(), m.labels());
        assert_eq!(again.column_names(), m.column_names());
    }
});
