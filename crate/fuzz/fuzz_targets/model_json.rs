#![no_main]
use libfuzzer_sys::fuzz_target;

use sbrtune::learners::FittedModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(model) = FittedModel::from_json(s) {
            let text = model.to_json().unwrap();
            assert_eq!(FittedModel::from_json(&text).unwrap().to_json().unwrap(), text);
        }
    }
});
