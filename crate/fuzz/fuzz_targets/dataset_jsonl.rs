#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab::data::Dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::read_jsonl(data) {
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).expect("valid dataset writes");
        assert_eq!(Dataset::read_jsonl(buf.as_slice()).expect("written dataset reads"), ds);
    }
});
