#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab_cli::config::parse_overrides;

// NUL-separated argv tail.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let args: Vec<String> = s.split('\0').map(String::from).collect();
    if let Ok(pairs) = parse_overrides(&args) {
        assert!(pairs.len() <= args.len());
    }
});
