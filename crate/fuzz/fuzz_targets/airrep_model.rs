#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab::airrep::AirRepModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = AirRepModel::from_bytes(data) {
        assert_eq!(AirRepModel::from_bytes(&m.to_bytes()).expect("roundtrip"), m);
    }
});
