#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab::models::TrainedModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = TrainedModel::from_bytes(data) {
        assert_eq!(m.theta.len(), m.spec.num_params());
        let again = TrainedModel::from_bytes(&m.to_bytes()).expect("roundtrip");
        assert_eq!(again.theta, m.theta);
    }
});
