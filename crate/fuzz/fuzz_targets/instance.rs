#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab::oracle::{CrossValInstance, InstanceParts};
use tda_lab_fuzz::frames;

fuzz_target!(|data: &[u8]| {
    let Some(f) = frames(data, 6) else { return };
    let parts = InstanceParts { valid: f[0], train: f[1], subsets: f[2], shape: f[3], losses: f[4], labels: f[5] };
    if let Ok(inst) = CrossValInstance::from_parts(&parts) {
        assert_eq!(inst.labels.shape(), (inst.m(), inst.n_valid()));
        assert_eq!(inst.degenerate.len(), inst.n_valid());
    }
});
