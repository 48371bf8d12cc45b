#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab::data::{parse_manifest, write_manifest, Dataset, DatasetKind, Example, Label};

fuzz_target!(|data: &[u8]| {
    let pool = Dataset::new(
        (0..4).map(|i| Example::new(i, vec![i as f64], Label::Real(0.0))).collect(),
        1,
        DatasetKind::Regression,
    )
    .expect("pool");
    let _ = parse_manifest(data, "pool", Some(&pool));
    if let Ok(subsets) = parse_manifest(data, "pool", None) {
        let mut buf = Vec::new();
        write_manifest(&subsets, &mut buf).expect("manifest writes");
        assert_eq!(parse_manifest(&buf, "pool", None).expect("rereads"), subsets);
    }
});
