#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab_cli::scores::ScoreFile;
use tda_lab_fuzz::frames;

fuzz_target!(|data: &[u8]| {
    let Some(f) = frames(data, 2) else { return };
    if let Ok(s) = ScoreFile::from_bytes(f[1], f[0]) {
        assert_eq!(s.matrix.shape(), (s.meta.rows, s.meta.cols));
        let _ = s.oriented(None);
    }
});
