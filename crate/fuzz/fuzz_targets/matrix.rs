#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab::matrix::Matrix;

// First 16 bytes are the claimed shape (two u64 LE), the rest is the payload.
fuzz_target!(|data: &[u8]| {
    if data.len() < 16 {
        return;
    }
    let rows = u64::from_le_bytes(data[..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(data[8..16].try_into().unwrap()) as usize;
    if let Ok(m) = Matrix::from_le_bytes(&data[16..], rows, cols) {
        assert_eq!(m.to_le_bytes(), &data[16..]);
    }
});
