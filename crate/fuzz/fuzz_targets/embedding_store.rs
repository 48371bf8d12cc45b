#![no_main]

use libfuzzer_sys::fuzz_target;
use tda_lab::attr::EmbeddingStore;
use tda_lab_fuzz::frames;

fuzz_target!(|data: &[u8]| {
    let Some(f) = frames(data, 2) else { return };
    let Ok(sidecar) = std::str::from_utf8(f[0]) else { return };
    if let Ok(store) = EmbeddingStore::from_bytes(f[1], sidecar) {
        assert_eq!(store.embeddings().len(), store.len());
    }
});
