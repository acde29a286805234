#![no_main]

use decoupled_gzsl::data::parse_embeddings_csv;
use libfuzzer_sys::fuzz_target;

// First byte picks the declared width.
fuzz_target!(|data: &[u8]| {
    let Some((&w, body)) = data.split_first() else { return };
    let width = 1 + (w % 16) as usize;
    if let Ok(t) = parse_embeddings_csv(body, width) {
        assert_eq!(t.width(), width);
        for c in t.classes() {
            assert_eq!(t.get(c).unwrap().len(), width);
        }
    }
});
