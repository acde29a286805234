#![no_main]

use decoupled_gzsl::data::parse_labels_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_labels_csv(data);
});
