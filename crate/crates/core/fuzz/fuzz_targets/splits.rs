#![no_main]

use decoupled_gzsl::data::parse_splits;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_splits(text) {
        let again = serde_json::to_string(&s).unwrap();
        assert_eq!(parse_splits(&again).unwrap(), s);
    }
});
