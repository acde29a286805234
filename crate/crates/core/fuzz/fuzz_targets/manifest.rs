#![no_main]

use decoupled_gzsl::data::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_manifest(text) {
        let again = serde_json::to_string(&m).unwrap();
        assert_eq!(parse_manifest(&again).unwrap(), m);
    }
});
