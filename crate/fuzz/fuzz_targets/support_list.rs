#![no_main]
use libfuzzer_sys::fuzz_target;
use dpss::Support;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = text.parse::<Support>() {
            let again: Support = s.to_one_based_string().parse().unwrap();
            assert_eq!(again, s);
        }
    }
});
