#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&p, rest)) = data.split_first() else { return };
    let p = usize::from(p % 64) + 1;
    if let Ok(beta) = dpss::data::parse_coefficients(rest, p) {
        assert_eq!(beta.len(), p);
    }
});
