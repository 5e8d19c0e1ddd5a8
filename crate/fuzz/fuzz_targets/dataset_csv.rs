#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = dpss::data::parse_dataset(data) {
        assert!(d.is_finite());
        let mut out = Vec::new();
        dpss::data::write_dataset_to(&d, &mut out).unwrap();
        let back = dpss::data::parse_dataset(out.as_slice()).unwrap();
        assert_eq!(back.n(), d.n());
        assert_eq!(back.p(), d.p());
    }
});
