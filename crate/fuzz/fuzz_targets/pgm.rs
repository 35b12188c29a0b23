#![no_main]

use libfuzzer_sys::fuzz_target;
use lnmask::data::parse_pgm;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_pgm(data) {
        assert_eq!(img.values.len(), img.width * img.height);
    }
});
