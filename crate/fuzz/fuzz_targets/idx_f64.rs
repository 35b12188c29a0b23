#![no_main]

use libfuzzer_sys::fuzz_target;
use lnmask::data::{encode_idx_f64, parse_idx_f64};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_idx_f64(data) {
        assert!(img.pixels.iter().all(|v| v.is_finite()));
        let again = parse_idx_f64(&encode_idx_f64(img.count, img.rows, img.cols, &img.pixels)).unwrap();
        assert_eq!(again, img);
    }
});
