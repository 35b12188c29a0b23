#![no_main]

use libfuzzer_sys::fuzz_target;
use lnmask::data::{encode_idx_images, parse_idx_images};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_idx_images(data) {
        assert_eq!(img.pixels.len(), img.count * img.rows * img.cols);
        let again = parse_idx_images(&encode_idx_images(img.count, img.rows, img.cols, &img.pixels)).unwrap();
        assert_eq!(again, img);
    }
});
