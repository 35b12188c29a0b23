#![no_main]

use std::io::Write;

use libfuzzer_sys::fuzz_target;
use lnmask::training::read_metrics_csv;

fuzz_target!(|data: &[u8]| {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(data).unwrap();
    let _ = read_metrics_csv(f.path());
});
