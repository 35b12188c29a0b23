#![no_main]

use libfuzzer_sys::fuzz_target;
use lnmask::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        assert_eq!(Checkpoint::decode(&ck.encode()).unwrap(), ck);
    }
});
