#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    handlm_fuzz::checkpoint_bytes(data);
});
