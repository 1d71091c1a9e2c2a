#![no_main]

use libfuzzer_sys::fuzz_target;
use licfg::nn::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = decode(data) {
        assert_eq!(decode(&encode(&params)).unwrap(), params);
    }
});
