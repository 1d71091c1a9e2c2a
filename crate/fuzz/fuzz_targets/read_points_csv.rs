#![no_main]

use libfuzzer_sys::fuzz_target;
use licfg::data::{read_points_csv, write_points_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = read_points_csv(data) {
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &points).unwrap();
        let back = read_points_csv(buf.as_slice()).expect("written points must parse");
        assert_eq!(back.rows(), points.rows());
    }
});
