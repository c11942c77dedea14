#![no_main]

use clairaut_cli::input::{parse_number, split_assignment};
use clairaut_cli::parse_convention;
use clairaut_cli::transform::Axis;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(axis) = Axis::parse(text) {
        if axis.count <= 1 << 16 {
            assert_eq!(axis.values().len(), axis.count);
        }
    }
    if let Ok((k, v)) = split_assignment(text) {
        let _ = parse_number(k, v);
    }
    let _ = parse_convention(text);
});
