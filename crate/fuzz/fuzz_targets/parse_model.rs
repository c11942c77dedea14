#![no_main]

use clairaut::ModelSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ModelSpec::parse(text) {
        let n = spec.model.n();
        let _ = spec.model.lagrangian_at(&vec![0.1; n], &vec![0.2; n]);
        let _ = spec.model.lagrangian_text();
    }
});
