#![no_main]

use fiberpca::ingest::{build_tensor, infer_range, read_speed_records, BuildOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let strict = data.first().is_some_and(|b| b & 1 == 1);
    let Ok(parsed) = read_speed_records(data, strict) else {
        return;
    };
    if strict {
        assert!(parsed.skipped.is_empty());
    }
    for r in &parsed.records {
        assert!(r.speed.is_finite());
    }
    // keep the tensor small enough that one input cannot exhaust memory
    if let Ok(range) = infer_range(&parsed.records, chrono_tz::UTC) {
        if range.weeks <= 8 && parsed.records.len() <= 4096 {
            if let Ok(tt) = build_tensor(&parsed.records, &BuildOptions::new(range)) {
                assert!((0.0..=1.0).contains(&tt.observation_ratio));
            }
        }
    }
});
