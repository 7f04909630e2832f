#![no_main]

use fiberpca::SolverConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = serde_json::from_slice::<SolverConfig>(data) else {
        return;
    };
    for order in 1..=4 {
        if cfg.validate(order).is_ok() {
            let json = serde_json::to_string(&cfg).unwrap();
            let back: SolverConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(serde_json::to_string(&back).unwrap(), json);
        }
    }
});
