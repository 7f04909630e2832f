#![no_main]

use fiberpca::synth::SynthSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = SynthSpec::from_json(text) else { return };
    spec.validate().unwrap();
    let back = SynthSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(back.to_json(), spec.to_json());
    let total = spec.shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    if total.is_some_and(|t| t <= 4096) {
        let g = spec.generate().unwrap();
        assert_eq!(g.b.shape(), spec.shape.as_slice());
    }
});
