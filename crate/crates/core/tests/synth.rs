use fiberpca::prox::svd;
use fiberpca::synth::{round_half_up, sample_mask, stream_rng, SynthSpec, STREAM_MASK};
use fiberpca::tensor::unfold;
use fiberpca::DenseTensor;
use proptest::prelude::*;

#[test]
fn tucker_rank_five_at_twenty_cubed() {
    let g = SynthSpec::cube(20, 3, 5, 0.0, 1.0, 11).generate().unwrap();
    for n in 0..3 {
        let s = svd(&unfold(&g.x0, n).unwrap()).unwrap().singular_values;
        assert!(s[4] > 1e-6 * s[0], "mode {n}: σ5 too small");
        assert!(s[5] < 1e-10 * s[0], "mode {n}: σ6/σ1 = {}", s[5] / s[0]);
    }
}

#[test]
fn sixth_singular_value_vanishes_at_seventy_cubed() {
    let clean = SynthSpec::cube(70, 3, 5, 0.0, 1.0, 0).generate().unwrap().x0;
    for n in 0..3 {
        let s = svd(&unfold(&clean, n).unwrap()).unwrap().singular_values;
        assert!(s[5] / s[0] < 1e-10, "mode {n}: σ6/σ1 = {}", s[5] / s[0]);
    }
}

#[test]
fn corruption_matches_its_description() {
    let spec = SynthSpec::cube(12, 3, 2, 0.1, 0.6, 5);
    let g = spec.generate().unwrap();
    let p = 144;
    assert_eq!(g.outlier_support.len(), round_half_up(0.1 * p as f64));
    assert!(g.outlier_support.windows(2).all(|w| w[0] < w[1]));
    let rows = 12;
    for j in 0..p {
        let e = &g.e0.data()[j * rows..(j + 1) * rows];
        let x = &g.x0.data()[j * rows..(j + 1) * rows];
        if g.outlier_support.binary_search(&j).is_ok() {
            assert!(e.iter().all(|v| (0.0..1.0).contains(v)));
            assert!(x.iter().all(|&v| v == 0.0));
        } else {
            assert!(e.iter().all(|&v| v == 0.0));
        }
    }
    assert_eq!(g.mask.observed_count(), round_half_up(0.6 * 1728.0));
    let want = g.mask.apply(&g.x0.add(&g.e0).unwrap()).unwrap();
    assert_eq!(g.b, want);
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let a = SynthSpec::cube(10, 3, 2, 0.1, 0.7, 3).generate().unwrap();
    let b = SynthSpec::cube(10, 3, 2, 0.1, 0.7, 3).generate().unwrap();
    let c = SynthSpec::cube(10, 3, 2, 0.1, 0.7, 4).generate().unwrap();
    assert_eq!(a.b, b.b);
    assert_eq!(a.mask, b.mask);
    assert_ne!(a.b, c.b);
}

#[test]
fn streams_are_independent_of_other_parameters() {
    // changing ρ must not move the corruption or the low-rank part
    let a = SynthSpec::cube(10, 3, 2, 0.1, 1.0, 9).generate().unwrap();
    let b = SynthSpec::cube(10, 3, 2, 0.1, 0.5, 9).generate().unwrap();
    assert_eq!(a.x0, b.x0);
    assert_eq!(a.e0, b.e0);
    assert_eq!(a.outlier_support, b.outlier_support);
}

#[test]
fn mask_inclusion_rate_monte_carlo() {
    let shape = [10, 10, 10];
    let draws = 200;
    let probe = 100;
    let mut hits = 0usize;
    for d in 0..draws {
        let m = sample_mask(&shape, 0.3, &mut stream_rng(d, STREAM_MASK)).unwrap();
        assert_eq!(m.observed_count(), 300);
        hits += m.as_slice()[..probe].iter().filter(|&&o| o).count();
    }
    let rate = hits as f64 / (draws as usize * probe) as f64;
    assert!((rate - 0.3).abs() <= 0.02, "inclusion rate {rate}");
}

#[test]
fn spec_json_roundtrip_and_validation() {
    let spec = SynthSpec::cube(30, 3, 3, 0.2, 0.8, 42);
    let back = SynthSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(back.to_json(), spec.to_json());
    for bad in [
        r#"{"shape":[10,10],"tucker_rank":[11,2],"gamma":0.1,"rho":1,"seed":0}"#,
        r#"{"shape":[10,10],"tucker_rank":[2,2],"gamma":1.5,"rho":1,"seed":0}"#,
        r#"{"shape":[10,10],"tucker_rank":[2,2],"gamma":0.1,"rho":0,"seed":0}"#,
        r#"{"shape":[10,10],"tucker_rank":[2],"gamma":0.1,"rho":1,"seed":0}"#,
        r#"not json"#,
        r#"{"shape":[222222222222227,8,8],"tucker_rank":[2,2,4],"gamma":0.1,"rho":0.8,"seed":3}"#,
        r#"{"shape":[8,8],"tucker_rank":[2,2],"gamma":0.1,"rho":0.8,"sede":3}"#,
    ] {
        assert!(SynthSpec::from_json(bad).is_err(), "{bad}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_half_up_oracle(n in 0u32..10_000) {
        let x = n as f64 / 100.0;
        prop_assert_eq!(round_half_up(x), (n + 50) as usize / 100);
    }

    #[test]
    fn zero_gamma_means_no_corruption(size in 4usize..9, seed in any::<u64>()) {
        let g = SynthSpec::cube(size, 3, 2, 0.0, 1.0, seed).generate().unwrap();
        prop_assert!(g.outlier_support.is_empty());
        prop_assert_eq!(g.e0, DenseTensor::zeros(&[size; 3]).unwrap());
        prop_assert_eq!(g.b, g.x0);
    }
}
