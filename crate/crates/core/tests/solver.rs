use fiberpca::metrics::{prf, relative_error};
use fiberpca::prox::SvdBackend;
use fiberpca::solver::{
    horpca_fiber, robust_completion, solve, MuInit, OutlierThreshold, Regularizer, SolverConfig, UpdateOrder,
};
use fiberpca::synth::SynthSpec;
use fiberpca::{DenseTensor, ObservationMask};

fn cfg(shape: &[usize]) -> SolverConfig {
    SolverConfig::for_shape(shape, Regularizer::L21)
}

#[test]
fn exact_recovery_under_full_observation() {
    let g = SynthSpec::cube(30, 3, 3, 0.1, 1.0, 2).generate().unwrap();
    let r = horpca_fiber(&g.b, &cfg(g.b.shape())).unwrap();
    assert!(r.converged);
    assert_eq!(r.outlier_fibers, g.outlier_support);
    let re = relative_error(r.x_hat(), &g.x0, &r.outlier_fibers, 0).unwrap();
    assert!(re <= 1e-6, "RE {re}");
    assert!(*r.residuals.last().unwrap() <= 1e-7);
    assert!(r.o_hat().data().iter().all(|&v| v == 0.0));
}

#[test]
fn completion_recovers_support_from_partial_observation() {
    let g = SynthSpec::cube(30, 3, 2, 0.05, 0.8, 4).generate().unwrap();
    let r = robust_completion(&g.b, &g.mask, &cfg(g.b.shape())).unwrap();
    assert!(r.converged);
    let p = prf(&r.outlier_fibers, &g.outlier_support);
    assert_eq!((p.fp, p.fn_), (0, 0));
    assert!(relative_error(r.x_hat(), &g.x0, &r.outlier_fibers, 0).unwrap() <= 1e-5);
}

#[test]
fn full_mask_completion_equals_full_solver() {
    for seed in 0..10 {
        let g = SynthSpec::cube(10, 3, 2, 0.1, 1.0, seed).generate().unwrap();
        let c = cfg(g.b.shape());
        let a = horpca_fiber(&g.b, &c).unwrap();
        let b = robust_completion(&g.b, &ObservationMask::full(g.b.shape()).unwrap(), &c).unwrap();
        let d = a.x_hat().sub(b.x_hat()).unwrap().frob_norm() / a.x_hat().frob_norm();
        assert!(d <= 1e-8, "seed {seed}: {d}");
        assert_eq!(a.outlier_fibers, b.outlier_fibers);
        assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn compensation_vanishes_on_observed_entries() {
    let g = SynthSpec::cube(12, 3, 2, 0.1, 0.6, 8).generate().unwrap();
    let observed = g.mask.as_slice().to_vec();
    let mut sweeps = 0;
    let mut worst_outside = 0.0f64;
    let r = solve(&g.b, Some(&g.mask), &cfg(g.b.shape()), &mut |s| {
        sweeps += 1;
        for (k, &v) in s.o.data().iter().enumerate() {
            if observed[k] {
                assert_eq!(v, 0.0, "O nonzero on an observed entry at sweep {}", s.iteration);
            } else {
                worst_outside = worst_outside.max(v.abs());
            }
        }
    })
    .unwrap();
    assert_eq!(sweeps, r.iterations);
    assert!(worst_outside > 0.0);
}

#[test]
fn detection_is_invariant_to_scaling_the_data() {
    let g = SynthSpec::cube(20, 3, 2, 0.1, 1.0, 6).generate().unwrap();
    let c = cfg(g.b.shape());
    let base = horpca_fiber(&g.b, &c).unwrap();
    for s in [0.01, 7.5, 1e3] {
        let r = horpca_fiber(&g.b.scale(s), &c).unwrap();
        assert_eq!(r.outlier_fibers, base.outlier_fibers, "scale {s}");
        assert!((r.mu_initial * s - base.mu_initial).abs() <= 1e-9 * base.mu_initial);
        let d = r.x_hat().scale(1.0 / s).sub(base.x_hat()).unwrap().frob_norm() / base.x_hat().frob_norm();
        assert!(d <= 1e-6, "scale {s}: {d}");
    }
}

#[test]
fn clean_input_flags_nothing() {
    let g = SynthSpec::cube(20, 3, 2, 0.0, 1.0, 1).generate().unwrap();
    let r = horpca_fiber(&g.b, &cfg(g.b.shape())).unwrap();
    assert!(r.converged);
    assert!(r.outlier_fibers.is_empty());
    assert!(r.e_hat().frob_norm() <= 1e-6 * g.b.frob_norm());
    assert!(relative_error(r.x_hat(), &g.x0, &[], 0).unwrap() <= 1e-6);
}

#[test]
fn outlier_mode_follows_a_permuted_tensor() {
    let g = SynthSpec::cube(20, 3, 2, 0.1, 1.0, 3).generate().unwrap();
    // swap modes 0 and 1: old mode-0 fiber j becomes mode-1 fiber j
    let swapped = DenseTensor::from_fn(g.b.shape(), |i| g.b.get(&[i[1], i[0], i[2]]).unwrap()).unwrap();
    let mut c = cfg(swapped.shape());
    c.outlier_mode = 1;
    let r = horpca_fiber(&swapped, &c).unwrap();
    assert_eq!(r.outlier_fibers, g.outlier_support);
}

#[test]
fn variants_agree_with_the_default_run() {
    let g = SynthSpec::cube(30, 3, 3, 0.1, 1.0, 12).generate().unwrap();
    let base = horpca_fiber(&g.b, &cfg(g.b.shape())).unwrap();
    assert_eq!(base.outlier_fibers, g.outlier_support);

    let mut c = cfg(g.b.shape());
    c.svd_backend = SvdBackend::Gram;
    let gram = horpca_fiber(&g.b, &c).unwrap();
    assert_eq!(gram.outlier_fibers, base.outlier_fibers);
    let d = gram.x_hat().sub(base.x_hat()).unwrap().frob_norm() / base.x_hat().frob_norm();
    assert!(d <= 1e-6, "{d}");

    let mut c = cfg(g.b.shape());
    c.update_order = UpdateOrder::LowRankFirst;
    let lr = horpca_fiber(&g.b, &c).unwrap();
    assert!(lr.converged);
    assert_eq!(lr.outlier_fibers, base.outlier_fibers);

    let constant = horpca_fiber(&g.b, &cfg(g.b.shape()).with_constant_mu()).unwrap();
    assert_eq!(constant.mu_initial, constant.mu_final);
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let g = SynthSpec::cube(15, 3, 2, 0.1, 1.0, 0).generate().unwrap();
    let mut c = cfg(g.b.shape());
    c.max_iters = 3;
    let r = horpca_fiber(&g.b, &c).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 3);
    assert_eq!(r.residuals.len(), 3);
}

#[test]
fn invalid_configs_are_rejected() {
    let b = DenseTensor::zeros(&[3, 3, 3]).unwrap();
    let base = cfg(b.shape());
    let bad = [
        SolverConfig {
            lambda: 0.0,
            ..base.clone()
        },
        SolverConfig {
            epsilon: -1.0,
            ..base.clone()
        },
        SolverConfig {
            mu_init: MuInit::Value(0.0),
            ..base.clone()
        },
        SolverConfig {
            outlier_mode: 3,
            ..base.clone()
        },
        SolverConfig {
            outlier_threshold: OutlierThreshold::Absolute(-1.0),
            ..base.clone()
        },
    ];
    for c in bad {
        assert!(horpca_fiber(&b, &c).is_err());
    }
}

#[test]
fn solver_config_json_roundtrip() {
    let c = cfg(&[30, 30, 30]);
    let json = serde_json::to_string(&c).unwrap();
    let back: SolverConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), json);
}

#[test]
fn solver_config_json_is_exact_and_strict() {
    let c: SolverConfig = serde_json::from_str(r#"{"lambda":1.23809523809523808}"#).unwrap();
    assert_eq!(c.lambda, 1.238095238095238_1);
    let again: SolverConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(again, c);
    assert!(serde_json::from_str::<SolverConfig>(r#"{"max_itee":5}"#).is_err());
}
