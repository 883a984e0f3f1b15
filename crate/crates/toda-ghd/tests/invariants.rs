use proptest::prelude::*;
use toda_ghd::dressing::{DosGrid, DressingSolution};
use toda_ghd::dynamics::{evolve, hamiltonian_flaschka, IntegratorConfig};
use toda_ghd::ensemble::{sample_thermal, sample_thermal_replica, ThermalParams};
use toda_ghd::harness::{run, ExperimentConfig, RunOptions};
use toda_ghd::proxy::{build_s, dominance_margin};
use toda_ghd::scattering::{CutoffChi, SoftLog};
use toda_ghd::spectral::{build_lax, eigenvalues};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampling_is_keyed_by_site(theta in 0.05f64..3.0, seed in 0u64..10_000, lo in -20i64..20, len in 4i64..40) {
        let p = ThermalParams::new_unchecked_alpha(1.0, theta).unwrap();
        let big = sample_thermal(&p, -30, 70, seed).unwrap();
        let sub = sample_thermal(&p, lo, lo + len, seed).unwrap();
        let off = (lo + 30) as usize;
        prop_assert_eq!(&sub.b[..], &big.b[off..off + sub.len()]);
        prop_assert_eq!(&sub.a[..sub.len() - 1], &big.a[off..off + sub.len() - 1]);
        prop_assert_eq!(sub.a[sub.len() - 1], 0.0);
        let other = sample_thermal_replica(&p, lo, lo + len, seed, 1).unwrap();
        prop_assert_ne!(&other.b, &sub.b);
    }

    #[test]
    fn lax_trace_invariants(theta in 0.1f64..3.0, seed in 0u64..10_000, n in 2i64..60) {
        let p = ThermalParams::new_unchecked_alpha(1.0, theta).unwrap();
        let st = sample_thermal(&p, 0, n - 1, seed).unwrap();
        let eig = eigenvalues(&build_lax(&st)).unwrap();
        let tr: f64 = st.b.iter().sum();
        let tr2: f64 = st.b.iter().map(|b| b * b).sum::<f64>() + 2.0 * st.a.iter().map(|a| a * a).sum::<f64>();
        let scale = 1.0 + tr2;
        prop_assert!((eig.iter().sum::<f64>() - tr).abs() < 1e-10 * scale);
        prop_assert!((eig.iter().map(|l| l * l).sum::<f64>() - tr2).abs() < 1e-10 * scale);
        prop_assert!(eig.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn chi_is_monotone_bounded_and_signed(m in 0.5f64..50.0, alpha in prop_oneof![-3.0f64..-0.01, 0.01f64..3.0], x in -200.0f64..200.0) {
        let chi = CutoffChi::new(m, alpha).unwrap();
        let sgn = alpha.signum();
        let v = chi.value(x) * sgn;
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(chi.prime(x) * sgn >= 0.0);
        if x <= -m { prop_assert_eq!(v, 0.0); }
        if x >= m { prop_assert_eq!(v, 1.0); }
    }

    #[test]
    fn softlog_dominates_log(x in -1e3f64..1e3, y in -1e3f64..1e3, d in 1e-12f64..1.0) {
        let sl = SoftLog::new(d).unwrap();
        prop_assert!(sl.eval(x) >= x.abs().ln() - 1e-15);
        prop_assert_eq!(sl.eval(x), sl.eval(-x));
        if x.abs() < y.abs() { prop_assert!(sl.eval(x) <= sl.eval(y)); }
    }

    #[test]
    fn s_matrix_is_symmetric(theta in 0.2f64..2.0, seed in 0u64..1_000, m in 2.0f64..20.0) {
        let p = ThermalParams::new(1.0, theta).unwrap();
        let st = sample_thermal(&p, 0, 95, seed).unwrap();
        let lax = build_lax(&st);
        let lambda = eigenvalues(&lax).unwrap();
        let q: Vec<f64> = (0..lambda.len()).map(|k| k as f64 * 1.3 - 40.0).collect();
        let chi = CutoffChi::new(m, p.alpha()).unwrap();
        let s = build_s(&lambda, &q, 10, 80, &chi, &SoftLog::for_size(96), 2.0, 3).unwrap();
        let dense = s.to_dense();
        prop_assert_eq!(dense.nrows(), s.dim());
        prop_assert!((&dense - dense.transpose()).amax() < 1e-12);
        let x: Vec<f64> = (0..s.dim()).map(|i| (i as f64).sin()).collect();
        let y = s.mul(&x);
        let yd = &dense * nalgebra::DVector::from_vec(x);
        prop_assert!(y.iter().zip(yd.iter()).all(|(a, b)| (a - b).abs() < 1e-10 * (1.0 + b.abs())));
        prop_assert!(dominance_margin(&s, 96).min_margin.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_conserves_spectrum_and_energy(theta in 0.2f64..2.0, seed in 0u64..1_000) {
        let p = ThermalParams::new(1.0, theta).unwrap();
        let st = sample_thermal(&p, -8, 23, seed).unwrap();
        let before = eigenvalues(&build_lax(&st)).unwrap();
        let (end, _) = evolve(&st, 3.0, &IntegratorConfig::default(), &[], |_| Ok(())).unwrap();
        let after = eigenvalues(&build_lax(&end)).unwrap();
        prop_assert!((end.time - 3.0).abs() < 1e-12);
        prop_assert!(before.iter().zip(&after).all(|(a, b)| (a - b).abs() < 1e-8));
        prop_assert!((hamiltonian_flaschka(&st) - hamiltonian_flaschka(&end)).abs() < 1e-8 * (1.0 + hamiltonian_flaschka(&st).abs()));
    }

    #[test]
    fn dressing_identities_hold(theta in 0.3f64..3.0, beta in 0.5f64..2.0) {
        let p = ThermalParams::new(beta, theta).unwrap();
        let sol = DressingSolution::solve(&p, DosGrid::default_for(beta).unwrap()).unwrap();
        for (name, r) in sol.residuals().named() {
            prop_assert!(r < 1e-4, "{} = {}", name, r);
        }
    }
}

#[test]
fn config_round_trips_through_json() {
    for entry in std::fs::read_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::from_path(&path).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
    }
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig::from_json(r#"{"experiment": "spacing", "beta": 1, "theta": 0.7, "N": 128, "seeds": [5, 6, 7, 8, 9]}"#).unwrap();
    let one = run(&cfg, &RunOptions { threads: Some(1), out_dir: None }).unwrap();
    let four = run(&cfg, &RunOptions { threads: Some(4), out_dir: None }).unwrap();
    assert_eq!(one.metrics_json(), four.metrics_json());
}

#[test]
fn report_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(r#"{"experiment": "conservation", "beta": 1, "theta": 1, "N": 32, "T": 1, "seeds": [1, 2, 3]}"#).unwrap();
    let report = run(&cfg, &RunOptions { threads: None, out_dir: Some(dir.path().to_path_buf()) }).unwrap();
    assert!(report.passed());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("conservation-report.json")).unwrap()).unwrap();
    assert_eq!(json["per_seed"].as_array().unwrap().len(), 3);
    assert_eq!(std::fs::read_to_string(dir.path().join("conservation-seeds.jsonl")).unwrap().lines().count(), 3);
}
