use proptest::prelude::{prop_assert, proptest};

use super::*;
use crate::network::{AiqnModel, ModelSpec, TauMode};
use crate::numerics::{AnalyticDist, Rng, Tensor};

fn random_model(spec: ModelSpec, seed: u64) -> AiqnModel {
    let mut rng = Rng::new(seed);
    let mut m = AiqnModel::new(spec, &mut rng).unwrap();
    for t in m.params_mut().tensors_mut() {
        for v in t.data_mut() {
            if *v != 0.0 {
                *v += 0.2 * rng.normal();
            }
        }
    }
    m
}

fn levels(seed: u64, i: usize, n: usize) -> Vec<f64> {
    let mut rng = Rng::new(seed).fork(i as u64);
    (0..n).map(|_| rng.uniform()).collect()
}

#[test]
fn teacher_forcing_a_sample_reproduces_it() {
    let spec = ModelSpec::new(4).with_ordering(vec![2, 0, 3, 1]);
    let m = random_model(spec, 3);
    let s = sample(&m, &SampleRequest::new(6, 11)).unwrap();
    for i in 0..6 {
        let tau = Tensor::new(vec![1, 4], levels(11, i, 4)).unwrap();
        let x = Tensor::new(vec![1, 4], s.row(i).to_vec()).unwrap();
        let out = m.forward(&x, &tau, None).unwrap();
        for d in 0..4 {
            assert!((out.data()[d] - s.get2(i, d)).abs() < 1e-12);
        }
    }
}

#[test]
fn samples_do_not_depend_on_the_request_size() {
    let m = random_model(ModelSpec::new(3), 5);
    let a = sample(&m, &SampleRequest::new(4, 9)).unwrap();
    let b = sample(&m, &SampleRequest::new(700, 9)).unwrap();
    assert_eq!(a.data(), &b.data()[..12]);
    assert_eq!(b, sample(&m, &SampleRequest::new(700, 9)).unwrap());
    assert_ne!(a, sample(&m, &SampleRequest::new(4, 10)).unwrap());
}

#[test]
fn clamp_bounds_every_entry() {
    let m = random_model(ModelSpec::new(3), 5);
    let raw = sample(&m, &SampleRequest::new(50, 1)).unwrap();
    let s = sample(&m, &SampleRequest::new(50, 1).with_clamp(-0.1, 0.1)).unwrap();
    for (r, c) in raw.data().iter().zip(s.data()) {
        assert_eq!(*c, r.clamp(-0.1, 0.1));
    }
    assert!(sample(&m, &SampleRequest::new(5, 1).with_clamp(1.0, 0.0)).is_err());
}

#[test]
fn tau_mode_override_matches_a_shared_model() {
    let m = random_model(ModelSpec::new(3), 8);
    let shared = m.with_tau_mode(TauMode::Shared);
    let a = sample(&m, &SampleRequest::new(20, 2).with_tau_mode(TauMode::Shared)).unwrap();
    assert_eq!(a, sample(&shared, &SampleRequest::new(20, 2)).unwrap());
    assert_ne!(a, sample(&m, &SampleRequest::new(20, 2)).unwrap());
}

#[test]
fn request_validation() {
    let m = random_model(ModelSpec::new(2), 1);
    assert!(sample(&m, &SampleRequest::new(0, 1)).is_err());
    assert!(sample(&m, &SampleRequest::new(3, 1).with_context(vec![1.0])).is_err());
    let c = random_model(ModelSpec::new(2).with_context(3), 1);
    assert!(sample(&c, &SampleRequest::new(3, 1)).is_err());
    assert!(sample(&c, &SampleRequest::new(3, 1).with_context(vec![1.0, 0.0])).is_err());
    let s = sample(&c, &SampleRequest::new(3, 1).with_context(vec![1.0, 0.0, 0.0])).unwrap();
    let t = sample(&c, &SampleRequest::new(3, 1).with_context(vec![0.0, 1.0, 0.0])).unwrap();
    assert_ne!(s, t);
}

#[test]
fn inpaint_copies_the_prefix_in_ordering_positions() {
    let spec = ModelSpec::new(5).with_ordering(vec![4, 1, 0, 3, 2]);
    let m = random_model(spec, 4);
    let prefix = vec![0.25, -1.5, 3.0];
    let out = inpaint(&m, &InpaintRequest::new(prefix.clone(), 30, 7)).unwrap();
    for r in 0..30 {
        assert_eq!(out.get2(r, 4), 0.25);
        assert_eq!(out.get2(r, 1), -1.5);
        assert_eq!(out.get2(r, 0), 3.0);
    }
    let free: Vec<f64> = out.column(2);
    assert!(free.iter().any(|v| (v - free[0]).abs() > 1e-9));
}

#[test]
fn inpaint_with_one_free_dimension() {
    let m = random_model(ModelSpec::new(3), 6);
    let out = inpaint(&m, &InpaintRequest::new(vec![0.1, 0.2], 10, 1)).unwrap();
    for r in 0..10 {
        assert_eq!(&out.row(r)[..2], &[0.1, 0.2]);
    }
    let last = out.column(2);
    assert!(last.iter().any(|v| *v != last[0]));
}

#[test]
fn inpaint_seeds_give_distinct_completions() {
    let m = random_model(ModelSpec::new(6), 2);
    let prefix = vec![0.5, 0.5, 0.5];
    for s in 0..20 {
        let a = inpaint(&m, &InpaintRequest::new(prefix.clone(), 1, 2 * s)).unwrap();
        let b = inpaint(&m, &InpaintRequest::new(prefix.clone(), 1, 2 * s + 1)).unwrap();
        assert_ne!(&a.row(0)[3..], &b.row(0)[3..]);
    }
}

#[test]
fn inpaint_prefix_length_is_checked() {
    let m = random_model(ModelSpec::new(3), 6);
    assert!(inpaint(&m, &InpaintRequest::new(vec![], 1, 0)).is_err());
    assert!(inpaint(&m, &InpaintRequest::new(vec![0.0; 3], 1, 0)).is_err());
    assert!(inpaint(&m, &InpaintRequest::new(vec![f64::NAN, 0.0], 1, 0)).is_err());
}

#[test]
fn density_report_columns_agree() {
    for mode in [TauMode::PerDimension, TauMode::Shared] {
        let m = random_model(ModelSpec::new(3).with_tau_mode(mode), 12);
        let taus: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        for dim in 0..3 {
            let rows = quantile_density_report(&m, &[0.3, -0.2, 0.9], &taus, dim, None).unwrap();
            for r in rows {
                let scale = r.exact.abs().max(1e-3);
                assert!((r.exact - r.finite_difference).abs() / scale < 1e-3, "{r:?}");
                match r.density {
                    Some(d) => assert_eq!(d, 1.0 / r.exact),
                    None => assert!(r.exact <= DENSITY_FLOOR),
                }
            }
        }
    }
}

#[test]
fn flat_quantile_map_has_no_density() {
    let spec = ModelSpec::new(2);
    let masks = crate::network::build_masks(2, &spec.hidden, &spec.ordering, &mut Rng::new(0)).unwrap();
    let m = AiqnModel::assemble(spec, masks).unwrap();
    let rows = quantile_density_report(&m, &[0.0, 0.0], &[0.5], 1, None).unwrap();
    assert_eq!(rows[0].exact, 0.0);
    assert_eq!(rows[0].density, None);
    assert!(quantile_density_report(&m, &[0.0, 0.0], &[1.0], 1, None).is_err());
    assert!(quantile_density_report(&m, &[0.0], &[0.5], 1, None).is_err());
}

#[test]
fn correlation_examples() {
    let a = [1.0, 2.0, 3.0, 4.0];
    assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    assert_eq!(spearman(&a, &[1.0, 10.0, 100.0, 1000.0]).unwrap(), 1.0);
    // Ranks with a tie: [1, 2.5, 2.5, 4] against [1, 2, 3, 4].
    let r = spearman(&[1.0, 2.0, 2.0, 3.0], &a).unwrap();
    let expected = 4.5 / (4.5f64 * 5.0).sqrt();
    assert!((r - expected).abs() < 1e-12, "{r}");
    assert!(pearson(&a, &[1.0; 4]).is_err());
    assert!(pearson(&a, &[1.0; 3]).is_err());
}

#[test]
fn nearest_mode_breaks_ties_low() {
    let modes = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
    assert_eq!(nearest_mode(&[1.0, 5.0], &modes).unwrap(), 0);
    assert_eq!(nearest_mode(&[1.5, 0.0], &modes).unwrap(), 1);
    assert!(nearest_mode(&[1.0], &modes).is_err());
    assert!(nearest_mode(&[1.0], &[]).is_err());
}

proptest! {
    #[test]
    fn spearman_ignores_monotone_maps(seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let a: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.5 * rng.normal()).collect();
        let r = spearman(&a, &b).unwrap();
        let mapped: Vec<f64> = a.iter().map(|v| v.exp() * 3.0 - 1.0).collect();
        prop_assert!((spearman(&mapped, &b).unwrap() - r).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
    }
}

fn gaussian_data(rows: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::new(vec![rows, 2], (0..2 * rows).map(|_| rng.normal()).collect()).unwrap()
}

#[test]
fn identical_sets_have_zero_distance() {
    let data = gaussian_data(400, 1);
    let t = eval_samples(&data, &data, &EvalOptions { samples: Some(400), ..EvalOptions::new(0) }).unwrap();
    assert_eq!(t.get("frechet"), Some(0.0));
}

#[test]
fn bootstrap_sits_below_the_split_half_floor() {
    for seed in 0..10 {
        let data = gaussian_data(2000, seed);
        let mut rng = Rng::new(100 + seed);
        let idx: Vec<usize> = (0..2000).map(|_| rng.below(2000)).collect();
        let boot = data.select_rows(&idx);
        let t = eval_samples(&boot, &data, &EvalOptions::new(seed)).unwrap();
        for i in 0..2 {
            assert!(t.get(&format!("w1_dim{i}")).unwrap() < t.get(&format!("w1_floor_dim{i}")).unwrap());
        }
        assert!(t.get("frechet").unwrap() < t.get("frechet_floor").unwrap(), "seed {seed}");
    }
}

#[test]
fn eval_rejects_small_or_mismatched_inputs() {
    let data = gaussian_data(99, 1);
    assert!(eval_samples(&data, &data, &EvalOptions::new(0)).is_err());
    let data = gaussian_data(200, 1);
    let wrong = Tensor::zeros(vec![200, 3]);
    assert!(eval_samples(&wrong, &data, &EvalOptions::new(0)).is_err());
    let m = random_model(ModelSpec::new(3), 1);
    assert!(eval_suite(&m, &data, &EvalOptions::new(0)).is_err());
}

#[test]
fn feature_map_feeds_the_frechet_distance() {
    let data = gaussian_data(300, 5);
    let shifted = Tensor::new(vec![300, 2], data.data().iter().map(|v| v + 1.0).collect()).unwrap();
    let first_col = |t: &Tensor| Tensor::new(vec![t.rows(), 1], t.column(0));
    let drop_all = |t: &Tensor| Ok(Tensor::zeros(vec![t.rows(), 1]));
    let raw = eval_samples(&shifted, &data, &EvalOptions::new(0)).unwrap();
    let one =
        eval_samples(&shifted, &data, &EvalOptions { features: Some(&first_col), ..EvalOptions::new(0) }).unwrap();
    let none =
        eval_samples(&shifted, &data, &EvalOptions { features: Some(&drop_all), ..EvalOptions::new(0) }).unwrap();
    assert!((raw.get("frechet").unwrap() - 2.0).abs() < 1e-9);
    assert!((one.get("frechet").unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(none.get("frechet"), Some(0.0));
}

#[test]
fn suite_reports_quantile_divergence_and_is_deterministic() {
    let m = random_model(ModelSpec::new(2), 9);
    let data = gaussian_data(300, 6);
    let opts = EvalOptions {
        truth: vec![Some(AnalyticDist::standard_normal()), Some(AnalyticDist::standard_normal())],
        ..EvalOptions::new(21)
    };
    let t = eval_suite(&m, &data, &opts).unwrap();
    assert!(t.get("qdiv_dim0").unwrap() >= 0.0);
    assert!(t.get("qdiv_dim1").unwrap() >= 0.0);
    assert_eq!(t.records.iter().find(|r| r.metric == "w1_dim0").unwrap().samples, 300);
    let csv = t.to_csv_string();
    assert!(csv.starts_with("metric,value,samples,seed\n"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",300,21"));
    assert_eq!(csv, eval_suite(&m, &data, &opts).unwrap().to_csv_string());
}
