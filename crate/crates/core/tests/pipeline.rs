use d2ps_core::d2ps::{
    build_d2ps, build_d2ps_epoch, build_subsets, d2ps_epoch, ordered_receiver_pairs,
};
use d2ps_core::detector::sample_variance;
use d2ps_core::geometry::SkyView;
use d2ps_core::harness::{d2ps_trial_variance, trial_world};
use d2ps_core::rng::stream;
use d2ps_core::scenario::{generate_world, EpochMeasurements, RoiBounds, ScenarioConfig};
use rand::Rng;

fn config(d: f64, m: usize, sigma: f64, alpha: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        roi: RoiBounds::centered_square(d).unwrap(),
        ..ScenarioConfig::default()
    };
    cfg.run.n_receivers = m;
    cfg.noise.sigma_rho = sigma;
    cfg.spoofer.spoofed_fraction = alpha;
    cfg
}

#[test]
fn receiver_and_satellite_offsets_cancel() {
    let sky = SkyView::sky12();
    let w = generate_world(&config(300.0, 8, 2.0, 0.0), &sky, &mut stream(3, &[])).unwrap();
    let e = &w.epochs[0];
    let mut rng = stream(4, &[]);
    let clock: Vec<f64> = (0..8).map(|_| rng.random_range(-3e5..3e5)).collect();
    let sat: Vec<f64> = (0..12).map(|_| rng.random_range(-1e4..1e4)).collect();
    let mut shifted = Vec::new();
    for (n, c) in clock.iter().enumerate() {
        for (j, s) in sat.iter().enumerate() {
            shifted.push(e.get(n, j) + c + s);
        }
    }
    let e2 = EpochMeasurements::new(0, e.receiver_ids.clone(), e.satellite_ids.clone(), shifted)
        .unwrap();
    let a = build_subsets(e, &sky).unwrap();
    let b = build_subsets(&e2, &sky).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for (u, v) in x.values.iter().zip(&y.values) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }
}

#[test]
fn noise_free_full_spoofing_gives_zero_samples() {
    let sky = SkyView::sky12();
    let w = generate_world(&config(500.0, 15, 0.0, 1.0), &sky, &mut stream(5, &[])).unwrap();
    let set = build_d2ps(&w.epochs, 9).unwrap();
    assert_eq!(set.len(), 15 * 14);
    assert!(set.samples.iter().all(|s| s.abs() < 1e-6));
}

#[test]
fn fused_path_matches_two_step_path() {
    let sky = SkyView::sky12();
    let w = generate_world(&config(200.0, 12, 5.0, 0.4), &sky, &mut stream(6, &[])).unwrap();
    let two_step = build_d2ps_epoch(&build_subsets(&w.epochs[0], &sky).unwrap(), 77, 0).unwrap();
    let fused = d2ps_epoch(&w.epochs[0], 77).unwrap();
    assert_eq!(two_step.samples, fused.samples);
}

#[test]
fn same_seed_same_world_and_samples() {
    let sky = SkyView::sky12();
    let cfg = config(100.0, 10, 5.0, 0.5);
    let a = trial_world(&cfg, &sky, Some(1.5), 11).unwrap();
    let b = trial_world(&cfg, &sky, Some(1.5), 11).unwrap();
    let c = trial_world(&cfg, &sky, Some(1.5), 12).unwrap();
    assert_eq!(a.epochs, b.epochs);
    assert_ne!(a.epochs, c.epochs);
    assert_eq!(
        d2ps_trial_variance(&a, 11).unwrap(),
        d2ps_trial_variance(&b, 11).unwrap()
    );
}

#[test]
fn noise_free_variance_scales_with_area_side_squared() {
    let sky = SkyView::sky12();
    let small = trial_world(&config(100.0, 20, 0.0, 0.0), &sky, None, 21).unwrap();
    let large = trial_world(&config(200.0, 20, 0.0, 0.0), &sky, None, 21).unwrap();
    let ratio = d2ps_trial_variance(&large, 21).unwrap() / d2ps_trial_variance(&small, 21).unwrap();
    assert!((ratio - 4.0).abs() < 1e-6, "{ratio}");
}

#[test]
fn epoch_averaging_divides_spoofed_variance() {
    let sky = SkyView::sky12();
    let mut cfg = config(100.0, 30, 5.0, 1.0);
    cfg.run.epochs = 4;
    let mean = (0..100)
        .map(|t| d2ps_trial_variance(&trial_world(&cfg, &sky, None, t).unwrap(), t).unwrap())
        .sum::<f64>()
        / 100.0;
    assert!((mean / 25.0 - 1.0).abs() < 0.05, "{mean}");
}

#[test]
fn sample_count_is_ordered_pair_count() {
    let sky = SkyView::sky12();
    let w = trial_world(&config(100.0, 7, 5.0, 0.0), &sky, None, 1).unwrap();
    let set = build_d2ps(&w.epochs, 1).unwrap();
    assert_eq!(set.len(), ordered_receiver_pairs(7).len());
    assert!(sample_variance(&set).unwrap() > 0.0);
}

#[test]
fn subsets_are_closed_under_negation() {
    let sky = SkyView::sky12();
    let w = generate_world(&config(400.0, 9, 5.0, 0.3), &sky, &mut stream(14, &[])).unwrap();
    for s in build_subsets(&w.epochs[0], &sky).unwrap() {
        let mut v = s.values.clone();
        v.sort_by(f64::total_cmp);
        let mut neg: Vec<f64> = v.iter().map(|x| -x).collect();
        neg.sort_by(f64::total_cmp);
        assert_eq!(v, neg);
    }
}

#[test]
fn merging_preserves_each_subset_multiset() {
    // With a single satellite pair the merged set is the shuffled subset.
    let sky = SkyView::sky12().truncated(2).unwrap();
    let w = generate_world(&config(400.0, 10, 5.0, 0.0), &sky, &mut stream(15, &[])).unwrap();
    let subsets = build_subsets(&w.epochs[0], &sky).unwrap();
    let merged = build_d2ps_epoch(&subsets, 3, 0).unwrap();
    let mut a = merged.samples.clone();
    let mut b = subsets[0].values.clone();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert_eq!(a, b);
    assert_ne!(merged.samples, subsets[0].values);
}
