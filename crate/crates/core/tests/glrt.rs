use d2ps_core::detector::Decision;
use d2ps_core::geometry::SkyView;
use d2ps_core::glrt::{
    glrt_detect, glrt_predicted_fraction, pair_statistic, GlrtConfig, PairStatistics,
};
use d2ps_core::harness::trial_world;
use d2ps_core::scenario::{RoiBounds, ScenarioConfig};

fn spoofed(alpha: f64, m: usize, k: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        roi: RoiBounds::centered_square(1000.0).unwrap(),
        ..ScenarioConfig::default()
    };
    cfg.run.n_receivers = m;
    cfg.run.epochs = k;
    cfg.spoofer.spoofed_fraction = alpha;
    cfg
}

#[test]
fn spoofed_pairs_vote_at_the_pair_level() {
    let sky = SkyView::sky12();
    let g = GlrtConfig::default();
    let mut votes = 0usize;
    let mut total = 0usize;
    for t in 0..20 {
        let w = trial_world(&spoofed(1.0, 20, 1), &sky, None, t).unwrap();
        let o = glrt_detect(&w.epochs, &g).unwrap();
        assert_eq!(o.decision, Decision::H1);
        votes += o.n_h1_votes;
        total += o.n_tests;
    }
    let rate = votes as f64 / total as f64;
    assert!((rate - 0.99).abs() < 0.003, "{rate}");
}

#[test]
fn authentic_wide_area_votes_h0() {
    let sky = SkyView::sky12();
    let w = trial_world(&spoofed(0.0, 30, 5), &sky, None, 3).unwrap();
    let o = glrt_detect(
        &w.epochs,
        &GlrtConfig {
            k: 5,
            ..GlrtConfig::default()
        },
    )
    .unwrap();
    assert_eq!(o.decision, Decision::H0);
}

#[test]
fn cached_statistics_match_direct_runs() {
    let sky = SkyView::sky12();
    let w = trial_world(&spoofed(0.5, 20, 2), &sky, Some(1.5), 8).unwrap();
    let stats = PairStatistics::compute(&w.epochs, 5.0).unwrap();
    for fa in [0.001, 0.01, 0.1] {
        let g = GlrtConfig {
            fa_pair: fa,
            k: 2,
            ..GlrtConfig::default()
        };
        assert_eq!(
            stats.outcome(&g).unwrap(),
            glrt_detect(&w.epochs, &g).unwrap()
        );
    }
}

#[test]
fn statistic_and_prediction_edges() {
    assert_eq!(pair_statistic(&[10.0], 5.0), 1.0);
    assert_eq!(pair_statistic(&[10.0, 10.0], 5.0), 2.0);
    assert_eq!(glrt_predicted_fraction(1.0, 100).unwrap(), 1.0);
    assert_eq!(glrt_predicted_fraction(0.0, 100).unwrap(), 0.0);
    assert_eq!(glrt_predicted_fraction(0.01, 100).unwrap(), 0.0);
}
