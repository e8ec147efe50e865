use d2ps_core::oracle::maximal_rectangles_brute;
use d2ps_core::resize::{enclose, map_and_tag, maximal_rectangles, partition};
use d2ps_core::scenario::{Enu, ReceiverTruth, RoiBounds};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rectangles_match_enumeration(nx in 1usize..7, ny in 1usize..7, bits in any::<u64>()) {
        let mask: Vec<bool> = (0..nx * ny).map(|i| bits >> i & 1 == 1).collect();
        let mut got = maximal_rectangles(&mask, nx, ny);
        got.sort_unstable();
        prop_assert_eq!(got, maximal_rectangles_brute(&mask, nx, ny));
    }
}

fn receiver(id: u32, x: f64, y: f64) -> ReceiverTruth {
    let p = Enu::horizontal(x, y);
    ReceiverTruth {
        id,
        true_position: p,
        is_spoofed: false,
        reported_position: p,
    }
}

#[test]
fn outer_edges_are_inside_and_outside_points_counted() {
    let grid = partition(&RoiBounds::new(0.0, 100.0, 0.0, 100.0).unwrap(), 5, 5).unwrap();
    assert_eq!(grid.locate(100.0, 100.0), Some((4, 4)));
    assert_eq!(grid.locate(0.0, 0.0), Some((0, 0)));
    assert_eq!(grid.locate(20.0, 0.0), Some((1, 0)));
    assert_eq!(grid.locate(100.1, 50.0), None);
    let rx = vec![receiver(0, 10.0, 10.0), receiver(1, -5.0, 10.0)];
    let tagged = map_and_tag(&grid, &rx, 4).unwrap();
    assert_eq!(tagged.out_of_roi, 1);
    assert_eq!(tagged.cell(0, 0).count(), 1);
}

#[test]
fn activity_needs_more_than_threshold() {
    let grid = partition(&RoiBounds::centered_square(100.0).unwrap(), 2, 2).unwrap();
    let four: Vec<_> = (0..4).map(|i| receiver(i, -25.0, -25.0)).collect();
    assert_eq!(map_and_tag(&grid, &four, 4).unwrap().n_active(), 0);
    let five: Vec<_> = (0..5).map(|i| receiver(i, -25.0, -25.0)).collect();
    let tagged = map_and_tag(&grid, &five, 4).unwrap();
    assert_eq!(tagged.n_active(), 1);
    let regions = enclose(&tagged);
    assert_eq!(regions.len(), 1);
    assert_eq!(regions[0].receiver_ids.len(), 5);
    assert_eq!(
        regions[0].bounds,
        RoiBounds::new(-50.0, 0.0, -50.0, 0.0).unwrap()
    );
}

#[test]
fn empty_grid_has_no_regions() {
    let grid = partition(&RoiBounds::centered_square(100.0).unwrap(), 3, 3).unwrap();
    assert!(enclose(&map_and_tag(&grid, &[], 4).unwrap()).is_empty());
}
