//! Resizing: split the monitor area into a grid, mark cells holding enough
//! receivers (by reported position) as active, and group active cells into
//! rectangular enclosed regions that are each detected on their own.

use std::collections::HashMap;
use std::io::Write;

use crate::detector::Decision;
use crate::error::{invalid, Result};
use crate::scenario::{EpochMeasurements, ReceiverTruth, RoiBounds};

/// Cells are active when they hold more than this many receivers.
pub const DEFAULT_ACTIVITY_THRESHOLD: usize = 4;
pub const DEFAULT_DIVISIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub ix: usize,
    pub iy: usize,
    pub bounds: RoiBounds,
    pub receiver_ids: Vec<u32>,
    pub active: bool,
}

impl Cell {
    pub fn count(&self) -> usize {
        self.receiver_ids.len()
    }
}

/// Uniform `nx` x `ny` grid over the region. Cell `(ix, iy)` is stored at
/// `iy * nx + ix`; `(0, 0)` sits at the `(a1, b1)` corner.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    pub roi: RoiBounds,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<Cell>,
    /// Receivers whose reported position fell outside the region.
    pub out_of_roi: usize,
}

impl GridPartition {
    pub fn cell(&self, ix: usize, iy: usize) -> &Cell {
        &self.cells[iy * self.nx + ix]
    }

    fn x_edge(&self, k: usize) -> f64 {
        edge(self.roi.a1, self.roi.a2, self.nx, k)
    }

    fn y_edge(&self, k: usize) -> f64 {
        edge(self.roi.b1, self.roi.b2, self.ny, k)
    }

    /// Cell holding a point. Cells are half-open `[lo, hi)` except the
    /// last row and column, which also take their upper edge.
    pub fn locate(&self, east: f64, north: f64) -> Option<(usize, usize)> {
        if !self.roi.contains(east, north) {
            return None;
        }
        let ix = locate_1d(east, self.nx, |k| self.x_edge(k));
        let iy = locate_1d(north, self.ny, |k| self.y_edge(k));
        Some((ix, iy))
    }

    pub fn active_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.active).collect()
    }

    pub fn n_active(&self) -> usize {
        self.cells.iter().filter(|c| c.active).count()
    }
}

fn edge(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if k == n {
        hi
    } else {
        lo + (hi - lo) * k as f64 / n as f64
    }
}

fn locate_1d(v: f64, n: usize, edge: impl Fn(usize) -> f64) -> usize {
    let lo = edge(0);
    let span = edge(n) - lo;
    let mut k = (((v - lo) / span) * n as f64)
        .floor()
        .clamp(0.0, (n - 1) as f64) as usize;
    while k + 1 < n && v >= edge(k + 1) {
        k += 1;
    }
    while k > 0 && v < edge(k) {
        k -= 1;
    }
    k
}

pub fn partition(roi: &RoiBounds, nx: usize, ny: usize) -> Result<GridPartition> {
    roi.validate()?;
    if nx == 0 || ny == 0 {
        return Err(invalid(format!(
            "grid divisions must be >= 1, got {nx} x {ny}"
        )));
    }
    let mut grid = GridPartition {
        roi: *roi,
        nx,
        ny,
        cells: Vec::with_capacity(nx * ny),
        out_of_roi: 0,
    };
    for iy in 0..ny {
        for ix in 0..nx {
            let bounds = RoiBounds {
                a1: grid.x_edge(ix),
                a2: grid.x_edge(ix + 1),
                b1: grid.y_edge(iy),
                b2: grid.y_edge(iy + 1),
            };
            grid.cells.push(Cell {
                ix,
                iy,
                bounds,
                receiver_ids: Vec::new(),
                active: false,
            });
        }
    }
    Ok(grid)
}

/// Assign receivers to cells by reported position and tag active cells.
pub fn map_and_tag(
    grid: &GridPartition,
    receivers: &[ReceiverTruth],
    threshold: usize,
) -> Result<GridPartition> {
    if threshold < 1 {
        return Err(invalid("activity threshold must be >= 1"));
    }
    let mut out = grid.clone();
    out.out_of_roi = 0;
    out.cells.iter_mut().for_each(|c| c.receiver_ids.clear());
    for r in receivers {
        let p = r.reported_position;
        match out.locate(p.east, p.north) {
            Some((ix, iy)) => out.cells[iy * out.nx + ix].receiver_ids.push(r.id),
            None => out.out_of_roi += 1,
        }
    }
    for c in &mut out.cells {
        c.active = c.count() > threshold;
    }
    Ok(out)
}

/// A rectangle of active cells.
#[derive(Debug, Clone, PartialEq)]
pub struct EnclosedRegion {
    pub bounds: RoiBounds,
    /// Inclusive cell ranges `(x0, x1)` and `(y0, y1)`.
    pub x_cells: (usize, usize),
    pub y_cells: (usize, usize),
    /// Flat cell indices.
    pub member_cells: Vec<usize>,
    pub receiver_ids: Vec<u32>,
}

/// Rectangle as inclusive cell ranges `(x0, x1, y0, y1)`.
pub type CellRect = (usize, usize, usize, usize);

/// All maximal all-active rectangles of an `nx` x `ny` mask, ordered by
/// `(y0, x0, y1, x1)`.
pub fn maximal_rectangles(mask: &[bool], nx: usize, ny: usize) -> Vec<CellRect> {
    assert_eq!(mask.len(), nx * ny, "mask size");
    // Prefix sums of active cells for O(1) rectangle queries.
    let w = nx + 1;
    let mut pre = vec![0usize; w * (ny + 1)];
    for iy in 0..ny {
        for ix in 0..nx {
            pre[(iy + 1) * w + ix + 1] =
                usize::from(mask[iy * nx + ix]) + pre[iy * w + ix + 1] + pre[(iy + 1) * w + ix]
                    - pre[iy * w + ix];
        }
    }
    let full = |x0: usize, x1: usize, y0: usize, y1: usize| -> bool {
        let total = pre[(y1 + 1) * w + x1 + 1] + pre[y0 * w + x0]
            - pre[y0 * w + x1 + 1]
            - pre[(y1 + 1) * w + x0];
        total == (x1 - x0 + 1) * (y1 - y0 + 1)
    };
    let mut out = Vec::new();
    for y0 in 0..ny {
        for x0 in 0..nx {
            for y1 in y0..ny {
                for x1 in x0..nx {
                    if !full(x0, x1, y0, y1) {
                        continue;
                    }
                    let grows = (x0 > 0 && full(x0 - 1, x1, y0, y1))
                        || (x1 + 1 < nx && full(x0, x1 + 1, y0, y1))
                        || (y0 > 0 && full(x0, x1, y0 - 1, y1))
                        || (y1 + 1 < ny && full(x0, x1, y0, y1 + 1));
                    if !grows {
                        out.push((x0, x1, y0, y1));
                    }
                }
            }
        }
    }
    out
}

/// Group active cells into maximal rectangular regions. Regions may
/// overlap; an empty list means no cell is active.
pub fn enclose(grid: &GridPartition) -> Vec<EnclosedRegion> {
    maximal_rectangles(&grid.active_mask(), grid.nx, grid.ny)
        .into_iter()
        .map(|(x0, x1, y0, y1)| {
            let mut member_cells = Vec::new();
            let mut receiver_ids = Vec::new();
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    let idx = iy * grid.nx + ix;
                    member_cells.push(idx);
                    receiver_ids.extend_from_slice(&grid.cells[idx].receiver_ids);
                }
            }
            EnclosedRegion {
                bounds: RoiBounds {
                    a1: grid.x_edge(x0),
                    a2: grid.x_edge(x1 + 1),
                    b1: grid.y_edge(y0),
                    b2: grid.y_edge(y1 + 1),
                },
                x_cells: (x0, x1),
                y_cells: (y0, y1),
                member_cells,
                receiver_ids,
            }
        })
        .collect()
}

/// Measurements restricted to one enclosed region.
#[derive(Debug, Clone)]
pub struct RegionInput {
    pub region_id: usize,
    pub bounds: RoiBounds,
    pub dx: f64,
    pub dy: f64,
    pub epochs: Vec<EpochMeasurements>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRegion {
    pub region_id: usize,
    pub n_receivers: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct RegionInputs {
    pub inputs: Vec<RegionInput>,
    pub skipped: Vec<SkippedRegion>,
}

/// Slice every epoch down to each region's member receivers.
pub fn per_region_detection_inputs(
    regions: &[EnclosedRegion],
    epochs: &[EpochMeasurements],
) -> Result<RegionInputs> {
    if regions.is_empty() {
        return Err(invalid("no enclosed regions"));
    }
    let mut out = RegionInputs::default();
    for (region_id, region) in regions.iter().enumerate() {
        if region.receiver_ids.len() < 2 {
            out.skipped.push(SkippedRegion {
                region_id,
                n_receivers: region.receiver_ids.len(),
                reason: "fewer than 2 receivers".into(),
            });
            continue;
        }
        let mut sliced = Vec::with_capacity(epochs.len());
        for e in epochs {
            let rows: HashMap<u32, usize> = e
                .receiver_ids
                .iter()
                .enumerate()
                .map(|(row, &id)| (id, row))
                .collect();
            let picked: Vec<usize> = region
                .receiver_ids
                .iter()
                .filter_map(|id| rows.get(id).copied())
                .collect();
            sliced.push(e.select_receivers(&picked)?);
        }
        if sliced.iter().any(|e| e.n_receivers() < 2) {
            out.skipped.push(SkippedRegion {
                region_id,
                n_receivers: region.receiver_ids.len(),
                reason: "members missing from the measurements".into(),
            });
            continue;
        }
        out.inputs.push(RegionInput {
            region_id,
            bounds: region.bounds,
            dx: region.bounds.dx(),
            dy: region.bounds.dy(),
            epochs: sliced,
        });
    }
    Ok(out)
}

/// Write `region_id,x_lo,x_hi,y_lo,y_hi,n_receivers,decision` rows.
/// Regions without a decision (skipped) are written as `skipped`.
pub fn write_resize_report<W: Write>(
    out: W,
    regions: &[EnclosedRegion],
    decisions: &[Option<Decision>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "region_id",
        "x_lo",
        "x_hi",
        "y_lo",
        "y_hi",
        "n_receivers",
        "decision",
    ])?;
    for (id, r) in regions.iter().enumerate() {
        let decision = decisions
            .get(id)
            .copied()
            .flatten()
            .map(|d| d.to_string())
            .unwrap_or_else(|| "skipped".into());
        w.write_record([
            id.to_string(),
            r.bounds.a1.to_string(),
            r.bounds.a2.to_string(),
            r.bounds.b1.to_string(),
            r.bounds.b2.to_string(),
            r.receiver_ids.len().to_string(),
            decision,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Enu;

    fn rx(id: u32, e: f64, n: f64) -> ReceiverTruth {
        ReceiverTruth {
            id,
            true_position: Enu::horizontal(e, n),
            is_spoofed: false,
            reported_position: Enu::horizontal(e, n),
        }
    }

    #[test]
    fn partition_examples() {
        let roi = RoiBounds::new(0.0, 1000.0, 0.0, 1000.0).unwrap();
        let one = partition(&roi, 1, 1).unwrap();
        assert_eq!(one.cells.len(), 1);
        assert_eq!(one.cells[0].bounds, roi);
        let g = partition(&roi, 5, 5).unwrap();
        assert_eq!(g.cells.len(), 25);
        for c in &g.cells {
            assert_eq!(c.bounds.dx(), 200.0);
            assert_eq!(c.bounds.dy(), 200.0);
        }
        let area: f64 = g.cells.iter().map(|c| c.bounds.area()).sum();
        assert_eq!(area, roi.area());
        assert_eq!(g.cell(0, 0).bounds.a1, 0.0);
        assert!(partition(&roi, 0, 3).is_err());
    }

    #[test]
    fn tagging() {
        let roi = RoiBounds::new(0.0, 1000.0, 0.0, 1000.0).unwrap();
        let g = partition(&roi, 5, 5).unwrap();
        assert_eq!(map_and_tag(&g, &[], 4).unwrap().n_active(), 0);
        let many: Vec<_> = (0..100).map(|k| rx(k, 10.0 + k as f64, 50.0)).collect();
        let t = map_and_tag(&g, &many, 5).unwrap();
        assert_eq!(t.n_active(), 1);
        assert!(t.cell(0, 0).active);
        assert!(map_and_tag(&g, &many, 0).is_err());
    }

    #[test]
    fn edge_ties_are_half_open() {
        let roi = RoiBounds::new(0.0, 1000.0, 0.0, 1000.0).unwrap();
        let g = partition(&roi, 5, 5).unwrap();
        assert_eq!(g.locate(200.0, 0.0), Some((1, 0)));
        assert_eq!(g.locate(199.999, 600.0), Some((0, 3)));
        assert_eq!(g.locate(1000.0, 1000.0), Some((4, 4)));
        assert_eq!(g.locate(0.0, 0.0), Some((0, 0)));
        assert_eq!(g.locate(1000.1, 10.0), None);
        let t = map_and_tag(&g, &[rx(0, 200.0, 10.0), rx(1, -5.0, 3.0)], 1).unwrap();
        assert_eq!(t.cell(1, 0).receiver_ids, vec![0]);
        assert_eq!(t.out_of_roi, 1);
    }

    fn mask_from(rows: &[&str]) -> (Vec<bool>, usize, usize) {
        // First string is the top row (largest iy).
        let ny = rows.len();
        let nx = rows[0].len();
        let mut mask = vec![false; nx * ny];
        for (r, line) in rows.iter().enumerate() {
            let iy = ny - 1 - r;
            for (ix, ch) in line.chars().enumerate() {
                mask[iy * nx + ix] = ch == '#';
            }
        }
        (mask, nx, ny)
    }

    #[test]
    fn full_mask_has_one_region() {
        let (mask, nx, ny) = mask_from(&["#####"; 5]);
        assert_eq!(maximal_rectangles(&mask, nx, ny), vec![(0, 4, 0, 4)]);
    }

    #[test]
    fn l_shape_gives_two_overlapping_regions() {
        let (mask, nx, ny) = mask_from(&["#.", "##"]);
        let rects = maximal_rectangles(&mask, nx, ny);
        assert_eq!(rects, vec![(0, 1, 0, 0), (0, 0, 0, 1)]);
    }

    #[test]
    fn empty_mask_has_no_regions() {
        let (mask, nx, ny) = mask_from(&["...", "..."]);
        assert!(maximal_rectangles(&mask, nx, ny).is_empty());
    }

    #[test]
    fn regions_slice_measurements() {
        let roi = RoiBounds::new(0.0, 100.0, 0.0, 100.0).unwrap();
        let g = partition(&roi, 1, 1).unwrap();
        let rxs: Vec<_> = (0..6).map(|k| rx(k, 10.0 * k as f64 + 1.0, 5.0)).collect();
        let tagged = map_and_tag(&g, &rxs, 4).unwrap();
        let regions = enclose(&tagged);
        assert_eq!(regions.len(), 1);
        let e = EpochMeasurements::new(
            0,
            (0..6).collect(),
            vec![1, 2],
            (0..12).map(f64::from).collect(),
        )
        .unwrap();
        let inputs = per_region_detection_inputs(&regions, std::slice::from_ref(&e)).unwrap();
        assert_eq!(inputs.inputs.len(), 1);
        assert_eq!(inputs.inputs[0].epochs[0], e);
        assert_eq!(inputs.inputs[0].dx, 100.0);

        let lonely = EnclosedRegion {
            receiver_ids: vec![3],
            ..regions[0].clone()
        };
        let out = per_region_detection_inputs(&[lonely], &[e]).unwrap();
        assert!(out.inputs.is_empty());
        assert_eq!(out.skipped.len(), 1);
    }

    #[test]
    fn report_csv() {
        let roi = RoiBounds::new(0.0, 10.0, 0.0, 20.0).unwrap();
        let region = EnclosedRegion {
            bounds: roi,
            x_cells: (0, 0),
            y_cells: (0, 0),
            member_cells: vec![0],
            receiver_ids: vec![1, 2, 3],
        };
        let mut buf = Vec::new();
        write_resize_report(
            &mut buf,
            &[region.clone(), region],
            &[Some(Decision::H0), None],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "region_id,x_lo,x_hi,y_lo,y_hi,n_receivers,decision\n0,0,10,0,20,3,H0\n1,0,10,0,20,3,skipped\n"
        );
    }
}
