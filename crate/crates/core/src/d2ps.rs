//! Single and double differential pseudoranges and the randomized D²PS
//! sample set.
//!
//! For every satellite pair the `M(M-1)` ordered receiver-pair DDPs form a
//! subset. Each subset is shuffled with its own random stream, the shuffled
//! subsets are summed index by index and scaled by `1/sqrt(C(J,2))`, and the
//! per-epoch sets are averaged over the detection window.

use std::io::Write;

use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::geometry::{satellite_pairs, SkyView};
use crate::n_choose_2;
use crate::rng::stream;
use crate::scenario::EpochMeasurements;

/// `rho_n - rho_m`
#[inline]
pub fn sdp(rho_n: f64, rho_m: f64) -> f64 {
    rho_n - rho_m
}

/// `sdp_i - sdp_j`
#[inline]
pub fn ddp(sdp_i: f64, sdp_j: f64) -> f64 {
    sdp_i - sdp_j
}

/// All ordered receiver pairs `(n, m)`, `n != m`, reference receiver outer.
pub fn ordered_receiver_pairs(m: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(m * m.saturating_sub(1));
    for n in 0..m as u32 {
        for k in 0..m as u32 {
            if k != n {
                out.push((n, k));
            }
        }
    }
    out
}

/// DDPs of one satellite pair over all ordered receiver pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpSubset {
    pub sat_pair: (usize, usize),
    pub values: Vec<f64>,
}

#[inline]
fn pair_ddp(epoch: &EpochMeasurements, n: usize, m: usize, i: usize, j: usize) -> f64 {
    ddp(
        sdp(epoch.get(n, i), epoch.get(m, i)),
        sdp(epoch.get(n, j), epoch.get(m, j)),
    )
}

fn check_epoch(epoch: &EpochMeasurements, sky: Option<&SkyView>) -> Result<()> {
    if epoch.n_receivers() < 2 {
        return Err(invalid("D²PS needs at least 2 receivers"));
    }
    if epoch.n_satellites() < 2 {
        return Err(invalid("D²PS needs at least 2 satellites"));
    }
    if let Some(sky) = sky {
        if sky.len() != epoch.n_satellites() {
            return Err(Error::DimensionMismatch {
                expected: sky.len(),
                got: epoch.n_satellites(),
            });
        }
        if sky.ids() != epoch.satellite_ids {
            return Err(invalid("epoch satellites do not match the sky view"));
        }
    }
    Ok(())
}

/// One subset per satellite pair, in pair enumeration order.
pub fn build_subsets(epoch: &EpochMeasurements, sky: &SkyView) -> Result<Vec<DdpSubset>> {
    check_epoch(epoch, Some(sky))?;
    let pairs = ordered_receiver_pairs(epoch.n_receivers());
    Ok(satellite_pairs(epoch.n_satellites())
        .map(|(i, j)| DdpSubset {
            sat_pair: (i, j),
            values: pairs
                .iter()
                .map(|&(n, m)| pair_ddp(epoch, n as usize, m as usize, i, j))
                .collect(),
        })
        .collect())
}

/// The D²PS samples of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct D2psSampleSet {
    pub samples: Vec<f64>,
    /// Receivers.
    pub m: usize,
    /// Satellites (of the last epoch when the count varied).
    pub j: usize,
    /// Epochs averaged.
    pub k: usize,
}

impl D2psSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Write `idx,sample_m` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["idx", "sample_m"])?;
        for (i, s) in self.samples.iter().enumerate() {
            w.write_record([i.to_string(), format!("{s}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Permutation stream key for satellite pair `pair` of epoch `epoch`.
fn permutation_stream(seed: u64, epoch: usize, pair: usize) -> crate::rng::SimRng {
    stream(seed, &[0xD2, epoch as u64, pair as u64])
}

/// Shuffle each subset independently and merge.
pub fn build_d2ps_epoch(subsets: &[DdpSubset], seed: u64, epoch: usize) -> Result<D2psSampleSet> {
    let first = subsets
        .first()
        .ok_or_else(|| invalid("no DDP subsets to merge"))?;
    let n = first.values.len();
    let m = receivers_from_len(n)?;
    let mut out = vec![0.0; n];
    let mut perm: Vec<u32> = Vec::with_capacity(n);
    for (p, s) in subsets.iter().enumerate() {
        if s.values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.values.len(),
            });
        }
        identity_shuffle(&mut perm, n, &mut permutation_stream(seed, epoch, p));
        for (o, &src) in out.iter_mut().zip(&perm) {
            *o += s.values[src as usize];
        }
    }
    let scale = 1.0 / (subsets.len() as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(D2psSampleSet {
        samples: out,
        m,
        j: satellites_from_pairs(subsets.len()),
        k: 1,
    })
}

fn identity_shuffle(perm: &mut Vec<u32>, n: usize, rng: &mut crate::rng::SimRng) {
    perm.clear();
    perm.extend(0..n as u32);
    perm.shuffle(rng);
}

fn receivers_from_len(n: usize) -> Result<usize> {
    let m = ((1.0 + (1.0 + 4.0 * n as f64).sqrt()) / 2.0).round() as usize;
    if m < 2 || m * (m - 1) != n {
        return Err(invalid(format!("subset length {n} is not M(M-1)")));
    }
    Ok(m)
}

fn satellites_from_pairs(c: usize) -> usize {
    let j = ((1.0 + (1.0 + 8.0 * c as f64).sqrt()) / 2.0).round() as usize;
    if n_choose_2(j) == c {
        j
    } else {
        0
    }
}

/// Build the per-epoch set straight from measurements without
/// materializing the subsets. Identical output to
/// `build_subsets` followed by `build_d2ps_epoch`.
pub fn d2ps_epoch(epoch: &EpochMeasurements, seed: u64) -> Result<D2psSampleSet> {
    check_epoch(epoch, None)?;
    let m = epoch.n_receivers();
    let j = epoch.n_satellites();
    let pairs = ordered_receiver_pairs(m);
    let n = pairs.len();
    let mut out = vec![0.0; n];
    let mut perm: Vec<u32> = Vec::with_capacity(n);
    let mut subset = vec![0.0; n];
    let mut c = 0usize;
    for (p, (i, jj)) in satellite_pairs(j).enumerate() {
        for (v, &(a, b)) in subset.iter_mut().zip(&pairs) {
            *v = pair_ddp(epoch, a as usize, b as usize, i, jj);
        }
        identity_shuffle(
            &mut perm,
            n,
            &mut permutation_stream(seed, epoch.epoch_index, p),
        );
        for (o, &src) in out.iter_mut().zip(&perm) {
            *o += subset[src as usize];
        }
        c += 1;
    }
    let scale = 1.0 / (c as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(D2psSampleSet {
        samples: out,
        m,
        j,
        k: 1,
    })
}

/// Index-aligned mean over per-epoch sets.
pub fn average_epochs(sets: &[D2psSampleSet]) -> Result<D2psSampleSet> {
    let first = sets
        .first()
        .ok_or_else(|| invalid("no epochs to average"))?;
    let n = first.len();
    let mut acc = vec![0.0; n];
    for s in sets {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(&s.samples) {
            *a += v;
        }
    }
    let k = sets.len();
    if k > 1 {
        acc.iter_mut().for_each(|v| *v /= k as f64);
    }
    Ok(D2psSampleSet {
        samples: acc,
        m: first.m,
        j: sets.last().map(|s| s.j).unwrap_or(first.j),
        k: sets.iter().map(|s| s.k).sum(),
    })
}

/// Full detection-window D²PS set over all given epochs.
pub fn build_d2ps(epochs: &[EpochMeasurements], seed: u64) -> Result<D2psSampleSet> {
    if epochs.is_empty() {
        return Err(invalid("no epochs in the detection window"));
    }
    let per_epoch = epochs
        .iter()
        .map(|e| d2ps_epoch(e, seed))
        .collect::<Result<Vec<_>>>()?;
    if per_epoch.len() == 1 {
        return Ok(per_epoch.into_iter().next().expect("one epoch"));
    }
    average_epochs(&per_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epoch(m: usize, j: usize, f: impl Fn(usize, usize) -> f64) -> EpochMeasurements {
        let mut v = Vec::new();
        for r in 0..m {
            for s in 0..j {
                v.push(f(r, s));
            }
        }
        EpochMeasurements::new(0, (0..m as u32).collect(), (0..j as u32).collect(), v).unwrap()
    }

    fn sky(j: usize) -> SkyView {
        let sats = (0..j)
            .map(|k| {
                crate::geometry::SatelliteLos::new(k as u32, 10.0 + 5.0 * k as f64, 29.0 * k as f64)
                    .unwrap()
            })
            .collect();
        SkyView::new(sats).unwrap()
    }

    #[test]
    fn differencing_examples() {
        assert_eq!(sdp(100.0, 100.0), 0.0);
        assert_eq!(sdp(105.0, 100.0), 5.0);
        assert_eq!(sdp(3.0, 7.5), -sdp(7.5, 3.0));
        assert_eq!(ddp(4.0, 4.0), 0.0);
    }

    #[test]
    fn subset_counts() {
        for (m, j, subsets, len) in [(2, 2, 1, 2), (3, 3, 3, 6), (20, 12, 66, 380)] {
            let e = epoch(m, j, |r, s| (r * 31 + s * 7) as f64);
            let out = build_subsets(&e, &sky(j)).unwrap();
            assert_eq!(out.len(), subsets);
            assert!(out.iter().all(|s| s.values.len() == len));
        }
        let e = epoch(2, 2, |r, s| (r * 10 + s * s) as f64);
        let s = build_subsets(&e, &sky(2)).unwrap();
        assert_eq!(s[0].values[0], -s[0].values[1]);
    }

    #[test]
    fn rejects_mismatched_sky() {
        let e = epoch(3, 3, |_, _| 0.0);
        assert!(build_subsets(&e, &sky(4)).is_err());
        assert!(build_subsets(&epoch(1, 3, |_, _| 0.0), &sky(3)).is_err());
    }

    #[test]
    fn single_subset_is_a_permutation() {
        let e = epoch(4, 2, |r, s| (r * r + 3 * s * r) as f64);
        let subsets = build_subsets(&e, &sky(2)).unwrap();
        let set = build_d2ps_epoch(&subsets, 3, 0).unwrap();
        let mut a = set.samples.clone();
        let mut b = subsets[0].values.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn constant_subsets_scale_by_root_c() {
        let subsets: Vec<DdpSubset> = (0..66)
            .map(|p| DdpSubset {
                sat_pair: (p, p + 1),
                values: vec![2.0; 12],
            })
            .collect();
        let set = build_d2ps_epoch(&subsets, 1, 0).unwrap();
        for s in set.samples {
            assert!((s - 66f64.sqrt() * 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_path_matches_two_step_path() {
        let e = epoch(7, 5, |r, s| ((r * 37 + s * 11) % 17) as f64 * 1.25 + 2e7);
        let two_step = build_d2ps_epoch(&build_subsets(&e, &sky(5)).unwrap(), 42, 0).unwrap();
        let fused = d2ps_epoch(&e, 42).unwrap();
        assert_eq!(two_step, fused);
        assert_ne!(d2ps_epoch(&e, 43).unwrap(), fused);
    }

    #[test]
    fn averaging_examples() {
        let a = D2psSampleSet {
            samples: vec![1.0, -2.0, 3.5],
            m: 2,
            j: 2,
            k: 1,
        };
        assert_eq!(
            average_epochs(std::slice::from_ref(&a)).unwrap().samples,
            a.samples
        );
        let b = D2psSampleSet {
            samples: a.samples.iter().map(|v| -v).collect(),
            ..a.clone()
        };
        let avg = average_epochs(&[a.clone(), b]).unwrap();
        assert!(avg.samples.iter().all(|&v| v == 0.0));
        assert_eq!(avg.k, 2);
        let short = D2psSampleSet {
            samples: vec![1.0],
            ..a.clone()
        };
        assert!(average_epochs(&[a, short]).is_err());
        assert!(average_epochs(&[]).is_err());
    }

    #[test]
    fn csv_dump() {
        let set = D2psSampleSet {
            samples: vec![0.5, -1.0],
            m: 2,
            j: 2,
            k: 1,
        };
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "idx,sample_m\n0,0.5\n1,-1\n"
        );
    }
}
