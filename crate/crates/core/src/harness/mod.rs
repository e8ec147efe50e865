//! Monte Carlo machinery: experiment grids, ROC sweeps, timing, histogram
//! and CSV reports, run manifests, and the acceptance runs.

pub mod acceptance;
mod bench;
mod experiment;
mod report;

pub use bench::{fit_exponent, timing_benchmark, write_timing_csv, TimingRow};
pub use experiment::{
    d2ps_trial_variance, grid_points, roc_sweep, run_experiment, trial_world, write_results_csv,
    write_roc_csv, ExperimentSpec, GridPoint, Method, ResizeConfig, ResultRow, RocRow, Sweep,
};
pub use report::{
    histogram_report, ks_critical_value, ks_statistic, HistogramBin, HistogramReport, RunManifest,
};

/// Map `f` over `0..n` on all available cores. The output order is the
/// index order, so results do not depend on scheduling.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots
        .into_iter()
        .map(|v| v.expect("every index mapped"))
        .collect()
}
