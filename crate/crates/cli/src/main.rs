use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use d2ps_core::d2ps::build_d2ps;
use d2ps_core::detector::{detect, write_detection_csv, DetectionRow};
use d2ps_core::glrt::{glrt_detect, GlrtConfig};
use d2ps_core::harness::acceptance::{criteria, run_criterion};
use d2ps_core::harness::{
    histogram_report, roc_sweep, run_experiment, timing_benchmark, trial_world, write_results_csv,
    write_roc_csv, write_timing_csv, ExperimentSpec, Method, ResizeConfig, RunManifest, Sweep,
};
use d2ps_core::resize::{
    enclose, map_and_tag, partition, per_region_detection_inputs, write_resize_report,
};
use d2ps_core::rng::stream;
use d2ps_core::scenario::{
    generate_world, read_measurements_csv, read_receivers_csv, write_measurements_csv,
    write_receivers_csv, Enu, EpochMeasurements, RoiBounds, ScenarioConfig,
};
use d2ps_core::statmodels::{
    variance_h0, variance_h0_with_noise, variance_h1, variance_h2, variance_partial_sats,
    CrossTermReading, VariancePrediction,
};

#[derive(Parser)]
#[command(
    name = "d2ps",
    version,
    about = "Crowdsourced GNSS spoofing detection by D²PS"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML with roi, spoofer, noise and run sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; defaults to the scenario's `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1000)]
    trials: usize,
    #[arg(long, global = true, value_enum, default_value_t = MethodArg::D2ps)]
    method: MethodArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    D2ps,
    Glrt,
    Both,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::D2ps => Method::D2ps,
            MethodArg::Glrt => Method::Glrt,
            MethodArg::Both => Method::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReadingArg {
    Literal,
    StdProduct,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one world and dump its measurements and receivers.
    Simulate,
    /// Run detection on dumped measurements.
    Detect {
        #[arg(long)]
        measurements: PathBuf,
        /// Receiver table; needed for --resize.
        #[arg(long)]
        receivers: Option<PathBuf>,
        #[arg(long, default_value_t = 0.001)]
        epsilon: f64,
        /// Per-pair false alarm of the GLRT baseline.
        #[arg(long, default_value_t = 0.01)]
        fa_pair: f64,
        /// Partition the area and detect per enclosed region.
        #[arg(long)]
        resize: bool,
        #[arg(long, default_value_t = 5)]
        divisions: usize,
        #[arg(long, default_value_t = 4)]
        threshold: usize,
    },
    /// Print the closed-form variance predictions.
    Variance {
        /// Side of the square area, m.
        #[arg(long, default_value_t = 100.0)]
        d: f64,
        #[arg(long, default_value_t = 5.0)]
        sigma_rho: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Counterfeit position east, north, m.
        #[arg(long, num_args = 2, default_values_t = [150.0, 0.0])]
        pf: Vec<f64>,
        #[arg(long)]
        spoofed_sats: Option<usize>,
        #[arg(long, value_enum, default_value_t = ReadingArg::StdProduct)]
        reading: ReadingArg,
    },
    /// ROC table of a fully spoofed scenario.
    Roc {
        #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1])]
        fa: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        d: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        delta_sigma: Vec<f64>,
    },
    /// Detection probability over spoofed fraction, counterfeit distance or
    /// spoofed-satellite count.
    PartialSweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.001])]
        fa: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        pf_ratio: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        spoofed_sats: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        d: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        #[arg(long)]
        resize: bool,
    },
    /// Detection time of both methods over receiver counts.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [10, 25, 50, 100])]
        m: Vec<usize>,
        #[arg(long, default_value_t = 12)]
        j: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Run the acceptance criteria.
    Reproduce {
        /// Only these criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Histogram of one world's D²PS set against the predicted normal.
    Histogram {
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
}

struct Run {
    common: Common,
    scenario: ScenarioConfig,
    config_text: String,
    started: Instant,
    outputs: Vec<String>,
}

impl Run {
    fn new(common: Common) -> Result<Self> {
        let (scenario, config_text) = match &common.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                (ScenarioConfig::from_toml(&text)?, text)
            }
            None => {
                let s = ScenarioConfig::default();
                let text = s.to_toml();
                (s, text)
            }
        };
        Ok(Self {
            common,
            scenario,
            config_text,
            started: Instant::now(),
            outputs: Vec::new(),
        })
    }

    fn seed(&self) -> u64 {
        self.common.seed.unwrap_or(self.scenario.run.seed)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.common.out)
            .with_context(|| format!("creating {}", self.common.out.display()))?;
        let path = self.common.out.join(name);
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    }

    fn spec(&self) -> ExperimentSpec {
        ExperimentSpec::new(
            self.scenario.clone(),
            self.common.method.into(),
            self.common.trials,
            self.seed(),
        )
    }

    fn finish(mut self, command: &str) -> Result<()> {
        let mut m = RunManifest::new(command, self.seed(), self.common.trials, &self.config_text);
        m.outputs = std::mem::take(&mut self.outputs);
        m.wall_time_s = self.started.elapsed().as_secs_f64();
        m.write(self.common.out.join("manifest.toml"))?;
        for o in &m.outputs {
            println!("wrote {}", self.common.out.join(o).display());
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn print_prediction(label: &str, p: &VariancePrediction) {
    let inputs: Vec<String> = p.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{label:<28} {:>14.4} m^2  ({})",
        p.sigma2,
        inputs.join(", ")
    );
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut run = Run::new(cli.common)?;
    match cli.command {
        Command::Simulate => {
            let sky = run.scenario.sky_view()?;
            let world = generate_world(&run.scenario, &sky, &mut stream(run.seed(), &[1]))?;
            write_measurements_csv(run.create("measurements.csv")?, &world.epochs)?;
            write_receivers_csv(run.create("receivers.csv")?, &world.receivers)?;
            run.finish("simulate")
        }
        Command::Detect {
            measurements,
            receivers,
            epsilon,
            fa_pair,
            resize,
            divisions,
            threshold,
        } => {
            let epochs = read_measurements_csv(open(&measurements)?)?;
            let sky = run.scenario.sky_view()?;
            let sigma = run.scenario.noise.sigma_rho;
            let method: Method = run.common.method.into();
            let seed = run.seed();
            let mut d2ps_rows = Vec::new();
            let mut glrt_rows = Vec::new();
            let glrt_cfg = GlrtConfig {
                sigma_rho: sigma,
                fa_pair,
                k: epochs.len(),
                ..GlrtConfig::default()
            };
            let mut enclosed = Vec::new();
            let regions: Vec<(usize, RoiBounds, Vec<EpochMeasurements>)> = if resize {
                let Some(rpath) = receivers else {
                    bail!("--resize needs --receivers");
                };
                let rx = read_receivers_csv(open(&rpath)?)?;
                let grid = map_and_tag(
                    &partition(&run.scenario.roi, divisions, divisions)?,
                    &rx,
                    threshold,
                )?;
                enclosed = enclose(&grid);
                if enclosed.is_empty() {
                    bail!("no active cells: every cell holds {threshold} receivers or fewer");
                }
                per_region_detection_inputs(&enclosed, &epochs)?
                    .inputs
                    .into_iter()
                    .map(|i| (i.region_id, i.bounds, i.epochs))
                    .collect()
            } else {
                vec![(0, run.scenario.roi, epochs)]
            };
            for (id, bounds, eps) in &regions {
                if matches!(method, Method::D2ps | Method::Both) {
                    let s2 = variance_h0(bounds.dx(), bounds.dy(), &sky)?.sigma2;
                    let set = build_d2ps(eps, seed)?;
                    d2ps_rows.push(DetectionRow::from(&detect(*id, &set, s2, epsilon)?));
                }
                if matches!(method, Method::Glrt | Method::Both) {
                    let o = glrt_detect(eps, &glrt_cfg)?;
                    glrt_rows.push(DetectionRow {
                        region_id: *id,
                        variance_m2: None,
                        gamma1: None,
                        gamma2: None,
                        decision: o.decision,
                        pd_h1_pred: None,
                        pd_h2_pred: None,
                    });
                }
            }
            if resize {
                let rows = if d2ps_rows.is_empty() {
                    &glrt_rows
                } else {
                    &d2ps_rows
                };
                let mut decisions = vec![None; enclosed.len()];
                for r in rows {
                    decisions[r.region_id] = Some(r.decision);
                }
                write_resize_report(run.create("resize_report.csv")?, &enclosed, &decisions)?;
            }
            for r in d2ps_rows.iter().chain(&glrt_rows) {
                println!("region {}: {}", r.region_id, r.decision);
            }
            match method {
                Method::D2ps => {
                    write_detection_csv(run.create("detection.csv")?, &d2ps_rows, None)?
                }
                Method::Glrt => {
                    write_detection_csv(run.create("detection.csv")?, &glrt_rows, Some("glrt"))?
                }
                Method::Both => {
                    write_detection_csv(run.create("detection.csv")?, &d2ps_rows, None)?;
                    write_detection_csv(
                        run.create("detection_glrt.csv")?,
                        &glrt_rows,
                        Some("glrt"),
                    )?;
                }
            }
            run.finish("detect")
        }
        Command::Variance {
            d,
            sigma_rho,
            k,
            alpha,
            pf,
            spoofed_sats,
            reading,
        } => {
            let sky = run.scenario.sky_view()?;
            let reading = match reading {
                ReadingArg::Literal => CrossTermReading::Literal,
                ReadingArg::StdProduct => CrossTermReading::StdProduct,
            };
            let roi = RoiBounds::centered_square(d)?;
            let h0 = variance_h0(d, d, &sky)?;
            print_prediction("spoofing-free", &h0);
            print_prediction(
                "spoofing-free with noise",
                &variance_h0_with_noise(d, d, &sky, sigma_rho, k)?,
            );
            print_prediction("fully spoofed", &variance_h1(sigma_rho, k)?);
            let p_f = Enu::horizontal(pf[0], pf[1]);
            print_prediction(
                "partially spoofed",
                &variance_h2(alpha, &roi, &p_f, &sky, sigma_rho, reading)?,
            );
            if let Some(s) = spoofed_sats {
                print_prediction(
                    "partial satellites",
                    &variance_partial_sats(s, sky.len(), h0.sigma2, sigma_rho)?,
                );
            }
            Ok(())
        }
        Command::Roc {
            fa,
            d,
            m,
            delta_sigma,
        } => {
            let mut spec = run.spec();
            spec.scenario.spoofer.spoofed_fraction = 1.0;
            spec.sweep = Sweep {
                fa,
                d,
                m,
                delta_sigma,
                ..Sweep::default()
            };
            let rows = roc_sweep(&spec)?;
            write_roc_csv(run.create("roc.csv")?, &rows)?;
            run.finish("roc")
        }
        Command::PartialSweep {
            fa,
            alpha,
            pf_ratio,
            spoofed_sats,
            d,
            m,
            resize,
        } => {
            let mut spec = run.spec();
            spec.sweep = Sweep {
                fa,
                alpha,
                d,
                m,
                spoofed_sats,
                pf_ratio,
                ..Sweep::default()
            };
            if resize {
                spec.resize = Some(ResizeConfig::default());
            }
            let rows = run_experiment(&spec)?;
            write_results_csv(run.create("results.csv")?, &rows)?;
            run.finish("partial-sweep")
        }
        Command::Bench { m, j, k } => {
            let rows = timing_benchmark(&m, j, k, run.common.trials, run.seed())?;
            write_timing_csv(run.create("timing.csv")?, &rows)?;
            run.finish("bench")
        }
        Command::Reproduce { only } => {
            let mut w = csv::Writer::from_writer(run.create("acceptance.csv")?);
            w.write_record(["criterion", "name", "passed", "seconds", "detail"])?;
            let mut failed = 0;
            for (id, _) in criteria() {
                if !only.is_empty() && !only.contains(&id) {
                    continue;
                }
                let Some(r) = run_criterion(id) else { continue };
                println!(
                    "[{}] {:>2} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.id,
                    r.name,
                    r.detail
                );
                failed += usize::from(!r.passed);
                w.write_record([
                    r.id.to_string(),
                    r.name.to_string(),
                    r.passed.to_string(),
                    format!("{:.2}", r.elapsed_s),
                    r.detail,
                ])?;
            }
            w.flush()?;
            drop(w);
            run.finish("reproduce")?;
            if failed > 0 {
                bail!("{failed} criteria failed");
            }
            Ok(())
        }
        Command::Histogram { bins } => {
            let sky = run.scenario.sky_view()?;
            let world = trial_world(&run.scenario, &sky, None, run.seed())?;
            let set = build_d2ps(&world.epochs, run.seed())?;
            let roi = run.scenario.roi;
            let prediction = variance_h0(roi.dx(), roi.dy(), &sky)?;
            let report = histogram_report(&set, &prediction, bins)?;
            report.write_csv(run.create("histogram.csv")?)?;
            set.write_csv(run.create("d2ps_samples.csv")?)?;
            println!(
                "KS distance from N(0, {:.1}): {:.4}",
                prediction.sigma2, report.ks
            );
            run.finish("histogram")
        }
    }
}
