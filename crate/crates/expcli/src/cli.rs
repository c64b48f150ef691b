use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use dbci::{run_decentralized, Schedule};
use identify::{identify_tree, AlgoConfig, Regularizer, Variant};
use network::{FeederNetwork, Topology};
use simulator::{add_noise, measure, simulate, write_ground_truth_csv, MeasurementSet, NoiseSpec};

use crate::run::{write_aggregate_csv, write_records_csv, ExperimentRecord};
use crate::scenario::{LoadPreset, Scenario};
use crate::seed::{loads_seed, noise_seed};
use crate::summary::summarize;
use crate::{run_scenario, ExpError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "feederid", about = "Line impedance identification from smart-meter data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a feeder and write (noisy) meter readings.
    Simulate {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        snapshots: usize,
        /// Accuracy class in percent of full scale.
        #[arg(long, default_value_t = 0.0)]
        noise_pct: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the exact nodal solution.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PresetArg::NormalPf)]
        load_preset: PresetArg,
    },
    /// Estimate every line impedance from meter readings.
    Identify {
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        algo: Variant,
        /// Known X/R ratio of every line.
        #[arg(long)]
        xr: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        /// Noise class recorded in the output rows.
        #[arg(long, default_value_t = 0.0)]
        noise_pct: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decentralised run with one agent per meter; each agent knows the X/R
    /// ratio of its lines from the topology.
    Dbci {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_variant, default_value = "bci")]
        algo: Variant,
        /// Run without X/R knowledge.
        #[arg(long)]
        no_xr: bool,
        /// Random activation order with this seed instead of leaf-to-root.
        #[arg(long)]
        schedule_seed: Option<u64>,
    },
    /// Run a scenario sweep and write records and summary tables.
    Experiment {
        /// Scenario JSON file or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PresetArg {
    NormalPf,
    HighPf,
}

impl From<PresetArg> for LoadPreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::NormalPf => LoadPreset::NormalPf,
            PresetArg::HighPf => LoadPreset::HighPf,
        }
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: identify::IdentifyError| e.to_string())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_VALIDATION
            }
        }
    }
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn identify_err(context: &str) -> impl FnOnce(identify::IdentifyError) -> ExpError + '_ {
    move |source| ExpError::Identify { context: context.into(), source }
}

fn load_network(topology: &Path, m: usize) -> Result<FeederNetwork, ExpError> {
    let topo = Topology::read(topology)?;
    Ok(topo.to_network(base_dir(topology), Some(m), None)?)
}

fn read_measurements(path: &Path) -> Result<MeasurementSet, ExpError> {
    let ms = MeasurementSet::read_csv(path)?;
    ms.validate()?;
    Ok(ms)
}

pub fn execute(cmd: Command) -> Result<(), ExpError> {
    match cmd {
        Command::Simulate { topology, snapshots, noise_pct, seed, out, truth, load_preset } => {
            if !(noise_pct.is_finite() && noise_pct >= 0.0) {
                return Err(ExpError::InvalidScenario(format!("noise percentage must be >= 0, got {noise_pct}")));
            }
            let topo = Topology::read(&topology)?;
            let cfg = LoadPreset::from(load_preset).config();
            let net = topo.to_network(base_dir(&topology), Some(snapshots), Some((&cfg, loads_seed(seed))))?;
            let snaps = simulate(&net)?;
            let ideal = measure(&net, &snaps);
            let noisy = add_noise(&ideal, &NoiseSpec::for_ideal(&ideal, noise_pct / 100.0, noise_seed(seed, 0)))?;
            noisy.write_csv(&out)?;
            if let Some(t) = truth {
                write_ground_truth_csv(&t, &snaps)?;
            }
            Ok(())
        }
        Command::Identify { measurements, topology, algo, xr, mu, alpha, eps, max_iters, noise_pct, out } => {
            let ms = read_measurements(&measurements)?;
            let net = load_network(&topology, ms.len())?;
            let cfg = AlgoConfig {
                variant: algo,
                xr_ratio: xr,
                reg: mu.map(|mu| Regularizer { mu, ..Regularizer::default_for(xr) }),
                alpha,
                eps,
                max_iters,
                ..AlgoConfig::default()
            };
            let est = identify_tree(&ms, &net, &cfg).map_err(identify_err("identify"))?;
            let name = if xr.is_some() { format!("{}_xr", algo.as_str()) } else { algo.as_str().to_string() };
            let rec = ExperimentRecord::from_estimate("cli", &name, noise_pct, 0, ms.len(), &net, &est);
            write_records_csv(&out, &[rec])
        }
        Command::Dbci { topology, measurements, trace, out, algo, no_xr, schedule_seed } => {
            let ms = read_measurements(&measurements)?;
            let net = load_network(&topology, ms.len())?;
            let cfg_for = |k: usize| {
                let c = AlgoConfig::new(algo);
                if no_xr {
                    c
                } else {
                    c.with_xr(net.xr_ratio(k))
                }
            };
            let schedule = schedule_seed.map_or(Schedule::Sequential, |seed| Schedule::Random { seed });
            let run = run_decentralized(&net, &ms, &cfg_for, &schedule)?;
            run.write_trace(&trace)?;
            let name = if no_xr { format!("d{}", algo.as_str()) } else { format!("d{}_xr", algo.as_str()) };
            let rec = ExperimentRecord::from_estimate("cli", &name, 0.0, 0, ms.len(), &net, &run.estimate);
            write_records_csv(&out, &[rec])
        }
        Command::Experiment { scenario, out_dir } => {
            let path = Path::new(&scenario);
            let sc = if path.exists() { Scenario::read(path)? } else { Scenario::bundled(&scenario)? };
            std::fs::create_dir_all(&out_dir).map_err(|source| ExpError::Io { path: out_dir.clone(), source })?;
            let records = run_scenario(&sc)?;
            write_records_csv(&out_dir.join("records.csv"), &records)?;
            write_aggregate_csv(&out_dir.join("aggregate.csv"), &records)?;
            summarize(&records)?.write(&out_dir)?;
            sc.network.topology(sc.max_snapshots()).write(&out_dir.join("topology.json"))?;
            let echo = serde_json::to_string_pretty(&sc).expect("plain data");
            let p = out_dir.join("scenario.json");
            std::fs::write(&p, echo + "\n").map_err(|source| ExpError::Io { path: p, source })
        }
    }
}
