//! Command-line driver for the passive bistatic sensing pipeline.
//!
//! `bistatic pipeline` runs a whole configuration end to end; the other
//! subcommands run one stage each against files, so runs can be chained,
//! inspected, or rerun from any intermediate product.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bistatic_core::caf::{read_spectrogram_bin, write_spectrogram_bin, write_spectrogram_csv};
use bistatic_core::detection::{
    kalman_smooth, max_peak_track, read_doppler_track_csv, track_filter, write_doppler_track_csv,
};
use bistatic_core::evaluation::{percentile, write_cdf_csv, write_errors_csv};
use bistatic_core::iq::{read_iq, write_iq_with_seed};
use bistatic_core::pipeline::{
    read_track_csv, run_pipeline, simulate, write_track_csv, SuiteOutcome,
};
use bistatic_core::scenario::ReceiverId;
use bistatic_core::tracking::{align_spans, integrate_trajectory, perturb_initial_location};
use bistatic_core::{
    adaptive_threshold_detect, cancel_clutter, position_errors, CafParams, Error, InstanceTiming,
    PipelineConfig, Position2D, ScenarioLabel,
};

#[derive(Parser)]
#[command(
    name = "bistatic",
    version,
    about = "Passive bistatic Doppler sensing and trajectory reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the transmit waveform and both receiver chains to IQ files.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Directory for tx.iq, rx*_reference.iq, and rx*_surveillance.iq.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Remove static clutter from a surveillance capture.
    Cancel {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        surveillance: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Output IQ path for the cleaned capture.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the sliding-window CAF spectrogram of a capture pair.
    Caf {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        surveillance: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Output spectrogram path (binary, with embedded JSON header).
        #[arg(long)]
        out: PathBuf,
        /// Also render the spectrogram as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Detect, filter, and smooth a Doppler track from a spectrogram.
    Detect {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        spectrogram: PathBuf,
        /// Output Doppler track CSV.
        #[arg(long)]
        out: PathBuf,
        /// Emit the strongest-bin baseline instead of the filtered track.
        #[arg(long)]
        baseline: bool,
        /// Tag the output with a receiver (rx1 or rx2).
        #[arg(long)]
        receiver: Option<String>,
    },
    /// Dead-reckon a trajectory from two receivers' Doppler tracks.
    Track {
        #[command(flatten)]
        config: ConfigArg,
        /// Doppler track CSV for receiver 1.
        #[arg(long)]
        doppler1: PathBuf,
        /// Doppler track CSV for receiver 2.
        #[arg(long)]
        doppler2: PathBuf,
        /// Output trajectory CSV.
        #[arg(long)]
        out: PathBuf,
        /// Initial position "x,y" in meters; defaults to the true position.
        #[arg(long)]
        init: Option<String>,
        /// Initialize from a bearing-noise triangulation fix instead.
        #[arg(long)]
        noisy_init: bool,
    },
    /// Score a trajectory CSV against the scenario's ground truth.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        /// Trajectory CSV produced by `track` (or the pipeline).
        #[arg(long)]
        track: PathBuf,
        /// Scenario label recorded in the report file names.
        #[arg(long, default_value = "perfect_init")]
        label: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run simulation, processing, and evaluation end to end.
    Pipeline {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the configuration's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write the simulated IQ captures.
        #[arg(long)]
        write_iq: bool,
    },
}

/// Loads the pipeline config, folding file problems into the config error
/// class so every bad `--config` exits with the same code.
fn load_config(arg: &ConfigArg) -> Result<PipelineConfig, Error> {
    let mut config = PipelineConfig::load(&arg.config).map_err(|e| {
        if e.is_config_error() {
            e
        } else {
            Error::Config(e.to_string())
        }
    })?;
    if let Some(seed) = arg.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn parse_receiver(s: &str) -> Result<ReceiverId, Error> {
    match s {
        "rx1" => Ok(ReceiverId::Rx1),
        "rx2" => Ok(ReceiverId::Rx2),
        other => Err(Error::Config(format!(
            "receiver must be rx1 or rx2, got {other:?}"
        ))),
    }
}

fn parse_label(s: &str) -> Result<ScenarioLabel, Error> {
    match s {
        "perfect_init" => Ok(ScenarioLabel::PerfectInit),
        "noisy_init" => Ok(ScenarioLabel::NoisyInit),
        "baseline_maxpeak" => Ok(ScenarioLabel::BaselineMaxpeak),
        "aoa_triangulation" => Ok(ScenarioLabel::AoaTriangulation),
        other => Err(Error::Config(format!("unknown scenario label {other:?}"))),
    }
}

fn parse_position(s: &str) -> Result<Position2D, Error> {
    let (x, y) = s.split_once(',').ok_or_else(|| {
        Error::Config(format!(
            "initial position must look like \"x,y\", got {s:?}"
        ))
    })?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad coordinate {v:?} in {s:?}")))
    };
    Ok(Position2D::new(parse(x)?, parse(y)?))
}

/// Reconstructs the instance-time grid from a Doppler CSV's rows. The step
/// comes from the configuration, which is exact; the rows only anchor the
/// grid's origin.
fn timing_from_rows(track_k: &[usize], times: &[f64], caf: &CafParams) -> InstanceTiming {
    match (track_k.first(), times.first()) {
        (Some(&k0), Some(&t0_row)) => InstanceTiming {
            t0_s: t0_row - k0 as f64 * caf.detection_period_s,
            td_s: caf.detection_period_s,
        },
        _ => caf.timing(0.0),
    }
}

fn print_summary(outcome: &SuiteOutcome) {
    println!(
        "{:<20} {:>9} {:>10} {:>10} {:>10}",
        "scenario", "instances", "p50 [m]", "p90 [m]", "max [m]"
    );
    for s in &outcome.summary.scenarios {
        println!(
            "{:<20} {:>9} {:>10.3} {:>10.3} {:>10.3}",
            s.scenario.to_string(),
            s.instances,
            s.p50_m,
            s.p90_m,
            s.max_m
        );
    }
    for r in &outcome.summary.receivers {
        log::info!(
            "{}: {} instances, {} single / {} multiple / {} missed detections, {} holds",
            r.receiver_id,
            r.instances,
            r.single_detections,
            r.multiple_detections,
            r.missed_detections,
            r.holds
        );
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, out_dir } => {
            let config = load_config(&config)?;
            let sim = simulate(&config)?;
            std::fs::create_dir_all(&out_dir)?;
            let seeds = config.seeds();
            write_iq_with_seed(&out_dir.join("tx.iq"), &sim.tx, None, Some(seeds.transmit))?;
            for rc in &sim.receivers {
                let (ref_seed, surv_seed) = match rc.receiver_id {
                    ReceiverId::Rx1 => (seeds.rx1_reference, seeds.rx1_surveillance),
                    ReceiverId::Rx2 => (seeds.rx2_reference, seeds.rx2_surveillance),
                };
                write_iq_with_seed(
                    &out_dir.join(format!("{}_reference.iq", rc.receiver_id)),
                    &rc.reference,
                    None,
                    Some(ref_seed),
                )?;
                write_iq_with_seed(
                    &out_dir.join(format!("{}_surveillance.iq", rc.receiver_id)),
                    &rc.surveillance,
                    None,
                    Some(surv_seed),
                )?;
            }
            log::info!("wrote captures for both receivers to {}", out_dir.display());
            Ok(())
        }
        Command::Cancel {
            config,
            surveillance,
            reference,
            out,
        } => {
            let config = load_config(&config)?;
            let surv = read_iq(&surveillance)?;
            let refc = read_iq(&reference)?;
            let cleaned = cancel_clutter(&surv, &refc, &config.cancellation)?;
            write_iq_with_seed(&out, &cleaned, None, None)?;
            log::info!(
                "cancelled clutter: {:.1} dB -> {:.1} dB average power",
                10.0 * surv.average_power().log10(),
                10.0 * cleaned.average_power().log10()
            );
            Ok(())
        }
        Command::Caf {
            config,
            surveillance,
            reference,
            out,
            csv,
        } => {
            let config = load_config(&config)?;
            let surv = read_iq(&surveillance)?;
            let refc = read_iq(&reference)?;
            let maps = bistatic_core::caf_spectrogram(&surv, &refc, &config.caf)?;
            let timing = config.caf.timing(surv.start_time_s);
            write_spectrogram_bin(&out, &maps, &timing)?;
            if let Some(csv_path) = csv {
                write_spectrogram_csv(&csv_path, &maps, &timing)?;
            }
            log::info!("wrote {} CAF instances to {}", maps.len(), out.display());
            Ok(())
        }
        Command::Detect {
            config,
            spectrogram,
            out,
            baseline,
            receiver,
        } => {
            let config = load_config(&config)?;
            let receiver = receiver.as_deref().map(parse_receiver).transpose()?;
            let (maps, timing) = read_spectrogram_bin(&spectrogram)?;
            let track = if baseline {
                let mut t = max_peak_track(&maps, receiver.unwrap_or(ReceiverId::Rx1))?;
                t.receiver_id = receiver;
                t
            } else {
                let detections = maps
                    .iter()
                    .map(|m| adaptive_threshold_detect(m, &config.threshold))
                    .collect::<Result<Vec<_>, _>>()?;
                let filtered = track_filter(&detections, &config.filter)?;
                let mut smoothed = kalman_smooth(&filtered, &config.kalman.to_config(timing.td_s))?;
                smoothed.receiver_id = receiver;
                smoothed
            };
            write_doppler_track_csv(&out, &track, &timing)?;
            log::info!(
                "wrote {} Doppler estimates to {}",
                track.entries().len(),
                out.display()
            );
            Ok(())
        }
        Command::Track {
            config,
            doppler1,
            doppler2,
            out,
            init,
            noisy_init,
        } => {
            let config = load_config(&config)?;
            let scenario = config.resolve_scenario()?;
            let truth = scenario.build_track()?;
            let (t1, times1) = read_doppler_track_csv(&doppler1)?;
            let (t2, _) = read_doppler_track_csv(&doppler2)?;
            let ks: Vec<usize> = t1.entries().iter().map(|e| e.k).collect();
            let timing = timing_from_rows(&ks, &times1, &config.caf);
            let (t1, t2) = align_spans(&t1, &t2)?;
            let lo = t1.first_k().ok_or(Error::EmptyReport)?;

            let p0_true = truth.position_at(timing.time_s(lo))?;
            let p0 = match (init, noisy_init) {
                (Some(s), false) => parse_position(&s)?,
                (None, true) => perturb_initial_location(
                    p0_true,
                    &scenario.geometry,
                    config.tracking.init_bearing_noise_std_deg,
                    config.seeds().init_fix,
                )?,
                (None, false) => p0_true,
                (Some(_), true) => {
                    return Err(Error::Config(
                        "--init and --noisy-init are mutually exclusive".into(),
                    ))
                }
            };

            let estimate = integrate_trajectory(
                p0,
                &t1,
                &t2,
                &scenario.geometry,
                timing.td_s,
                config.tracking.condition_guard,
            )?;
            write_track_csv(&out, &estimate, &timing)?;
            log::info!(
                "dead-reckoned {} instances from ({:.2}, {:.2}) m",
                estimate.points.len(),
                p0.x,
                p0.y
            );
            Ok(())
        }
        Command::Eval {
            config,
            track,
            label,
            out_dir,
        } => {
            let config = load_config(&config)?;
            let label = parse_label(&label)?;
            let scenario = config.resolve_scenario()?;
            let truth = scenario.build_track()?;
            let fixes = read_track_csv(&track)?;
            let report = position_errors(&fixes, &truth, label, &config.evaluation.percentiles)?;
            std::fs::create_dir_all(&out_dir)?;
            write_errors_csv(&out_dir.join(format!("errors_{label}.csv")), &report)?;
            write_cdf_csv(&out_dir.join(format!("cdf_{label}.csv")), &report)?;
            println!(
                "{label}: {} instances, p50 {:.3} m, p90 {:.3} m, max {:.3} m",
                report.len(),
                percentile(&report, 50.0)?,
                percentile(&report, 90.0)?,
                percentile(&report, 100.0)?
            );
            Ok(())
        }
        Command::Pipeline {
            config,
            out_dir,
            write_iq,
        } => {
            let mut config = load_config(&config)?;
            if let Some(dir) = out_dir {
                config.out_dir = Some(dir);
            }
            if write_iq {
                config.write_iq = true;
            }
            let outcome = run_pipeline(&config)?;
            print_summary(&outcome);
            if let Some(dir) = &config.out_dir {
                log::info!("artifacts written to {}", dir.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
