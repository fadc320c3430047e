//! Command-line front end: `synth`, `padp`, `estimate`, `sweep-rp` and
//! `beampattern` subcommands over the scenario/CFR/CSV formats.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::beamform::{
    cbf_beam_pattern, cbf_padp, default_mode_cap, fibf_beam_pattern, fibf_padp,
    phase_mode_transform, SteeringConfig, Window,
};
use crate::estimator::{estimate_paths, rp_sweep, CancellationConfig};
use crate::io::{
    export_cir, export_estimates, export_padp, export_padp_snapshot, export_rp_table,
    parse_scenario, read_cfr_path, write_cfr_path,
};
use crate::scene::{synthesize_channel, FrequencyGrid, PathTruth, ScattererLocation, UcaGeometry};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "uca-sounder",
    version,
    about = "Near-field UWB channel synthesis and multipath estimation over a circular array"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Cbf,
    Fibf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WindowArg {
    Rectangular,
    RaisedCosine,
}

impl From<WindowArg> for Window {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Rectangular => Window::Rectangular,
            WindowArg::RaisedCosine => Window::RaisedCosine,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a channel (CFR) file from a scenario file
    Synth {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the noise seed declared in the scenario
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute a power-angle-delay profile from a CFR file
    Padp {
        cfr: PathBuf,
        #[arg(long, value_enum, default_value = "fibf")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        zero_pad: Option<usize>,
        #[arg(long)]
        azimuths: Option<usize>,
        #[arg(long)]
        mode_cap: Option<usize>,
        #[arg(long, value_enum)]
        window: Option<WindowArg>,
        /// dB floor the exported magnitudes are clipped at
        #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
        floor_db: f64,
    },
    /// Estimate multipath parameters by successive cancellation
    Estimate {
        cfr: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dynamic range in dB below the strongest detection
        #[arg(long)]
        eta: Option<f64>,
        /// Trajectory-mask depth in dB below each detection
        #[arg(long)]
        eta_t: Option<f64>,
        #[arg(long)]
        zero_pad: Option<usize>,
        #[arg(long)]
        azimuths: Option<usize>,
        #[arg(long)]
        mode_cap: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, value_enum)]
        window: Option<WindowArg>,
        /// Write per-iteration CIR/PADP snapshot CSVs into this directory
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
        floor_db: f64,
        /// Diagnostic: read amplitudes from the updated instead of the
        /// original PADP (underestimates co-delayed paths)
        #[arg(long)]
        amplitude_from_updated: bool,
    },
    /// Residual-power-rate sweep over bandwidth, distance and elevation
    SweepRp {
        /// Comma-separated bandwidths in Hz
        #[arg(long, value_delimiter = ',', required = true)]
        bandwidths: Vec<f64>,
        /// Comma-separated scatterer distances in m
        #[arg(long, value_delimiter = ',', required = true)]
        distances: Vec<f64>,
        /// Comma-separated elevation angles in degrees
        #[arg(long, value_delimiter = ',', required = true)]
        elevations: Vec<f64>,
        #[arg(long, default_value_t = 29e9)]
        fc: f64,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value_t = 720)]
        elements: usize,
        #[arg(long)]
        eta_t: Option<f64>,
        #[arg(long)]
        mode_cap: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-path unit beam patterns and the peak-vs-distance curve
    Beampattern {
        /// Comma-separated scatterer distances in m
        #[arg(long, value_delimiter = ',', required = true)]
        distances: Vec<f64>,
        #[arg(long, default_value_t = 29e9)]
        frequency: f64,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value_t = 720)]
        elements: usize,
        /// Path azimuth in degrees
        #[arg(long, default_value_t = 180.0)]
        azimuth: f64,
        #[arg(long)]
        azimuths: Option<usize>,
        #[arg(long)]
        mode_cap: Option<usize>,
        /// Peak-vs-distance curve CSV
        #[arg(long)]
        out: PathBuf,
        /// Optional full-pattern CSV (azimuth rows, one CBF and one FIBF
        /// column per distance)
        #[arg(long)]
        patterns_out: Option<PathBuf>,
    },
}

/// Runs the CLI against an argv-style iterator and returns the exit code.
/// Validation failures print exactly one diagnostic line on stderr.
pub fn cli_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                return 0;
            }
            let first_line = err.to_string();
            let first_line = first_line.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", first_line.trim_start_matches("error: "));
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::FileFormat {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            scenario,
            out,
            seed,
        } => {
            let text = std::fs::read_to_string(&scenario).map_err(|e| Error::FileFormat {
                context: scenario.display().to_string(),
                message: e.to_string(),
            })?;
            let mut sc = parse_scenario(&text)?;
            if let (Some(seed), Some(noise)) = (seed, sc.noise.as_mut()) {
                noise.seed = seed;
            }
            let ch = synthesize_channel(&sc.geometry, &sc.grid, &sc.path_truths()?, sc.noise)?;
            write_cfr_path(&out, &ch)
        }
        Command::Padp {
            cfr,
            method,
            out,
            zero_pad,
            azimuths,
            mode_cap,
            window,
            floor_db,
        } => {
            let ch = read_cfr_path(&cfr)?;
            let mut config = SteeringConfig {
                mode_cap,
                ..Default::default()
            };
            if let Some(z) = zero_pad {
                config.zero_pad_factor = z;
            }
            if let Some(a) = azimuths {
                config.azimuth_count = a;
            }
            if let Some(w) = window {
                config.window = w.into();
            }
            let padp = match method {
                Method::Cbf => cbf_padp(&ch, &config)?,
                Method::Fibf => fibf_padp(&ch, &config)?,
            };
            export_padp(&mut create(&out)?, &padp, floor_db)
        }
        Command::Estimate {
            cfr,
            out,
            eta,
            eta_t,
            zero_pad,
            azimuths,
            mode_cap,
            max_iter,
            window,
            trace_dir,
            floor_db,
            amplitude_from_updated,
        } => {
            let ch = read_cfr_path(&cfr)?;
            let mut config = CancellationConfig {
                mode_cap,
                record_snapshots: trace_dir.is_some(),
                amplitude_from_updated,
                ..Default::default()
            };
            if let Some(v) = eta {
                config.dynamic_range_db = v;
            }
            if let Some(v) = eta_t {
                config.label_threshold_db = v;
            }
            if let Some(v) = zero_pad {
                config.zero_pad_factor = v;
            }
            if let Some(v) = azimuths {
                config.azimuth_count = v;
            }
            if let Some(v) = max_iter {
                config.max_iterations = v;
            }
            if let Some(w) = window {
                config.window = w.into();
            }
            let (estimates, trace) = estimate_paths(&ch, &config)?;
            export_estimates(&mut create(&out)?, &estimates)?;
            if let Some(dir) = trace_dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::FileFormat {
                    context: dir.display().to_string(),
                    message: e.to_string(),
                })?;
                for (i, record) in trace.iterations.iter().enumerate() {
                    // h^{q} and b^{q} with q = i removed paths.
                    if let Some(cir) = &record.cir_magnitude {
                        let path = dir.join(format!("cir_{i}.csv"));
                        export_cir(&mut create(&path)?, cir, &trace, floor_db)?;
                    }
                    if let Some(padp) = &record.padp_magnitude {
                        let path = dir.join(format!("padp_{i}.csv"));
                        export_padp_snapshot(&mut create(&path)?, padp, &trace, floor_db)?;
                    }
                }
            }
            Ok(())
        }
        Command::SweepRp {
            bandwidths,
            distances,
            elevations,
            fc,
            radius,
            elements,
            eta_t,
            mode_cap,
            out,
        } => {
            let geom = UcaGeometry::new(radius, elements)?;
            let mut config = CancellationConfig {
                mode_cap,
                ..Default::default()
            };
            if let Some(v) = eta_t {
                config.label_threshold_db = v;
            }
            let samples = rp_sweep(&geom, fc, &bandwidths, &distances, &elevations, &config)?;
            export_rp_table(&mut create(&out)?, &samples)
        }
        Command::Beampattern {
            distances,
            frequency,
            radius,
            elements,
            azimuth,
            azimuths,
            mode_cap,
            out,
            patterns_out,
        } => {
            let geom = UcaGeometry::new(radius, elements)?;
            // Three-point grid keeps the middle row at the exact frequency.
            let grid = FrequencyGrid::new(frequency - 1e6, frequency + 1e6, 3)?;
            let mut config = SteeringConfig {
                mode_cap,
                ..Default::default()
            };
            if let Some(a) = azimuths {
                config.azimuth_count = a;
            }
            config.validate()?;
            let cap = mode_cap.unwrap_or_else(|| default_mode_cap(&geom, &grid));
            let a_count = config.azimuth_count;
            let phi_n = azimuth.to_radians().rem_euclid(2.0 * std::f64::consts::PI);
            let target_bin = ((phi_n / (2.0 * std::f64::consts::PI) * a_count as f64).round()
                as usize)
                % a_count;

            let mut curve = Vec::new();
            let mut patterns: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
            for &d in &distances {
                let loc = ScattererLocation::new(d, std::f64::consts::FRAC_PI_2, phi_n)?;
                let path = PathTruth::new(Complex64::new(1.0, 0.0), 0.0, loc)?;
                let ch = synthesize_channel(&geom, &grid, &[path], None)?;
                let cbf = cbf_beam_pattern(&ch, &config);
                let fibf = fibf_beam_pattern(&phase_mode_transform(&ch, cap)?, &config);
                let cbf_row: Vec<f64> = (0..a_count).map(|a| cbf.at(1, a).norm()).collect();
                let fibf_row: Vec<f64> = (0..a_count).map(|a| fibf.at(1, a).norm()).collect();
                let cbf_target = cbf_row[target_bin];
                let fibf_peak = fibf_row.iter().cloned().fold(0.0, f64::max);
                curve.push((d, cbf_target, fibf_peak));
                patterns.push((d, cbf_row, fibf_row));
            }

            let mut writer = create(&out)?;
            use std::io::Write;
            writeln!(writer, "distance_m,cbf_target_db,fibf_peak_db")?;
            for (d, cbf, fibf) in &curve {
                writeln!(
                    writer,
                    "{},{},{}",
                    d,
                    20.0 * cbf.log10(),
                    20.0 * fibf.log10()
                )?;
            }

            if let Some(path) = patterns_out {
                let mut writer = create(&path)?;
                let mut header = String::from("azimuth_deg");
                for (d, _, _) in &patterns {
                    header.push_str(&format!(",cbf_d{d}_db,fibf_d{d}_db"));
                }
                writeln!(writer, "{header}")?;
                for a in 0..a_count {
                    let mut line = format!("{}", 360.0 * a as f64 / a_count as f64);
                    for (_, cbf, fibf) in &patterns {
                        line.push_str(&format!(
                            ",{:.2},{:.2}",
                            (20.0 * cbf[a].log10()).max(-40.0),
                            (20.0 * fibf[a].log10()).max(-40.0)
                        ));
                    }
                    writeln!(writer, "{line}")?;
                }
            }
            Ok(())
        }
    }
}
