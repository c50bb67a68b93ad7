mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shfront::geometry::{builtin_geometry, GeometryKind};
use shfront::profile::ModelKind;
use shfront::sht_frontend::RandShtPolicy;
use shfront::simulate::{Scene, SPEED_OF_SOUND};
use shfront::ssafn::SsafnConfig;
use shfront::stft::{StftConfig, WindowKind};

use commands::{draw_subset, parse_indices, run_all, run_job};
use error::{input_error, output_error, CliError};
use manifest::{absolute, EnhanceJob, Job, RunManifest, SimulateJob, TransformJob, WavFormat};

#[derive(Parser)]
#[command(name = "shfront", version, about = "Spherical harmonic multichannel audio frontend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a plane-wave scene onto a microphone array.
    Simulate {
        scene: PathBuf,
        output: PathBuf,
        /// Noise seed; overrides the scene's own seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = WavFormat::Float32)]
        format: WavFormat,
    },
    /// Multichannel WAV to a spherical harmonic magnitude tensor (SHT1).
    Transform(TransformArgs),
    /// Magnitude tensor to a single enhanced spectrogram (SHT1).
    Enhance {
        /// Input/output pairs: IN.sht1 OUT.sht1 [IN OUT ...]
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        /// Worker threads, one input file each.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Analytic cost curves.
    Profile {
        /// Durations in seconds: `A..B` (step 1) or a comma list.
        #[arg(long, default_value = "1..10")]
        seconds: String,
        #[arg(long, value_delimiter = ',', default_value = "shtnet,blstm")]
        models: Vec<ModelKind>,
        /// Emit JSON instead of CSV.
        #[arg(long)]
        json: bool,
        /// Write here instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Geometry utilities.
    Geometry {
        #[command(subcommand)]
        command: GeometryCommand,
    },
    /// Network weight utilities.
    Weights {
        #[command(subcommand)]
        command: WeightsCommand,
    },
    /// Re-run a command from the manifest written next to its output.
    Replay {
        manifest: PathBuf,
        /// Write the output here instead of the recorded path.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TransformArgs {
    /// Input/output pairs: IN.wav OUT.sht1 [IN OUT ...]
    #[arg(required = true, num_args = 2..)]
    files: Vec<PathBuf>,
    #[arg(long)]
    geometry: PathBuf,
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Comma-separated microphone indices to keep.
    #[arg(long, conflicts_with = "random_subset")]
    subset: Option<String>,
    /// Draw a random microphone subset using --seed.
    #[arg(long)]
    random_subset: bool,
    /// Smallest random subset size.
    #[arg(long, default_value_t = 2)]
    min_mics: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    fft_size: Option<usize>,
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rectangular,
}

#[derive(Subcommand)]
enum GeometryCommand {
    /// Check a geometry file and summarize it as JSON.
    Validate {
        path: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Highest frequency of interest for the far-field distance.
        #[arg(long, default_value_t = 8000.0)]
        f_max: f64,
        #[arg(long, default_value_t = SPEED_OF_SOUND)]
        speed_of_sound: f64,
    },
    /// Write a built-in array layout as a geometry file.
    Builtin {
        #[arg(value_enum)]
        kind: BuiltinKind,
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Radius of circular arrays in meters.
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
        /// Side length of square arrays in meters.
        #[arg(long, default_value_t = 0.1)]
        side: f64,
        /// Ear spacing of binaural arrays in meters.
        #[arg(long, default_value_t = 0.18)]
        spacing: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinKind {
    Circular,
    Square,
    Binaural,
}

#[derive(Subcommand)]
enum WeightsCommand {
    /// Write seeded random weights for a network configuration.
    Init {
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        channels: usize,
        #[arg(long, default_value_t = 257)]
        bins: usize,
        #[arg(long)]
        no_joint_attention: bool,
        #[arg(long)]
        no_rsacc: bool,
        #[arg(long)]
        no_mhsa: bool,
    },
}

fn pairs(files: &[PathBuf]) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    if files.len() % 2 != 0 {
        return Err(CliError::usage("expected input/output pairs"));
    }
    Ok(files
        .chunks_exact(2)
        .map(|p| (absolute(&p[0]), absolute(&p[1])))
        .collect())
}

fn parse_seconds(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("invalid --seconds {text:?}"));
    let values: Vec<f64> = if let Some((a, b)) = text.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).map(f64::from).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(bad());
    }
    Ok(values)
}

fn transform_jobs(args: TransformArgs) -> Result<Vec<Job>, CliError> {
    let geometry = absolute(&args.geometry);
    let mut jobs = Vec::new();
    for (input, output) in pairs(&args.files)? {
        let audio = shfront::io::read_wav(&input).map_err(input_error(format!("cannot read {}", input.display())))?;
        let mut stft = StftConfig::for_sample_rate(audio.sample_rate);
        if let Some(v) = args.fft_size {
            stft.fft_size = v;
        }
        if let Some(v) = args.frame_len {
            stft.frame_len = v;
        }
        if let Some(v) = args.hop {
            stft.hop = v;
        }
        if let Some(w) = args.window {
            stft.window = match w {
                WindowArg::Hann => WindowKind::PeriodicHann,
                WindowArg::Rectangular => WindowKind::Rectangular,
            };
        }
        stft.validate().map_err(input_error("invalid STFT settings"))?;
        let (subset, subset_seed) = if let Some(text) = &args.subset {
            (Some(parse_indices(text)?), None)
        } else if args.random_subset {
            let policy = RandShtPolicy {
                min_channels: args.min_mics,
                max_channels: None,
                seed: args.seed,
            };
            (Some(draw_subset(audio.channels.len(), policy)?), Some(args.seed))
        } else {
            (None, None)
        };
        jobs.push(Job::Transform(TransformJob {
            input,
            output,
            geometry: geometry.clone(),
            order: args.order,
            subset,
            subset_seed,
            stft,
        }));
    }
    Ok(jobs)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scene, output, seed, format } => {
            let scene = absolute(&scene);
            let file_seed = Scene::load(&scene)
                .map_err(input_error(format!("cannot load scene {}", scene.display())))?
                .seed;
            run_job(&Job::Simulate(SimulateJob {
                scene,
                output: absolute(&output),
                seed: seed.unwrap_or(file_seed),
                format,
            }))
        }
        Command::Transform(args) => {
            let jobs = args.jobs;
            run_all(&transform_jobs(args)?, jobs)
        }
        Command::Enhance { files, weights, jobs } => {
            let weights = absolute(&weights);
            let batch: Vec<Job> = pairs(&files)?
                .into_iter()
                .map(|(input, output)| {
                    Job::Enhance(EnhanceJob {
                        input,
                        output,
                        weights: weights.clone(),
                    })
                })
                .collect();
            run_all(&batch, jobs)
        }
        Command::Profile { seconds, models, json, output } => {
            let seconds = parse_seconds(&seconds)?;
            let reduction = commands::reduction_at_ten_seconds()?;
            let line = format!("FLOP reduction at 10 s vs BLSTM baseline: {:.1}%", 100.0 * reduction);
            match output {
                Some(path) => {
                    run_job(&commands::profile_job(seconds, models, json, absolute(&path)))?;
                    println!("{line}");
                }
                None => {
                    print!("{}", commands::profile_text(&seconds, &models, json)?);
                    eprintln!("{line}");
                }
            }
            Ok(())
        }
        Command::Geometry { command } => match command {
            GeometryCommand::Validate { path, order, f_max, speed_of_sound } => {
                let summary = commands::validate_geometry(&path, order, f_max, speed_of_sound)?;
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
                Ok(())
            }
            GeometryCommand::Builtin { kind, output, count, radius, side, spacing } => {
                let kind = match kind {
                    BuiltinKind::Circular => GeometryKind::UniformCircular { count, radius },
                    BuiltinKind::Square => GeometryKind::Square { side },
                    BuiltinKind::Binaural => GeometryKind::Binaural { spacing },
                };
                let g = builtin_geometry(kind).map_err(input_error("invalid array parameters"))?;
                g.save(&output).map_err(output_error(format!("cannot write {}", output.display())))
            }
        },
        Command::Weights { command } => match command {
            WeightsCommand::Init { output, seed, channels, bins, no_joint_attention, no_rsacc, no_mhsa } => {
                let config = SsafnConfig {
                    channels,
                    bins,
                    use_joint_attention: !no_joint_attention,
                    use_rsacc: !no_rsacc,
                    use_mhsa: !no_mhsa,
                    ..SsafnConfig::default()
                };
                run_job(&commands::weights_job(absolute(&output), seed, config))
            }
        },
        Command::Replay { manifest, output } => {
            let mut m = RunManifest::load(&manifest)?;
            if let Some(path) = output {
                m.job.set_output(absolute(&path));
            }
            run_job(&m.job)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shfront: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
