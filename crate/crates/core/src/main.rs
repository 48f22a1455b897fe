use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use adaptive_spectrogram::adaptive::{adapt, AdaptiveSpectrogram, MultiFrameConfig, Version};
use adaptive_spectrogram::entropy::RenyiOrder;
use adaptive_spectrogram::export::{
    export_selection, export_spectrogram, SpectrogramFormat, DEFAULT_DB_FLOOR,
};
use adaptive_spectrogram::resynth::{interior_error, reconstruct};
use adaptive_spectrogram::signal::{synth_test_signal, Signal, SignalKind};
use adaptive_spectrogram::wav::{read_wav, write_wav, WavFormat};
use adaptive_spectrogram::{selftest, Error, Result};

/// Entropy-driven adaptive spectrograms.
#[derive(Debug, Parser)]
#[command(name = "adaspec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze a WAV file and export the spectrogram and selection track.
    Analyze {
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        outputs: OutputArgs,
    },
    /// Analyze a WAV file, resynthesize it and report the interior error.
    Resynth {
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        outputs: OutputArgs,
    },
    /// Synthesize a test signal (sine, fm_sine, impulse, percussive_harmonic) and analyze it.
    Demo {
        kind: SignalKind,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long, default_value_t = 44100.0)]
        sample_rate: f64,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        outputs: OutputArgs,
    },
    /// Run the built-in acceptance checks.
    Selftest {
        /// Run a single criterion (1-10).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=10))]
        criterion: Option<u8>,
    },
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[arg(long, default_value_t = 0.7, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 512)]
    min_window: usize,
    #[arg(long, default_value_t = 4096)]
    max_window: usize,
    #[arg(long, default_value_t = 8)]
    num_windows: usize,
    #[arg(long = "version", value_name = "v1|v2", default_value = "v2")]
    layout: Version,
    #[arg(long, default_value_t = 4)]
    segment_frames: usize,
    /// Frames shared by consecutive segments [default: 2, 3 for the fm_sine demo]
    #[arg(long)]
    segment_overlap: Option<usize>,
    #[arg(long, default_value_t = 0.75)]
    overlap_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Spectrogram export; .pgm writes a raster, anything else CSV.
    #[arg(long)]
    out_spectrogram: Option<PathBuf>,
    #[arg(long)]
    out_selection: Option<PathBuf>,
    /// Reconstructed signal (resynth) or synthesized signal (demo).
    #[arg(long)]
    out_wav: Option<PathBuf>,
    #[arg(long, default_value = "float32", value_name = "pcm16|float32")]
    wav_format: WavFormat,
    #[arg(long, default_value_t = DEFAULT_DB_FLOOR, allow_hyphen_values = true)]
    db_floor: f64,
}

/// Flag values rejected after parsing count as usage errors.
enum Failure {
    BadFlags(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl AnalysisArgs {
    fn config(&self, default_overlap: usize) -> std::result::Result<MultiFrameConfig, Failure> {
        self.try_config(default_overlap).map_err(Failure::BadFlags)
    }

    fn try_config(&self, default_overlap: usize) -> Result<MultiFrameConfig> {
        let config = MultiFrameConfig {
            version: self.layout,
            min_len: self.min_window,
            max_len: self.max_window,
            num_windows: self.num_windows,
            alpha: RenyiOrder::new(self.alpha)?,
            segment_frames: self.segment_frames,
            segment_overlap_frames: self.segment_overlap.unwrap_or(default_overlap),
            overlap_ratio: self.overlap_ratio,
        };
        config.validate()?;
        Ok(config)
    }
}

fn load(path: &Path) -> Result<Signal> {
    read_wav(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        e => e,
    })
}

fn spectrogram_format(path: &Path) -> SpectrogramFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => SpectrogramFormat::Pgm,
        _ => SpectrogramFormat::Csv,
    }
}

fn write_exports(analysis: &AdaptiveSpectrogram, outputs: &OutputArgs) -> Result<()> {
    if let Some(path) = &outputs.out_spectrogram {
        export_spectrogram(analysis, spectrogram_format(path), path, outputs.db_floor)?;
    }
    if let Some(path) = &outputs.out_selection {
        export_selection(&analysis.selection, path)?;
    }
    Ok(())
}

fn summarize(analysis: &AdaptiveSpectrogram) {
    let track = &analysis.selection;
    let silent = track
        .segments
        .iter()
        .filter(|s| s.entropies.iter().all(Option::is_none))
        .count();
    println!(
        "{} segments ({silent} silent), {} slices, {} frames",
        track.segments.len(),
        analysis.slices.len(),
        analysis.num_frames()
    );
    for (range, choice) in track.runs(analysis.signal_len) {
        println!(
            "  {:.4}-{:.4} s: {} samples",
            range.start as f64 / track.sample_rate,
            range.end as f64 / track.sample_rate,
            track.window_lens[choice]
        );
    }
}

fn analyze(
    signal: &Signal,
    config: &MultiFrameConfig,
    outputs: &OutputArgs,
) -> Result<AdaptiveSpectrogram> {
    let analysis = adapt(signal, config)?;
    write_exports(&analysis, outputs)?;
    summarize(&analysis);
    Ok(analysis)
}

fn run(command: Command) -> std::result::Result<ExitCode, Failure> {
    match command {
        Command::Analyze {
            input,
            analysis,
            outputs,
        } => {
            let config = analysis.config(2)?;
            analyze(&load(&input)?, &config, &outputs)?;
        }
        Command::Resynth {
            input,
            analysis,
            outputs,
        } => {
            let config = analysis.config(2)?;
            let x = load(&input)?;
            let adapted = analyze(&x, &config, &outputs)?;
            let y = reconstruct(&adapted)?;
            if let Some(path) = &outputs.out_wav {
                write_wav(&y, path, outputs.wav_format)?;
            }
            println!(
                "interior relative L2 error: {:e}",
                interior_error(&x, &y, &adapted)
            );
        }
        Command::Demo {
            kind,
            duration,
            sample_rate,
            analysis,
            outputs,
        } => {
            let config = analysis.config(if kind == SignalKind::FmSine { 3 } else { 2 })?;
            if !(duration.is_finite()
                && duration > 0.0
                && sample_rate.is_finite()
                && sample_rate > 0.0)
            {
                return Err(Failure::BadFlags(Error::InvalidArgument(
                    "duration and sample rate must be positive".into(),
                )));
            }
            let x = synth_test_signal(
                kind,
                &kind.default_params(),
                duration,
                sample_rate,
                analysis.seed,
            )?;
            if let Some(path) = &outputs.out_wav {
                write_wav(&x, path, outputs.wav_format)?;
            }
            analyze(&x, &config, &outputs)?;
        }
        Command::Selftest { criterion } => {
            let results = match criterion {
                Some(id) => vec![selftest::run_criterion(id)],
                None => selftest::run_all(),
            };
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::BadFlags(e)) => {
            eprintln!("error: {e}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
