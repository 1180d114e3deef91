use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zsvc_core::data::{IngestOptions, RunConfig};
use zsvc_core::eval::PipelineStage;
use zsvc_core::pipeline::{self, ConvertRequest, EmbeddingSource, EvaluateRequest, ModelId, Setting};
use zsvc_core::{Error, Result};

/// Zero-shot voice conversion: preprocessing, training, conversion and evaluation.
#[derive(Parser)]
#[command(name = "zsvc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset root holding one directory of WAV files per speaker.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// Working directory for mels, embeddings, checkpoints and reports.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the dataset, write the manifest and compute log-Mel spectrograms.
    Preprocess {
        /// Speakers held out of training, comma separated.
        #[arg(long, value_delimiter = ',')]
        unseen: Vec<String>,
        /// Baseline speaker pair as SOURCE:TARGET.
        #[arg(long)]
        parallel: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
    },
    /// Train the speaker encoder.
    TrainEncoder,
    /// Train the conversion GAN (resumes from the last checkpoint).
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the linear one-to-one baseline on parallel pairs.
    TrainBaseline,
    /// Convert one utterance.
    Convert {
        /// Source WAV file.
        #[arg(long)]
        input: PathBuf,
        /// Utterances of the source speaker, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "source_vector")]
        source_utts: Vec<PathBuf>,
        /// JSON file with a raw 256-d unit vector for the source speaker.
        #[arg(long)]
        source_vector: Option<PathBuf>,
        /// Utterances of the target speaker, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "target_vector")]
        target_utts: Vec<PathBuf>,
        /// JSON file with a raw 256-d unit vector for the target speaker.
        #[arg(long)]
        target_vector: Option<PathBuf>,
        /// Output stem; .wav, .zmel and .json are written next to it.
        #[arg(long)]
        output: PathBuf,
        /// Skip waveform reconstruction.
        #[arg(long)]
        no_vocoder: bool,
    },
    /// Evaluate on the test split and write reports.
    Evaluate {
        #[arg(long, default_value = "stargan")]
        model: String,
        /// Settings to run, comma separated (default: all four).
        #[arg(long, value_delimiter = ',')]
        settings: Vec<String>,
        #[arg(long)]
        no_reconstruction: bool,
        /// Also time the generator.
        #[arg(long)]
        speed: bool,
    },
    /// Measure milliseconds per second of audio for pipeline stages.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "generator,encoder,frontend,full")]
        stages: Vec<String>,
        #[arg(long)]
        seconds: Option<f64>,
        /// Include the fallback vocoder in the full stage.
        #[arg(long)]
        vocoder: bool,
    },
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(p) = &g.data_root {
        cfg.paths.data_root = p.clone();
    }
    if let Some(p) = &g.work_dir {
        cfg.paths.work_dir = p.clone();
    }
    Ok(cfg)
}

fn embedding_source(utts: Vec<PathBuf>, vector: Option<PathBuf>, who: &str) -> Result<EmbeddingSource> {
    match (utts.is_empty(), vector) {
        (_, Some(v)) => Ok(EmbeddingSource::Vector(v)),
        (false, None) => Ok(EmbeddingSource::Utterances(utts)),
        (true, None) => Err(Error::Config(format!(
            "give --{who}-utts or --{who}-vector"
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    if let Command::Train { epochs: Some(e) } = &cli.command {
        cfg.training.epochs = *e;
    }
    let cfg = cfg.resolved()?;
    match cli.command {
        Command::Preprocess {
            unseen,
            parallel,
            test_fraction,
        } => {
            let parallel = match parallel {
                None => None,
                Some(p) => match p.split_once(':') {
                    Some((a, b)) => Some((a.to_string(), b.to_string())),
                    None => return Err(Error::Config(format!("--parallel expects SOURCE:TARGET, got {p}"))),
                },
            };
            let opts = IngestOptions {
                seed: cfg.seed,
                test_fraction,
                unseen,
                parallel,
            };
            let m = pipeline::preprocess(&cfg, &opts)?;
            for s in &m.speakers {
                println!(
                    "{}\t{}\ttrain {}\ttest {}",
                    s.speaker_id,
                    if s.seen { "seen" } else { "unseen" },
                    s.train.len(),
                    s.test.len()
                );
            }
            if !m.parallel_pairs.is_empty() {
                println!("parallel pairs\t{}", m.parallel_pairs.len());
            }
        }
        Command::TrainEncoder => {
            let log = pipeline::train_encoder_command(&cfg)?;
            if let (Some(a), Some(b)) = (log.first(), log.last()) {
                println!("encoder: {} steps, GE2E loss {:.4} -> {:.4}", log.len(), a.loss, b.loss);
            }
        }
        Command::Train { .. } => {
            let log = pipeline::train_command(&cfg)?;
            if let Some(r) = log.last() {
                println!(
                    "step {}: id {:.4} cyc {:.4} g_adv {:.4} d_adv {:.4}",
                    r.step, r.l_id, r.l_cyc, r.l_g_adv, r.l_d_adv
                );
            }
        }
        Command::TrainBaseline => {
            let log = pipeline::train_baseline_command(&cfg)?;
            if let Some(r) = log.last() {
                println!("baseline: {} steps, final L1 {:.4}", log.len(), r.loss);
            }
        }
        Command::Convert {
            input,
            source_utts,
            source_vector,
            target_utts,
            target_vector,
            output,
            no_vocoder,
        } => {
            let req = ConvertRequest {
                source_wav: input,
                source: embedding_source(source_utts, source_vector, "source")?,
                target: embedding_source(target_utts, target_vector, "target")?,
                output,
                vocode: !no_vocoder,
            };
            let out = pipeline::convert_command(&cfg, &req)?;
            println!("{}", out.mel_path.display());
            if let Some(w) = out.wav_path {
                println!("{}", w.display());
            }
            println!("{}", out.provenance_path.display());
        }
        Command::Evaluate {
            model,
            settings,
            no_reconstruction,
            speed,
        } => {
            let settings = if settings.is_empty() {
                Setting::ALL.to_vec()
            } else {
                settings.iter().map(|s| s.parse()).collect::<Result<_>>()?
            };
            let req = EvaluateRequest {
                model: model.parse::<ModelId>()?,
                settings,
                reconstruction: !no_reconstruction,
                speed,
            };
            let reports = pipeline::evaluate_command(&cfg, &req)?;
            print!("{}", zsvc_core::eval::MetricsReport::csv_header());
            for r in &reports {
                print!("{}", r.csv_rows());
            }
        }
        Command::Bench {
            stages,
            seconds,
            vocoder,
        } => {
            let stages = stages.iter().map(|s| s.parse()).collect::<Result<Vec<PipelineStage>>>()?;
            let seconds = seconds.unwrap_or(cfg.evaluation.speed_seconds);
            for r in pipeline::bench_command(&cfg, &stages, seconds, vocoder)? {
                println!("{}\t{:.3} ms/s", r.stage, r.ms_per_second);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
