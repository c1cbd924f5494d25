use std::path::PathBuf;
use std::process::ExitCode;

use campvqa::pipeline::{self, Outcome, PipelineConfig};
use campvqa::Error;
use clap::{Parser, Subcommand};

/// No-reference video quality assessment.
///
/// Exit status: 0 on success, 1 when input data is invalid or a video
/// failed, 2 for usage or configuration errors.
#[derive(Parser)]
#[command(name = "campvqa", version)]
struct Cli {
    /// Pipeline configuration (JSON). CAMPVQA_* environment variables
    /// override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-video and per-repeat parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Regressor seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract residual fragments and captioning prompts from videos.
    Fragment {
        /// Y4M files or PNG frame directories (with a frames.json).
        videos: Vec<PathBuf>,
    },
    /// Fuse encoder embeddings into one feature vector per video.
    Fuse,
    /// Train the regressor on all scored videos.
    Train,
    /// Score every fused video.
    Predict {
        /// Parameter file; defaults to params.cvqp in the output directory.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run the repeated random-split evaluation.
    Eval {
        #[arg(long)]
        repeats: Option<usize>,
    },
}

fn report_failures(o: &Outcome) -> ExitCode {
    for f in &o.failures {
        eprintln!("{}: {}", f.video_id, f.error);
    }
    if o.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    match cli.command {
        Command::Fragment { videos } => {
            let o = pipeline::cmd_fragment(&cfg, &videos)?;
            println!("fragmented {} of {} videos", o.done.len(), videos.len());
            Ok(report_failures(&o))
        }
        Command::Fuse => {
            let f = pipeline::cmd_fuse(&cfg)?;
            if let Some((se, tm, sv)) = f.dims {
                println!(
                    "fused {} videos: semantic {se} + temporal {tm} + spatial {sv} = {}",
                    f.outcome.done.len(),
                    se + tm + sv
                );
            }
            Ok(report_failures(&f.outcome))
        }
        Command::Train => {
            let s = pipeline::cmd_train(&cfg)?;
            println!(
                "trained on {} videos ({} inputs, {} epochs), selected {} with validation RMSE {:.6}",
                s.videos, s.d_in, s.epochs_run, s.selection, s.val_rmse
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { params } => {
            let scores = pipeline::cmd_predict(&cfg, params.as_deref())?;
            println!("scored {} videos", scores.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { repeats } => {
            if let Some(r) = repeats {
                cfg.eval.repeats = r;
                cfg.validate()?;
            }
            for r in pipeline::cmd_eval(&cfg)? {
                println!(
                    "{}: median SRCC {:.4} KRCC {:.4} PLCC {:.4} over {} runs",
                    r.dimension.as_deref().unwrap_or(pipeline::OVERALL),
                    r.median.srcc,
                    r.median.krcc,
                    r.median.plcc,
                    r.repeats
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 1 } else { 2 })
        }
    }
}
