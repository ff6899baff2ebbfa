use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use aquasift::backends::{write_standin_checkpoint, StandinSize};
use aquasift::corpus::{generate_synthetic, ingest, Format, Role};
use aquasift::fusion::{fuse, FusionConfig, PosteriorScores};
use aquasift::runner::{compare, execute, Overrides, RunConfig};
use aquasift::{BackendId, CacheResolver, Cleaner};

#[derive(Parser)]
#[command(name = "aquasift", version, about = "Water-quality relevance classification of social-media posts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a runs-by-metrics table for finished runs.
    Compare {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Write a synthetic labeled corpus as JSONL.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long = "pos-frac")]
        pos_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean the text of a corpus file and write it back as JSONL.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse score CSVs (`post_id,score`) into one.
    Fuse {
        #[arg(long, num_args = 2.., required = true)]
        scores: Vec<PathBuf>,
        /// Comma-separated weights, one per score file; equal when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a small randomly initialized transformer checkpoint whose
    /// vocabulary is fitted on a corpus, for offline use.
    Standin {
        #[arg(long, value_enum)]
        backend: StandinKind,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StandinKind {
    Mono,
    Multi,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed, out } => {
            let overrides = Overrides { seed, out_dir: out };
            let config = RunConfig::load(&config, &overrides).context("config stage failed")?;
            let manifest = execute(&config, &CacheResolver::from_env())?;
            println!(
                "{} finished in {:.1}s: {}",
                manifest.run_id,
                manifest.total_seconds,
                config.out_dir.join(aquasift::runner::MANIFEST_FILE).display()
            );
        }
        Command::Compare { manifests } => print!("{}", compare(&manifests)?),
        Command::Generate {
            n,
            pos_frac,
            seed,
            out,
        } => {
            let synthetic =
                generate_synthetic(n, pos_frac, seed).context("generate stage failed")?;
            synthetic
                .corpus
                .write_jsonl(&out)
                .context("generate stage failed")?;
            println!("wrote {} posts to {}", synthetic.corpus.len(), out.display());
        }
        Command::Clean { input, out } => {
            let corpus = ingest(&input, Format::from_path(&input), Role::Test)
                .context("ingest stage failed")?;
            let cleaned = Cleaner::default().clean_corpus(&corpus);
            cleaned.corpus.write_jsonl(&out).context("clean stage failed")?;
            let r = &cleaned.report;
            println!(
                "removed {} urls, {} handles, {} emojis, {} punctuation runs; {} posts empty",
                r.removed.urls,
                r.removed.handles,
                r.removed.emojis,
                r.removed.punctuation_runs,
                r.empty_post_ids.len()
            );
        }
        Command::Fuse {
            scores,
            weights,
            out,
        } => fuse_files(&scores, weights.as_deref(), &out).context("fuse stage failed")?,
        Command::Standin {
            backend,
            corpus,
            out,
            seed,
        } => {
            let corpus = ingest(&corpus, Format::from_path(&corpus), Role::Test)
                .context("ingest stage failed")?;
            let backend = match backend {
                StandinKind::Mono => BackendId::TransformerMono,
                StandinKind::Multi => BackendId::TransformerMulti,
            };
            write_standin_checkpoint(&out, backend, &corpus.texts(), StandinSize::default(), seed)
                .context("checkpoint stage failed")?;
            println!("wrote {backend} checkpoint to {}", out.display());
        }
    }
    Ok(())
}

fn fuse_files(paths: &[PathBuf], weights: Option<&[f64]>, out: &Path) -> Result<()> {
    let sets = paths
        .iter()
        .enumerate()
        .map(|(i, p)| Ok(PosteriorScores::read_csv(p, format!("m{i}"))?))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = sets.iter().map(|s| s.model_id().to_string()).collect();
    let config = match weights {
        None => FusionConfig::equal(ids),
        Some(w) => {
            if w.len() != ids.len() {
                bail!("{} weights given for {} score files", w.len(), ids.len());
            }
            FusionConfig::weighted(ids.into_iter().zip(w.iter().copied()))
        }
    };
    let fused = fuse(&sets, &config)?;
    fused.write_csv(out)?;
    println!("fused {} posts into {}", fused.len(), out.display());
    Ok(())
}
