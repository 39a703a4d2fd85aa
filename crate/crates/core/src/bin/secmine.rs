use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use secmine::bot::{diff_indicators, exit_policy, render_findings, ExitPolicy, OutputFormat};
use secmine::comments::ExtensionMap;
use secmine::lexicon::{load_lexicon, Lexicon};
use secmine::repo::RepoMiner;
use secmine::report::config::Config;
use secmine::report::pipeline::{self, Stage};
use secmine::sampler::SampleSpec;
use secmine::triage::{self, ServeOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "secmine", version, about = "Mine security-indicator comments, commits and issues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mining pipeline described by a config file.
    Mine {
        config: PathBuf,
        /// Write artifacts here instead of the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Redraw the sample of a finished run.
    Sample {
        run_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        confidence: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Print the summary of a finished run.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Report indicator comments introduced or removed between two revisions.
    Bot {
        #[arg(long, default_value = ".")]
        repo: PathBuf,
        #[arg(long)]
        base: String,
        #[arg(long)]
        head: String,
        /// Lexicon file; the bundled lexicon otherwise.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        #[arg(long, value_enum, default_value = "warn-only")]
        policy: ExitPolicy,
    },
    /// Serve a sample for labeling over HTTP.
    Serve {
        /// `sample_tasks.jsonl` of a run.
        #[arg(long)]
        sample: PathBuf,
        /// Label log, created when missing.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// File with one externally identified relevant phrase per line.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Environment variable holding the shared API token.
        #[arg(long)]
        token_env: Option<String>,
        /// Directory of static files served outside `/api`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Check a lexicon file and print its relevance summary.
    Lexicon { path: Option<PathBuf> },
    /// Create a self-contained demo project (repository, replay files, config).
    Demo { dir: PathBuf },
}

fn lexicon_or_default(path: Option<&PathBuf>) -> anyhow::Result<Lexicon> {
    Ok(match path {
        Some(p) => load_lexicon(p).with_context(|| format!("loading lexicon {}", p.display()))?,
        None => Lexicon::default_lexicon(),
    })
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Mine { config, out } => {
            let config = match Config::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            match pipeline::run_with_config(&config, out.as_deref()) {
                Ok(dir) => {
                    if let Ok(doc) = pipeline::load_summary(&dir) {
                        print!("{}", doc.summary.render_text());
                    }
                    println!("\nartifacts written to {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) if e.stage == Stage::Config => fail(EXIT_CONFIG, e),
                Err(e) => fail(EXIT_STAGE, e),
            }
        }
        Command::Sample {
            run_dir,
            seed,
            confidence,
            margin,
        } => {
            let base = match pipeline::load_summary(&run_dir) {
                Ok(doc) => doc.sampling,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let spec = SampleSpec {
                seed: seed.unwrap_or(base.seed),
                confidence: confidence.unwrap_or(base.confidence),
                margin: margin.unwrap_or(base.margin),
                ..base
            };
            if let Err(e) = spec.validate() {
                return fail(EXIT_CONFIG, e);
            }
            match pipeline::resample(&run_dir, Some(spec)) {
                Ok(sample) => {
                    let mut per: std::collections::BTreeMap<&str, usize> = Default::default();
                    for t in &sample {
                        *per.entry(t.stratum.as_str()).or_default() += 1;
                    }
                    for (stratum, n) in per {
                        println!("{stratum}\t{n}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_STAGE, e),
            }
        }
        Command::Report { run_dir, format } => match pipeline::load_summary(&run_dir) {
            Ok(doc) => {
                match format {
                    OutputFormat::Text => print!("{}", doc.summary.render_text()),
                    OutputFormat::Structured => {
                        println!("{}", serde_json::to_string_pretty(&doc.summary).expect("summary serializes"))
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_CONFIG, e),
        },
        Command::Bot {
            repo,
            base,
            head,
            lexicon,
            format,
            policy,
        } => {
            let result = (|| -> anyhow::Result<i32> {
                let lexicon = lexicon_or_default(lexicon.as_ref())?;
                let miner = RepoMiner::open(&repo)?;
                let findings = diff_indicators(&miner, &base, &head, &lexicon, &ExtensionMap::default())?;
                print!("{}", render_findings(&findings, format));
                Ok(exit_policy(&findings, policy))
            })();
            match result {
                Ok(code) => ExitCode::from(code as u8),
                Err(e) => fail(EXIT_CONFIG, format!("{e:#}")),
            }
        }
        Command::Serve {
            sample,
            store,
            bind,
            lexicon,
            compare,
            token_env,
            static_dir,
        } => {
            let options = (|| -> anyhow::Result<ServeOptions> {
                let other_relevant = match &compare {
                    Some(p) => Some(
                        std::fs::read_to_string(p)
                            .with_context(|| format!("reading {}", p.display()))?
                            .lines()
                            .map(str::trim)
                            .filter(|l| !l.is_empty() && !l.starts_with('#'))
                            .map(str::to_string)
                            .collect(),
                    ),
                    None => None,
                };
                let token = match &token_env {
                    Some(var) => Some(std::env::var(var).with_context(|| format!("environment variable {var}"))?),
                    None => None,
                };
                Ok(ServeOptions {
                    sample,
                    store,
                    bind,
                    lexicon: lexicon_or_default(lexicon.as_ref())?,
                    other_relevant,
                    token,
                    static_dir,
                })
            })();
            let options = match options {
                Ok(o) => o,
                Err(e) => return fail(EXIT_CONFIG, format!("{e:#}")),
            };
            match triage::serve(options) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e @ (triage::TriageError::Sample { .. } | triage::TriageError::Store(_))) => fail(EXIT_CONFIG, e),
                Err(e) => fail(EXIT_STAGE, e),
            }
        }
        Command::Lexicon { path } => match lexicon_or_default(path.as_ref()) {
            Ok(lex) => {
                let summary = lex.relevance_summary(None).expect("no judgments");
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_CONFIG, format!("{e:#}")),
        },
        Command::Demo { dir } => match secmine::fixture::write_demo_project(&dir) {
            Ok(config) => {
                println!("demo project written; run: secmine mine {}", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_STAGE, e),
        },
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    run(cli)
}
