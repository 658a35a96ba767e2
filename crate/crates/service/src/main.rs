use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mempal_core::engine::Walkthrough;
use mempal_core::eval::{monte_carlo, placements, replay, ErrorProfile, ReplaySettings, Scenario};
use mempal_core::ingest::{batch_by_cadence, read_batch_lines, read_stream_frames};
use mempal_core::providers::ScriptBook;
use mempal_core::MempalConfig;
use mempal_service::{build_live_engine, router, AppState, StubModels};
use tracing::info;
use tracing_subscriber::EnvFilter;

const DEFAULT_DATA_DIR: &str = "mempal-data";

#[derive(Debug, Parser)]
#[command(name = "mempal", version, about = "Activity diary and object finder")]
struct Cli {
    /// Config file (.toml or .json). MEMPAL_* variables override it.
    #[arg(long, global = true, env = "MEMPAL_CONFIG")]
    config: Option<PathBuf>,
    /// Where state is persisted (default ./mempal-data).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the room map from a labeled walkthrough.
    Calibrate { walkthrough: PathBuf },
    /// Rename a calibrated room.
    Rename { old: String, new: String },
    /// Ingest a JSON Lines batch file.
    Ingest { batches: PathBuf },
    /// Cut a JSON Lines frame stream into batches every `cadence_s` seconds
    /// and ingest them.
    IngestStream {
        frames: PathBuf,
        #[arg(long, default_value = "default")]
        session: String,
    },
    /// Ask a question.
    Query {
        transcript: String,
        #[arg(long, default_value = "cli")]
        session: String,
    },
    /// Print the diary as JSON Lines.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load an exported diary into an empty data dir.
    Import { diary: PathBuf },
    /// Replay a scenario against mock providers and print the summary.
    Replay {
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Replay, then compare simulated searchers over many seeds.
    Eval {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Answer profile as percentages: correct,incorrect-location,misidentified,not-detected.
        #[arg(long, value_delimiter = ',')]
        profile: Option<Vec<f64>>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Serve the mock models over HTTP for remote-provider deployments.
    StubModels {
        #[arg(long, default_value = "127.0.0.1:7979")]
        bind: String,
        /// Batch file whose scripted VLM replies to serve.
        #[arg(long)]
        batches: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli, persistent: bool) -> Result<MempalConfig> {
    let mut config = MempalConfig::load(cli.config.as_deref())?;
    if let Some(dir) = &cli.data_dir {
        config.engine.data_dir = Some(dir.clone());
    }
    if persistent && config.engine.data_dir.is_none() {
        config.engine.data_dir = Some(PathBuf::from(DEFAULT_DATA_DIR));
    }
    Ok(config)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn replay_settings(config: &MempalConfig) -> ReplaySettings {
    let defaults = ReplaySettings::default();
    let mut engine = config.engine.clone();
    // the visual condition needs retained images
    if engine.image_retention == 0 {
        engine.image_retention = defaults.engine.image_retention;
    }
    ReplaySettings {
        mock: config.mock.settings(),
        engine,
        ..defaults
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();

    match &cli.command {
        Command::Calibrate { walkthrough } => {
            let (mut engine, _) = build_live_engine(&load_config(&cli, true)?)?;
            let walkthrough: Walkthrough = read_json(walkthrough)?;
            let summary = engine.calibrate(&walkthrough)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Rename { old, new } => {
            let (mut engine, _) = build_live_engine(&load_config(&cli, true)?)?;
            println!("{}", serde_json::to_string_pretty(&engine.rename_room(old, new)?)?);
        }
        Command::Ingest { batches } => {
            let (mut engine, script) = build_live_engine(&load_config(&cli, true)?)?;
            let file = File::open(batches).with_context(|| format!("opening {}", batches.display()))?;
            let lines = read_batch_lines(BufReader::new(file))?;
            let mut created = 0;
            for line in &lines {
                line.register(&script);
                let receipt = engine.ingest(&line.batch())?;
                created += usize::from(receipt.record_created);
                println!("{}", serde_json::to_string(&receipt)?);
            }
            engine.flush_trajectory();
            info!(batches = lines.len(), records = created, "ingest finished");
        }
        Command::IngestStream { frames, session } => {
            let config = load_config(&cli, true)?;
            let (mut engine, script) = build_live_engine(&config)?;
            let file = File::open(frames).with_context(|| format!("opening {}", frames.display()))?;
            let stream = read_stream_frames(BufReader::new(file))?;
            let cadence = chrono::Duration::milliseconds((config.cadence_s * 1000.0).round() as i64);
            let lines = batch_by_cadence(&stream, cadence, session)?;
            for line in &lines {
                line.register(&script);
                println!("{}", serde_json::to_string(&engine.ingest(&line.batch())?)?);
            }
            engine.flush_trajectory();
            info!(frames = stream.len(), batches = lines.len(), "stream ingested");
        }
        Command::Query { transcript, session } => {
            let (mut engine, _) = build_live_engine(&load_config(&cli, true)?)?;
            match engine.query(session, transcript, chrono::Utc::now())? {
                Some(response) => println!("{}", serde_json::to_string_pretty(&response)?),
                None => println!("(ignored: no wakeword)"),
            }
        }
        Command::Export { out } => {
            let (engine, _) = build_live_engine(&load_config(&cli, true)?)?;
            match out {
                Some(path) => std::fs::write(path, engine.export())?,
                None => print!("{}", engine.export()),
            }
        }
        Command::Import { diary } => {
            let (mut engine, _) = build_live_engine(&load_config(&cli, true)?)?;
            let text = std::fs::read_to_string(diary).with_context(|| format!("reading {}", diary.display()))?;
            println!("imported {} records", engine.import(&text)?);
        }
        Command::Replay { scenario, json } => {
            let config = load_config(&cli, false)?;
            let report = replay(&Scenario::load(scenario)?, &replay_settings(&config))?;
            if *json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render());
            }
        }
        Command::Eval {
            scenario,
            runs,
            seed,
            profile,
        } => {
            let config = load_config(&cli, false)?;
            let scenario = Scenario::load(scenario)?;
            let mut settings = replay_settings(&config);
            if let Some(p) = profile {
                if p.len() != 4 {
                    bail!("--profile takes four comma-separated percentages");
                }
                settings.profile = Some(ErrorProfile::from_percentages(p[0], p[1], p[2], p[3]));
            }
            let report = replay(&scenario, &settings)?;
            print!("{}", report.render());
            let Some(profile) = report.search_profile else {
                bail!("scenario has no assistant trials; pass --profile");
            };
            let comparisons = monte_carlo(
                &scenario.room_labels(),
                &placements(&scenario),
                &profile,
                &settings.search,
                *seed,
                *runs,
            )?;
            let shorter = comparisons.iter().filter(|c| c.assistant_shortens_paths()).count();
            let mean = |f: fn(&mempal_core::eval::SearchComparison) -> f64| {
                comparisons.iter().map(f).sum::<f64>() / comparisons.len().max(1) as f64
            };
            println!(
                "\n{shorter}/{runs} experiments: assisted search shorter (mean path {:.3} vs {:.3})",
                mean(|c| c.audio_assisted.mean_path_length),
                mean(|c| c.baseline.mean_path_length),
            );
        }
        Command::Serve { bind } => {
            let config = load_config(&cli, true)?;
            let bind = bind.clone().unwrap_or_else(|| config.server.bind.clone());
            let (engine, script) = build_live_engine(&config)?;
            let engine = Arc::new(Mutex::new(engine));
            let app = router(AppState::shared(engine.clone(), script, config.server.token.clone()));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                info!(addr = %listener.local_addr()?, "serving");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
            drop(runtime);
            // the engine flushes its trajectory on drop, outside the runtime
            drop(engine);
        }
        Command::StubModels { bind, batches } => {
            let config = load_config(&cli, false)?;
            let script = ScriptBook::new();
            if let Some(path) = batches {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                for line in read_batch_lines(BufReader::new(file))? {
                    line.register(&script);
                }
            }
            let app = StubModels::new(config.mock.settings(), script).router();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(bind).await?;
                info!(addr = %listener.local_addr()?, "stub models serving");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
