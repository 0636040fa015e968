use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use geoqa_core::fixtures;
use geoqa_service::eval::{self, EvalAgent, EvalConfig, Wording};
use geoqa_service::{AppState, Config};

#[derive(Parser)]
#[command(name = "geoqa", version, about = "Natural-language questions over geodata")]
struct Cli {
    /// TOML config file; GEOQA_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run on the bundled fixture city, geocoder and transcripts.
    #[arg(long, global = true)]
    fixtures: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the HTTP API.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Load a GeoJSON FeatureCollection as dataset `name`.
    Ingest {
        name: String,
        file: PathBuf,
        /// Table name; defaults to the dataset name.
        #[arg(long)]
        table: Option<String>,
    },
    /// Answer one prompt and print the response JSON.
    Ask {
        prompt: String,
        #[arg(long, default_value = "cli")]
        session: String,
    },
    /// Run the evaluation harness described by a JSON config.
    Eval {
        #[arg(value_name = "CONFIG")]
        eval_config: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    let engine = |config: &Config| if cli.fixtures { config.build_fixture_engine() } else { config.build_engine() };
    match cli.command {
        Command::Serve { host, port } => {
            if let Some(h) = host {
                config.host = h;
            }
            if let Some(p) = port {
                config.port = p;
            }
            // Built before the runtime: live clients block and must not be
            // created inside it.
            let state = AppState { engine: Arc::new(engine(&config)?), data_dir: config.data_dir.clone() };
            let addr = format!("{}:{}", config.host, config.port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                tracing::info!("listening on {addr}");
                eprintln!("listening on http://{}", listener.local_addr()?);
                geoqa_service::serve(listener, state).await.context("server failed")
            })
        }
        Command::Ingest { name, file, table } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let store = if cli.fixtures { fixtures::city_store() } else { Arc::new(config.open_store()?) };
            let report = store.ingest_geojson_str(&name, table.as_deref(), &text)?;
            if let Some(dir) = &config.data_dir {
                store.save(dir)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Ask { prompt, session } => {
            let resp = engine(&config)?.query(&session, &prompt)?;
            println!("{}", serde_json::to_string_pretty(&resp)?);
            Ok(())
        }
        Command::Eval { eval_config: path } => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let eval_config: EvalConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let needs_engine = eval_config.agent == EvalAgent::Engine || eval_config.paraphrase == Wording::Live;
            let engine = if needs_engine { Some(engine(&config)?) } else { None };
            let store = match &engine {
                Some(e) => e.store().clone(),
                None if cli.fixtures => fixtures::city_store(),
                None => Arc::new(config.open_store()?),
            };
            let geocoder: Box<dyn geoqa_core::region::Geocoder> = Box::new(fixtures::geocoder());
            let out = eval::run(&eval_config, store, geocoder, engine.as_ref())?;
            eprint!("{}", out.tasks);
            if let Some(k) = &out.keyword {
                eprintln!("keyword suite: precision {:.1}%, recall {:.1}%", k.tiers[0].precision * 100.0, k.tiers[0].recall * 100.0);
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}
