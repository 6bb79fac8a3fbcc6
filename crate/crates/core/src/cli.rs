//! The `portal` command line: one subcommand per pipeline stage, each
//! reading and writing standard files in `--dir`.
//!
//! Ratings and features are cheap and deterministic, so later stages
//! rebuild them from the corpus instead of parsing them back.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::ingest::{aggregate_corpus, parse_corpus, write_ndjson, CorpusFormat};
use crate::metrics::{Metric, Position};
use crate::pipeline::{files, fit_adjustments, rate, split_examples, PipelineConfig, PipelineState, Workspace};
use crate::predictor::{build_examples, evaluate, Predictor, Stores, TransferModel};
use crate::ratings::Topology;
use crate::recruitment::{build_shortlist, swarm, write_shortlist_csv, FilterSet, ShortlistRequest, WeightProfile};
use crate::server::{serve, StateHandle};
use crate::synthworld::{generate, oracle_report, WorldConfig};

#[derive(Debug, Parser)]
#[command(name = "portal", version, about = "Forecast per-90 player performance for hypothetical transfers")]
pub struct Cli {
    /// Artifact directory.
    #[arg(long, global = true, default_value = "portal-data")]
    pub dir: PathBuf,
    /// Pipeline config file (TOML, or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a match file and store it as the corpus.
    Ingest {
        input: PathBuf,
        #[arg(long, default_value = "ndjson")]
        format: String,
        /// League → country → continent map (JSON).
        #[arg(long)]
        leagues: PathBuf,
        /// Player metadata CSV.
        #[arg(long)]
        players: Option<PathBuf>,
        /// Also write per-level game lines as CSV.
        #[arg(long)]
        lines: bool,
    },
    /// Generate a synthetic world with its truth file.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        /// World config file (TOML, or JSON).
        #[arg(long)]
        world: Option<PathBuf>,
        /// Use the small preset.
        #[arg(long)]
        small: bool,
    },
    /// Replay the Elo hierarchy and write daily Power Rankings.
    Rate,
    /// Build feature timelines (with fitted priors when available).
    Features {
        /// Export every sample instead of each epoch's last.
        #[arg(long)]
        all_samples: bool,
    },
    /// Fit the team and player prior models.
    FitAdjust,
    /// Train the four group networks.
    Train {
        #[arg(long)]
        seed: Option<u64>,
        /// Hyperparameter trials per group (0 trains the configured values).
        #[arg(long)]
        search_budget: Option<usize>,
    },
    /// Score the held-out split against the persistence baseline.
    Evaluate,
    /// Forecast one player at a destination (or staying put).
    Predict {
        #[arg(long)]
        player: String,
        #[arg(long)]
        position: Position,
        #[arg(long)]
        team: Option<String>,
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Rank filtered candidates for a destination.
    Shortlist {
        #[arg(long)]
        team: String,
        #[arg(long)]
        position: Position,
        /// Weight file (TOML `[weights]` table); defaults to the winger profile.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        max_age: Option<u32>,
        #[arg(long)]
        max_value: Option<f64>,
        #[arg(long)]
        min_minutes: Option<f64>,
        #[arg(long = "league")]
        leagues: Vec<String>,
        #[arg(long)]
        max_team_rating: Option<f64>,
        #[arg(long)]
        date: Option<NaiveDate>,
        /// Emit JSON entries instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Place a subject among a league's players for one metric.
    Swarm {
        #[arg(long)]
        league: String,
        #[arg(long)]
        position: Position,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        player: String,
        /// Destination of the subject; omitted means staying put.
        #[arg(long)]
        team: Option<String>,
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Serialize)]
struct Wrote<'a> {
    command: &'a str,
    wrote: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<serde_json::Value>,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn wrote(command: &str, names: &[&str], detail: Option<serde_json::Value>) -> Result<()> {
    print_json(&Wrote { command, wrote: names.iter().map(|s| s.to_string()).collect(), detail })
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    match &cli.config {
        Some(p) => PipelineConfig::read(std::fs::File::open(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn read_text(path: &PathBuf) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn load_world_config(path: &PathBuf) -> Result<WorldConfig> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Runs one parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let ws = Workspace::new(&cli.dir);
    match cli.command {
        Command::Ingest { input, format, leagues, players, lines } => {
            let format: CorpusFormat = format.parse()?;
            let records = parse_corpus(std::fs::File::open(&input)?, format)?;
            let topology = Topology::from_json(&std::fs::read(&leagues)?)?;
            for r in &records {
                for league in [r.home_league(), r.away_league()] {
                    topology.league(league).ok_or_else(|| Error::UnknownLeague(league.to_string()))?;
                }
            }
            write_ndjson(&records, ws.create(files::CORPUS)?)?;
            serde_json::to_writer_pretty(ws.create(files::LEAGUES)?, &topology)?;
            let mut names = vec![files::CORPUS, files::LEAGUES];
            if let Some(p) = players {
                crate::metadata::CsvMetadata::read(std::fs::File::open(p)?)?.write(ws.create(files::PLAYERS)?)?;
                names.push(files::PLAYERS);
            }
            if lines {
                let l = aggregate_corpus(&records);
                crate::ingest::write_lines_csv(&l.player_position, ws.create("lines_player_position.csv")?)?;
                crate::ingest::write_lines_csv(&l.team_position, ws.create("lines_team_position.csv")?)?;
                crate::ingest::write_lines_csv(&l.team, ws.create("lines_team.csv")?)?;
                names.extend(["lines_player_position.csv", "lines_team_position.csv", "lines_team.csv"]);
            }
            wrote("ingest", &names, Some(serde_json::json!({ "matches": records.len() })))
        }
        Command::Synth { seed, world, small } => {
            let mut wc = match (&world, small) {
                (Some(p), _) => load_world_config(p)?,
                (None, true) => WorldConfig::small(cfg.seed),
                (None, false) => WorldConfig { seed: cfg.seed, ..WorldConfig::default() },
            };
            if let Some(s) = seed {
                wc.seed = s;
            }
            let w = generate(&wc)?;
            ws.write_world(&w)?;
            let detail = serde_json::json!({ "matches": w.records.len(), "transfers": w.truth.transfers.len() });
            wrote("synth", &[files::CORPUS, files::LEAGUES, files::PLAYERS, files::TRUTH], Some(detail))
        }
        Command::Rate => {
            let ratings = rate(&ws.records()?, &ws.topology()?, &cfg)?;
            ratings.write_csv(ws.create(files::RATINGS)?)?;
            wrote("rate", &[files::RATINGS], None)
        }
        Command::Features { all_samples } => {
            let records = ws.records()?;
            let ratings = rate(&records, &ws.topology()?, &cfg)?;
            let store = FeatureStore::build(&aggregate_corpus(&records), &ratings, &ws.adjustments()?, &cfg.windows)?;
            store.write_snapshot(ws.create(files::FEATURES)?, all_samples)?;
            wrote("features", &[files::FEATURES], None)
        }
        Command::FitAdjust => {
            let records = ws.records()?;
            let ratings = rate(&records, &ws.topology()?, &cfg)?;
            let models = fit_adjustments(&aggregate_corpus(&records), &ratings, &cfg)?;
            models.write_json(ws.create(files::ADJUSTMENTS)?)?;
            wrote("fit-adjust", &[files::ADJUSTMENTS], None)
        }
        Command::Train { seed, search_budget } => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(b) = search_budget {
                cfg.predictor.search_budget = b;
            }
            let (features, ratings, models) = rebuild(&ws, &cfg)?;
            let stores = Stores { features: &features, ratings: &ratings, models: &models };
            let (train, _) = split_examples(build_examples(&stores, &cfg.predictor)?, &cfg);
            let (model, summaries) = TransferModel::fit(&train, &cfg.predictor, cfg.seed)?;
            model.write_json(ws.create(files::MODEL)?)?;
            let detail = serde_json::json!({ "seed": cfg.seed, "train_examples": train.len(), "groups": summaries });
            serde_json::to_writer_pretty(ws.create(files::TRAINING)?, &detail)?;
            wrote("train", &[files::MODEL, files::TRAINING], Some(detail))
        }
        Command::Evaluate => {
            let model = ws.model()?;
            // The split must match the one the model was trained on.
            cfg.seed = model.seed;
            let (features, ratings, models) = rebuild(&ws, &cfg)?;
            let stores = Stores { features: &features, ratings: &ratings, models: &models };
            let (_, test) = split_examples(build_examples(&stores, &cfg.predictor)?, &cfg);
            let report = evaluate(&model, &test)?;
            report.write_csv(ws.create(files::EVALUATION)?)?;
            let mut names = vec![files::EVALUATION];
            if ws.exists(files::TRUTH) {
                let forecasts = test.iter().map(|e| model.predict_values(&e.input)).collect::<Result<Vec<_>>>()?;
                oracle_report(&ws.truth()?, &test, &forecasts)?.write_csv(ws.create(files::ORACLE)?)?;
                names.push(files::ORACLE);
            }
            let detail = serde_json::json!({
                "test_examples": test.len(),
                "transfer_mean_improvement": report.mean_improvement(crate::predictor::Split::Transfer),
                "non_transfer_mean_improvement": report.mean_improvement(crate::predictor::Split::NonTransfer),
            });
            wrote("evaluate", &names, Some(detail))
        }
        Command::Predict { player, position, team, date } => {
            let state = ws.load_state(cfg)?;
            let request = crate::server::PredictRequest { player, position, destination_team: team, date };
            print_json(&crate::server::predict(&state, &request)?)
        }
        Command::Shortlist {
            team,
            position,
            weights,
            k,
            max_age,
            max_value,
            min_minutes,
            leagues,
            max_team_rating,
            date,
            json,
        } => {
            let state = ws.load_state(cfg)?;
            let profile = match weights {
                Some(p) => WeightProfile::from_toml(&read_text(&p)?)?,
                None => WeightProfile::winger(),
            };
            let request = ShortlistRequest {
                destination_team: team,
                position,
                weights: profile.into(),
                filters: FilterSet {
                    max_age,
                    max_value,
                    min_position_minutes: min_minutes,
                    allowed_leagues: (!leagues.is_empty()).then_some(leagues),
                    max_team_rating,
                    ..FilterSet::default()
                },
                k,
                date,
            };
            let predictor = Predictor::new(state.stores(), &state.transfer_model);
            let entries = build_shortlist(&predictor, &state.metadata, &request)?;
            if json {
                print_json(&entries)
            } else {
                write_shortlist_csv(&entries, std::io::stdout().lock())
            }
        }
        Command::Swarm { league, position, metric, player, team, date } => {
            let state = ws.load_state(cfg)?;
            let predictor = Predictor::new(state.stores(), &state.transfer_model);
            let date = date.or_else(|| state.stores().next_date()).ok_or(Error::NoData)?;
            let scenario = match team {
                Some(t) => predictor.move_scenario(&player, position, &t, date)?,
                None => predictor.stay_scenario(&player, position, date)?,
            };
            print_json(&swarm(&predictor, &league, position, metric, &scenario)?)
        }
        Command::Serve { bind } => {
            let state = ws.load_state(cfg.clone())?;
            eprintln!("serving version {} on {bind}", state.version);
            let handle = Arc::new(StateHandle::with_source(state, ws, cfg));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(handle, bind))
        }
    }
}

fn rebuild(ws: &Workspace, cfg: &PipelineConfig) -> Result<(FeatureStore, crate::ratings::RatingHistory, crate::adjustments::AdjustmentModels)> {
    let records = ws.records()?;
    let ratings = rate(&records, &ws.topology()?, cfg)?;
    let models = ws.adjustments()?;
    let features = FeatureStore::build(&aggregate_corpus(&records), &ratings, &models, &cfg.windows)?;
    Ok((features, ratings, models))
}

/// Builds the whole state in memory from a directory holding a corpus.
pub fn build_state(ws: &Workspace, cfg: PipelineConfig) -> Result<PipelineState> {
    Ok(PipelineState::build(&ws.records()?, ws.topology()?, ws.metadata()?, cfg)?.0)
}

#[derive(Serialize)]
struct ErrorLine {
    error: &'static str,
    message: String,
}

/// Parses `std::env::args`, runs, and reports failures as one JSON line on
/// stderr with exit status 1. Usage errors exit with status 2.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = ErrorLine { error: e.kind(), message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&line).expect("error serializes"));
            ExitCode::FAILURE
        }
    }
}
