//! One corpus, one config, one seed → every fitted artifact.
//!
//! Features need adjustment-model priors and the adjustment models are fit
//! on feature values, so features are built twice: once with naive priors
//! to produce regression rows, then again with the fitted models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adjustments::{fit_player_adjustment, fit_team_adjustment, AdjustmentModels};
use crate::error::{Error, Result};
use crate::features::{FeatureStore, WindowConfig};
use crate::ingest::{aggregate_corpus, parse_corpus, write_ndjson, CorpusFormat, CorpusLines, MatchRecord};
use crate::metadata::CsvMetadata;
use crate::predictor::{
    build_examples, evaluate, split_indices, EvaluationReport, GroupFitSummary, PredictorConfig, Stores,
    TrainingExample, TransferModel,
};
use crate::ratings::{EloConfig, RatingHistory, Topology};
use crate::recruitment::VerdictThresholds;
use crate::synthworld::{Truth, World};

/// Everything tunable, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub elo: EloConfig,
    pub windows: WindowConfig,
    pub predictor: PredictorConfig,
    pub verdict: VerdictThresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            elo: EloConfig::default(),
            windows: WindowConfig::default(),
            predictor: PredictorConfig::default(),
            verdict: VerdictThresholds::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.elo.validate()?;
        self.windows.validate()?;
        self.predictor.validate()?;
        self.verdict.validate()
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

pub fn rate(records: &[MatchRecord], topology: &Topology, cfg: &PipelineConfig) -> Result<RatingHistory> {
    Ok(RatingHistory::replay(records, topology, &cfg.elo)?.1)
}

/// Fits both prior models on rows from a naive-prior feature pass.
pub fn fit_adjustments(lines: &CorpusLines, ratings: &RatingHistory, cfg: &PipelineConfig) -> Result<AdjustmentModels> {
    let naive = FeatureStore::build(lines, ratings, &AdjustmentModels::default(), &cfg.windows)?;
    Ok(AdjustmentModels {
        team: fit_team_adjustment(&naive.team_rows())?,
        player: fit_player_adjustment(&naive.player_rows(ratings))?,
    })
}

/// Held-out split of the examples, fixed by the config seed.
pub fn split_examples(examples: Vec<TrainingExample>, cfg: &PipelineConfig) -> (Vec<TrainingExample>, Vec<TrainingExample>) {
    let (train_idx, test_idx) = split_indices(examples.len(), cfg.predictor.test_fraction, cfg.seed);
    let mut slots: Vec<Option<TrainingExample>> = examples.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| idx.iter().map(|&i| slots[i].take().expect("disjoint split")).collect::<Vec<_>>();
    let train = take(&train_idx);
    let test = take(&test_idx);
    (train, test)
}

/// Immutable bundle of every fitted artifact, stamped with a version hash.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub config: PipelineConfig,
    pub topology: Topology,
    pub ratings: RatingHistory,
    pub features: FeatureStore,
    pub models: AdjustmentModels,
    pub transfer_model: TransferModel,
    pub metadata: CsvMetadata,
    pub version: String,
}

/// Artifacts and reports of a full build.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub total_examples: usize,
    pub transfer_examples: usize,
    pub train_examples: usize,
    pub test_examples: Vec<TrainingExample>,
    pub groups: Vec<GroupFitSummary>,
    pub evaluation: EvaluationReport,
}

impl PipelineState {
    pub fn stores(&self) -> Stores<'_> {
        Stores { features: &self.features, ratings: &self.ratings, models: &self.models }
    }

    /// Runs every stage: ratings, adjustment fits, features, examples,
    /// training and held-out evaluation.
    pub fn build(
        records: &[MatchRecord],
        topology: Topology,
        metadata: CsvMetadata,
        config: PipelineConfig,
    ) -> Result<(Self, BuildReport)> {
        config.validate()?;
        let ratings = rate(records, &topology, &config)?;
        let lines = aggregate_corpus(records);
        let models = fit_adjustments(&lines, &ratings, &config)?;
        let features = FeatureStore::build(&lines, &ratings, &models, &config.windows)?;
        let stores = Stores { features: &features, ratings: &ratings, models: &models };
        let examples = build_examples(&stores, &config.predictor)?;
        let total_examples = examples.len();
        let transfer_examples = examples.iter().filter(|e| e.is_transfer).count();
        let (train, test) = split_examples(examples, &config);
        let (transfer_model, groups) = TransferModel::fit(&train, &config.predictor, config.seed)?;
        let evaluation = evaluate(&transfer_model, &test)?;
        let state = PipelineState::assemble(config, topology, ratings, features, models, transfer_model, metadata)?;
        Ok((state, BuildReport {
            total_examples,
            transfer_examples,
            train_examples: train.len(),
            test_examples: test,
            groups,
            evaluation,
        }))
    }

    /// Bundles pre-built artifacts and stamps the version.
    pub fn assemble(
        config: PipelineConfig,
        topology: Topology,
        ratings: RatingHistory,
        features: FeatureStore,
        models: AdjustmentModels,
        transfer_model: TransferModel,
        metadata: CsvMetadata,
    ) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(config.to_json());
        h.update(serde_json::to_vec(&topology)?);
        if let Some(s) = ratings.latest() {
            h.update(serde_json::to_vec(s)?);
        }
        let mut buf = Vec::new();
        models.write_json(&mut buf)?;
        transfer_model.write_json(&mut buf)?;
        metadata.write(&mut buf)?;
        h.update(&buf);
        let version = hex::encode(&h.finalize()[..8]);
        Ok(PipelineState { config, topology, ratings, features, models, transfer_model, metadata, version })
    }
}

/// Standard artifact names inside a pipeline directory.
pub mod files {
    pub const CORPUS: &str = "corpus.ndjson";
    pub const LEAGUES: &str = "leagues.json";
    pub const PLAYERS: &str = "players.csv";
    pub const TRUTH: &str = "truth.json";
    pub const RATINGS: &str = "ratings.csv";
    pub const FEATURES: &str = "features.ndjson";
    pub const ADJUSTMENTS: &str = "adjustments.json";
    pub const MODEL: &str = "model.json";
    pub const TRAINING: &str = "training.json";
    pub const EVALUATION: &str = "evaluation.csv";
    pub const ORACLE: &str = "oracle.csv";
}

/// A directory of pipeline artifacts.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Workspace { dir: dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.dir)?;
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    pub fn records(&self) -> Result<Vec<MatchRecord>> {
        parse_corpus(open(&self.path(files::CORPUS))?, CorpusFormat::Ndjson)
    }

    pub fn topology(&self) -> Result<Topology> {
        Ok(serde_json::from_reader(open(&self.path(files::LEAGUES))?)?)
    }

    /// Player metadata, empty when the file is absent.
    pub fn metadata(&self) -> Result<CsvMetadata> {
        if !self.exists(files::PLAYERS) {
            return Ok(CsvMetadata::default());
        }
        CsvMetadata::read(open(&self.path(files::PLAYERS))?)
    }

    pub fn truth(&self) -> Result<Truth> {
        Truth::read_json(open(&self.path(files::TRUTH))?)
    }

    /// Fitted prior models, or the naive pair when none were fitted yet.
    pub fn adjustments(&self) -> Result<AdjustmentModels> {
        if !self.exists(files::ADJUSTMENTS) {
            return Ok(AdjustmentModels::default());
        }
        AdjustmentModels::read_json(open(&self.path(files::ADJUSTMENTS))?)
    }

    pub fn model(&self) -> Result<TransferModel> {
        TransferModel::read_json(open(&self.path(files::MODEL))?)
    }

    pub fn write_world(&self, world: &World) -> Result<()> {
        write_ndjson(&world.records, self.create(files::CORPUS)?)?;
        serde_json::to_writer_pretty(self.create(files::LEAGUES)?, &world.topology)?;
        world.metadata.write(self.create(files::PLAYERS)?)?;
        world.truth.write_json(self.create(files::TRUTH)?)?;
        Ok(())
    }

    /// Rebuilds ratings and features from the corpus and loads the fitted
    /// models: the state the service runs on.
    pub fn load_state(&self, config: PipelineConfig) -> Result<PipelineState> {
        config.validate()?;
        let records = self.records()?;
        let topology = self.topology()?;
        let ratings = rate(&records, &topology, &config)?;
        let models = self.adjustments()?;
        let features = FeatureStore::build(&aggregate_corpus(&records), &ratings, &models, &config.windows)?;
        PipelineState::assemble(config, topology, ratings, features, models, self.model()?, self.metadata()?)
    }
}
