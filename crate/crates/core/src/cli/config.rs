//! Run configuration: defaults, TOML files with dotted keys, overrides.
//!
//! Resolution order, lowest precedence first: built-in defaults, the
//! `NSS_OUTPUT_DIR` environment variable (output directory only), the
//! config file, command-line flags. Unknown keys are errors at every level.
//!
//! Schema (every key optional):
//!
//! ```toml
//! seed = 0
//! output_dir = "out"
//!
//! data.path = "train.csv"         # input CSV
//! data.target = "y"
//! data.datetime = "date"          # optional row ordering column
//! data.features = ["a", "b"]      # optional feature subset
//! data.kind = "table"             # or "series" (lagged features)
//! data.split = [0.8, 0.1, 0.1]
//! data.chronological = false      # always true for series
//! data.skip_invalid_rows = false
//!
//! synth.kind = "regression"       # regression | bimodal | uniform | seasonal
//! synth.n = 2000
//! synth.phi = 0.6                 # seasonal only
//! synth.period = 12.0
//! synth.amp = 1.0
//! synth.sigma = 0.5
//!
//! model.plan = "nss-sum"          # preset or mode:kinds[:lambda]
//! model.knots = 32
//! model.lambda = 0.5
//! model.hidden = [64, 64]
//! model.activation = "relu"       # or "tanh"
//! model.span = 4.0
//! model.archive = "out/model.nss" # read by eval, calibrate, quantiles, forecast
//!
//! train.lr = 0.005
//! train.batch = 128
//! train.epochs = 100
//! train.m = 32
//! train.grid = "midpoint"         # midpoint | stratified | inclusive
//! train.patience = 10             # optional early stopping
//!
//! search.candidates = ["nss-sum", "sum:c,p:0.3"]   # default: the standard space
//! search.delta = 0.0
//! search.max_depth = 4
//! search.parallel = true
//!
//! series.lag = 28
//! series.covariates = ["season_sin"]
//! series.rollout = 1
//! series.feedback = "median"      # or { sample = 7 }
//!
//! eval.split = "test"             # train | val | test | all
//! eval.levels = [0.1, 0.5, 0.9]
//! eval.normalized_units = false
//!
//! calibrate.x = [0.5, 1.0, 1.5]   # slices of the synthetic law; empty: use data
//! calibrate.n = 5000
//! calibrate.levels = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
//! calibrate.split = "test"
//!
//! quantiles.feature = 0
//! quantiles.x_min = -2.0
//! quantiles.x_max = 2.0
//! quantiles.points = 200
//! quantiles.levels = 99           # levels i / (levels + 1)
//!
//! forecast.start = 500            # default: first test row
//! forecast.levels = [0.1, 0.5, 0.9]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::composition::{
    CandidateSpace, CompositionPlan, NetworkOptions, SpaceBounds, DEFAULT_KNOTS, DEFAULT_MAX_DEPTH,
};
use crate::data::synth::SYNTH_DEFAULT_N;
use crate::data::SeriesSpec;
use crate::error::{Error, Result};
use crate::evaluation::deciles;
use crate::neural::{Activation, DEFAULT_SPAN};
use crate::training::{GridMode, TrainConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "NSS_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub data: DataSection,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub search: SearchSection,
    pub series: SeriesSpec,
    pub eval: EvalSection,
    pub calibrate: CalibrateSection,
    pub quantiles: BandSection,
    pub forecast: ForecastSection,
    /// Provenance written by a run; ignored when the file is read back.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            data: DataSection::default(),
            synth: SynthSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            search: SearchSection::default(),
            series: SeriesSpec::default(),
            eval: EvalSection::default(),
            calibrate: CalibrateSection::default(),
            quantiles: BandSection::default(),
            forecast: ForecastSection::default(),
            manifest: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    #[default]
    Table,
    Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub target: String,
    pub datetime: Option<String>,
    pub features: Option<Vec<String>>,
    pub kind: DataKind,
    pub split: [f64; 3],
    pub chronological: bool,
    pub skip_invalid_rows: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            target: "y".into(),
            datetime: None,
            features: None,
            kind: DataKind::Table,
            split: [0.8, 0.1, 0.1],
            chronological: false,
            skip_invalid_rows: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    #[default]
    Regression,
    Bimodal,
    Uniform,
    Seasonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub kind: SynthKind,
    pub n: usize,
    pub phi: f64,
    pub period: f64,
    pub amp: f64,
    pub sigma: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            kind: SynthKind::Regression,
            n: SYNTH_DEFAULT_N,
            phi: 0.6,
            period: 12.0,
            amp: 1.0,
            sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub plan: String,
    pub knots: usize,
    pub lambda: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub span: f64,
    pub archive: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let net = NetworkOptions::default();
        Self {
            plan: "nss-sum".into(),
            knots: DEFAULT_KNOTS,
            lambda: 0.5,
            hidden: net.hidden,
            activation: net.activation,
            span: DEFAULT_SPAN,
            archive: None,
        }
    }
}

impl ModelSection {
    pub fn plan(&self) -> Result<CompositionPlan> {
        CompositionPlan::parse(&self.plan, self.knots, self.lambda)
    }

    pub fn network(&self) -> NetworkOptions {
        NetworkOptions {
            hidden: self.hidden.clone(),
            activation: self.activation,
            span: self.span,
        }
    }
}

/// [`TrainConfig`] minus the seed, which comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub m: usize,
    pub grid: GridMode,
    pub patience: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            batch: t.batch,
            epochs: t.epochs,
            m: t.m,
            grid: t.grid,
            patience: t.patience,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch: self.batch,
            epochs: self.epochs,
            m: self.m,
            grid: self.grid,
            seed,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    /// Explicit plans; absent means the standard depth-2 space.
    pub candidates: Option<Vec<String>>,
    pub delta: f64,
    pub max_depth: usize,
    pub parallel: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            candidates: None,
            delta: 0.0,
            max_depth: DEFAULT_MAX_DEPTH,
            parallel: true,
        }
    }
}

impl SearchSection {
    pub fn space(&self, model: &ModelSection) -> Result<CandidateSpace> {
        match &self.candidates {
            None => Ok(CandidateSpace::Generated(SpaceBounds::default_search(model.knots))),
            Some(list) => Ok(CandidateSpace::Explicit(
                list.iter()
                    .map(|p| CompositionPlan::parse(p, model.knots, model.lambda))
                    .collect::<Result<_>>()?,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitChoice {
    Train,
    Val,
    #[default]
    Test,
    All,
}

impl SplitChoice {
    pub fn name(self) -> &'static str {
        match self {
            SplitChoice::Train => "train",
            SplitChoice::Val => "val",
            SplitChoice::Test => "test",
            SplitChoice::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: SplitChoice,
    pub levels: Vec<f64>,
    pub normalized_units: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            split: SplitChoice::Test,
            levels: vec![0.1, 0.5, 0.9],
            normalized_units: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub x: Vec<f64>,
    pub n: usize,
    pub levels: Vec<f64>,
    pub split: SplitChoice,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            x: Vec::new(),
            n: 5000,
            levels: deciles(),
            split: SplitChoice::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandSection {
    /// Feature varied along the grid; the others sit at their training mean.
    pub feature: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub levels: usize,
}

impl Default for BandSection {
    fn default() -> Self {
        Self {
            feature: 0,
            x_min: -2.0,
            x_max: 2.0,
            points: 200,
            levels: 99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub start: Option<usize>,
    pub levels: Vec<f64>,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            start: None,
            levels: vec![0.1, 0.5, 0.9],
        }
    }
}

/// What a run produced, written back into its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInfo {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    /// SHA-256 of each input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each written artifact, keyed by file name.
    pub artifacts: BTreeMap<String, String>,
}

fn config_error(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{what}: {e}"))
}

/// Parses a command-line value as TOML, falling back to a bare string.
pub fn parse_value(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Sets `key` (dotted) in `table`, creating intermediate tables.
fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{key}': '{p}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads a config file (or a manifest written by an earlier run).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_error("invalid config", e))?;
        cfg.manifest = None;
        Ok(cfg)
    }

    /// Layers a file and `key = value` overrides over the defaults.
    pub fn resolve(
        file: Option<&Path>,
        env_output: Option<PathBuf>,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self> {
        let mut base = match file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| config_error(&format!("invalid config file {}", p.display()), e))?
            }
            None => toml::Table::new(),
        };
        base.remove("manifest");
        if !base.contains_key("output_dir") {
            if let Some(dir) = env_output {
                base.insert("output_dir".into(), toml::Value::String(dir.display().to_string()));
            }
        }
        for (k, v) in overrides {
            set_dotted(&mut base, k, v.clone())?;
        }
        base.try_into::<RunConfig>()
            .map_err(|e| config_error("invalid configuration", e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error("cannot serialize configuration", e))
    }

    /// SHA-256 of the resolved configuration without provenance or the
    /// output location.
    pub fn hash(&self) -> Result<String> {
        let bare = RunConfig {
            manifest: None,
            output_dir: None,
            ..self.clone()
        };
        Ok(hex::encode(Sha256::digest(bare.to_toml()?.as_bytes())))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// The model archive read by evaluation commands.
    pub fn archive_path(&self) -> PathBuf {
        self.model
            .archive
            .clone()
            .unwrap_or_else(|| self.output_dir().join(super::MODEL_FILE))
    }

    /// Checks the paths a command reads.
    pub fn require_data(&self) -> Result<&Path> {
        let p = self
            .data
            .path
            .as_deref()
            .ok_or_else(|| Error::Config("no input data (set data.path or pass --data)".into()))?;
        if !p.is_file() {
            return Err(Error::Config(format!("data file {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn require_archive(&self) -> Result<PathBuf> {
        let p = self.archive_path();
        if !p.is_file() {
            return Err(Error::Config(format!("model archive {} does not exist", p.display())));
        }
        Ok(p)
    }
}
