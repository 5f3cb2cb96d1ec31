//! Run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::CostModel;
use crate::crosssection::NetworkConfig;
use crate::error::Error;
use crate::exitgrid::{ExitParams, GridSpec, ObjectiveWeights, DEFAULT_SLOT_FRACTION};
use crate::features::FeatureConfig;
use crate::marketdata::{ColumnMapping, GeneratorConfig, Panel, UniverseRules};
use crate::opening::OpeningConfig;
use crate::sizing::{ConstraintSet, LiquidityMode, MAX_PARTICIPATION};
use crate::timing::{BoostConfig, DEFAULT_BETAS};
use crate::volatility::VolConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// CSV panel; the synthetic generator is used when absent.
    pub path: Option<PathBuf>,
    pub columns: ColumnMapping,
    pub generator: GeneratorConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, columns: ColumnMapping::default(), generator: GeneratorConfig::default() }
    }
}

/// Explicit dates win over the fractions, which apply to the calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_end: Option<NaiveDate>,
    pub validation_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_end: None, validation_end: None, test_start: None, test_end: None, train_fraction: 0.6, validation_fraction: 0.15 }
    }
}

/// Day indices of the split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSplit {
    pub train_end: usize,
    pub validation_start: usize,
    pub validation_end: usize,
    pub test_start: usize,
    pub test_end: usize,
}

impl SplitConfig {
    pub fn resolve(&self, panel: &Panel) -> Result<ResolvedSplit, Error> {
        let cal = panel.calendar();
        let n = cal.len();
        if n < 4 {
            return Err(Error::Config(format!("panel has only {n} days")));
        }
        let last_on_or_before = |d: NaiveDate, what: &str| -> Result<usize, Error> {
            let k = cal.partition_point(|c| *c <= d);
            if k == 0 || d > cal[n - 1] {
                return Err(Error::Config(format!("{what} {d} outside panel {}..{}", cal[0], cal[n - 1])));
            }
            Ok(k - 1)
        };
        let first_on_or_after = |d: NaiveDate, what: &str| -> Result<usize, Error> {
            let k = cal.partition_point(|c| *c < d);
            if k >= n || d < cal[0] {
                return Err(Error::Config(format!("{what} {d} outside panel {}..{}", cal[0], cal[n - 1])));
            }
            Ok(k)
        };
        let frac = |f: f64| ((n as f64 * f).floor() as usize).clamp(1, n - 1);
        let train_end = match self.train_end {
            Some(d) => last_on_or_before(d, "train_end")?,
            None => frac(self.train_fraction) - 1,
        };
        let validation_end = match self.validation_end {
            Some(d) => last_on_or_before(d, "validation_end")?,
            None => frac(self.train_fraction + self.validation_fraction) - 1,
        };
        let test_start = match self.test_start {
            Some(d) => first_on_or_after(d, "test_start")?,
            None => validation_end + 1,
        };
        let test_end = match self.test_end {
            Some(d) => last_on_or_before(d, "test_end")?,
            None => n - 1,
        };
        let s = ResolvedSplit { train_end, validation_start: train_end + 1, validation_end, test_start, test_end };
        if !(train_end < validation_end && validation_end < test_start && test_start < test_end) {
            return Err(Error::Config(format!("split days out of order: {s:?}")));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizingConfig {
    pub constraints: ConstraintSet,
    pub lambda: f64,
    pub liquidity_mode: LiquidityMode,
    pub max_participation: f64,
}

impl Default for SizingConfig {
    fn default() -> Self {
        Self { constraints: ConstraintSet::default(), lambda: 1.0, liquidity_mode: LiquidityMode::AsPrinted, max_participation: MAX_PARTICIPATION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitConfig {
    pub grid: GridSpec,
    pub objective: ObjectiveWeights,
    /// Used when grid optimization is off or unavailable.
    pub default_params: ExitParams,
    /// Equity fraction per simulated trade in the grid objective.
    pub slot_fraction: f64,
    /// Top candidates per validation day fed to the grid search.
    pub entries_per_day: usize,
}

impl Default for ExitConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            objective: ObjectiveWeights::default(),
            default_params: ExitParams::default(),
            slot_fraction: DEFAULT_SLOT_FRACTION,
            entries_per_day: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    pub betas: [f64; 3],
    pub boost: BoostConfig,
    /// Label horizon in trading days.
    pub horizon: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self { betas: DEFAULT_BETAS, boost: BoostConfig::default(), horizon: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub initial_equity: f64,
    pub lot_size: f64,
    pub risk_free: f64,
    /// Trading days between model refits.
    pub retrain_every: usize,
    pub min_positions: usize,
    pub max_positions: usize,
    /// Target invested fraction; the rest is a cost buffer.
    pub gross_target: f64,
    pub min_order_notional: f64,
    /// Only candidates ranked within this top fraction of the day's
    /// universe are eligible for entry.
    pub top_fraction: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            initial_equity: 1e7,
            lot_size: 1.0,
            risk_free: 0.02,
            retrain_every: 21,
            min_positions: 50,
            max_positions: 100,
            gross_target: 0.98,
            min_order_notional: 1000.0,
            top_fraction: 0.2,
        }
    }
}

/// Pipeline stages switched on for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleToggles {
    pub cross_sectional: bool,
    pub opening: bool,
    pub sizing: bool,
    pub grid: bool,
    pub timing: bool,
}

impl Default for ModuleToggles {
    fn default() -> Self {
        Self::all()
    }
}

impl ModuleToggles {
    pub fn all() -> Self {
        Self { cross_sectional: true, opening: true, sizing: true, grid: true, timing: true }
    }

    pub fn none() -> Self {
        Self { cross_sectional: false, opening: false, sizing: false, grid: false, timing: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub universe: UniverseRules,
    pub features: FeatureConfig,
    pub network: NetworkConfig,
    pub opening: OpeningConfig,
    pub volatility: VolConfig,
    pub sizing: SizingConfig,
    pub exits: ExitConfig,
    pub timing: TimingConfig,
    pub costs: CostModel,
    pub backtest: BacktestConfig,
    pub modules: ModuleToggles,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            universe: UniverseRules::default(),
            features: FeatureConfig::default(),
            network: NetworkConfig::default(),
            opening: OpeningConfig::default(),
            volatility: VolConfig::default(),
            sizing: SizingConfig::default(),
            exits: ExitConfig::default(),
            timing: TimingConfig::default(),
            costs: CostModel::default(),
            backtest: BacktestConfig::default(),
            modules: ModuleToggles::default(),
        }
    }
}

/// splitmix64 step, used to derive per-module seeds from the global seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const STREAM_GENERATOR: u64 = 0;
pub const STREAM_NETWORK: u64 = 1;
pub const STREAM_OPENING: u64 = 2;
pub const STREAM_VOLATILITY: u64 = 3;
pub const STREAM_HMM: u64 = 4;
pub const STREAM_BASELINE: u64 = 5;

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Runtime(e.to_string()))
    }

    /// Writes the global seed's derived streams into the module seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.network.seed = derive_seed(seed, STREAM_NETWORK);
        self.opening.seed = derive_seed(seed, STREAM_OPENING);
        self.volatility.seed = derive_seed(seed, STREAM_VOLATILITY);
        self
    }

    pub fn generator_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_GENERATOR)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if let Some(p) = &self.data.path {
            if !p.exists() {
                return Err(Error::Config(format!("data path {} does not exist", p.display())));
            }
        } else if self.data.generator.n_instruments == 0 || self.data.generator.n_days == 0 {
            return Err(Error::Config("generator needs at least one instrument and one day".into()));
        }
        let f = &self.split;
        if !(f.train_fraction > 0.0 && f.validation_fraction > 0.0 && f.train_fraction + f.validation_fraction < 1.0) {
            return Err(Error::Config("split fractions must be positive and sum below 1".into()));
        }
        if let (Some(a), Some(b)) = (f.train_end, f.validation_end) {
            if a > b {
                return Err(Error::Config("train_end after validation_end".into()));
            }
        }
        if let (Some(b), Some(c)) = (f.validation_end, f.test_start) {
            if b >= c {
                return Err(Error::Config("test_start must follow validation_end".into()));
            }
        }
        self.network.validate()?;
        self.volatility.validate()?;
        self.sizing.constraints.validate()?;
        self.exits.objective.validate()?;
        self.exits.default_params.validate()?;
        crate::exitgrid::enumerate_grid(&self.exits.grid)?;
        self.timing.boost.validate()?;
        self.costs.validate()?;
        let b = &self.backtest;
        if !(b.initial_equity > 0.0 && b.lot_size > 0.0 && b.retrain_every > 0 && b.max_positions > 0) {
            return Err(Error::Config("backtest settings must be positive".into()));
        }
        if !(b.top_fraction > 0.0 && b.top_fraction <= 1.0) {
            return Err(Error::Config("top_fraction must lie in (0, 1]".into()));
        }
        if b.min_positions > b.max_positions || !(b.gross_target > 0.0 && b.gross_target <= 1.0) {
            return Err(Error::Config("position band or gross target out of range".into()));
        }
        if self.timing.horizon == 0 || self.exits.entries_per_day == 0 || !(self.exits.slot_fraction > 0.0) {
            return Err(Error::Config("timing horizon, entries per day and slot fraction must be positive".into()));
        }
        Ok(())
    }

    /// Loads the CSV panel or generates the synthetic one.
    pub fn load_panel(&self) -> Result<Panel, Error> {
        match &self.data.path {
            Some(p) => Ok(crate::marketdata::load_panel(p, &self.data.columns)?),
            None => Ok(crate::marketdata::generate_synthetic_panel(&self.data.generator, self.generator_seed())?),
        }
    }
}
