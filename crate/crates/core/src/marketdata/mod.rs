//! Market-data model: daily bars, panels, CSV ingestion, the synthetic
//! generator and universe filtering.

mod csvio;
mod panel;
mod synthetic;
mod universe;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use csvio::{load_panel, read_panel, write_panel, ColumnMapping};
pub use panel::Panel;
pub use synthetic::{generate_synthetic_panel, GeneratorConfig};
pub use universe::{build_universe, build_universe_at, UniverseRules, UniverseSnapshot};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("schema error: missing column `{0}`")]
    Schema(String),
    #[error("data error at line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("data error: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("date {0} is not in the panel calendar")]
    Lookup(NaiveDate),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Opaque instrument identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstrumentId(pub String);

impl InstrumentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fixed eight-sector taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sector {
    Technology,
    Healthcare,
    ConsumerDiscretionary,
    Industrials,
    Materials,
    ConsumerStaples,
    Financials,
    Energy,
}

impl Sector {
    pub const ALL: [Sector; 8] = [
        Sector::Technology,
        Sector::Healthcare,
        Sector::ConsumerDiscretionary,
        Sector::Industrials,
        Sector::Materials,
        Sector::ConsumerStaples,
        Sector::Financials,
        Sector::Energy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Sector::Technology => "Technology",
            Sector::Healthcare => "Healthcare",
            Sector::ConsumerDiscretionary => "ConsumerDiscretionary",
            Sector::Industrials => "Industrials",
            Sector::Materials => "Materials",
            Sector::ConsumerStaples => "ConsumerStaples",
            Sector::Financials => "Financials",
            Sector::Energy => "Energy",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Sector::ALL
            .iter()
            .copied()
            .find(|x| x.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown sector `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Normal,
    Suspended,
    SpecialTreatment,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Normal => "Normal",
            Status::Suspended => "Suspended",
            Status::SpecialTreatment => "SpecialTreatment",
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Normal" | "normal" => Ok(Status::Normal),
            "Suspended" | "suspended" => Ok(Status::Suspended),
            "SpecialTreatment" | "ST" | "special_treatment" => Ok(Status::SpecialTreatment),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// One instrument-day of market data.
///
/// Suspended days keep a bar with zero volume whose prices all equal the last
/// traded close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub instrument_id: InstrumentId,
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub turnover: f64,
    pub market_cap: f64,
    pub sector: Sector,
    pub status: Status,
}

impl DailyBar {
    /// Checks the per-bar invariants, returning a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and positive".into());
        }
        let lo_oc = self.open.min(self.close);
        let hi_oc = self.open.max(self.close);
        if !(self.low <= lo_oc && hi_oc <= self.high) {
            return Err(format!(
                "price ordering violated: low {} open {} close {} high {}",
                self.low, self.open, self.close, self.high
            ));
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err("volume must be non-negative".into());
        }
        if !(self.turnover.is_finite() && self.turnover >= 0.0) {
            return Err("turnover must be non-negative".into());
        }
        if !(self.market_cap.is_finite() && self.market_cap > 0.0) {
            return Err("market_cap must be positive".into());
        }
        let suspended = self.status == Status::Suspended;
        if (self.volume == 0.0) != suspended {
            return Err("volume must be zero exactly when suspended".into());
        }
        Ok(())
    }

    pub fn is_tradable(&self) -> bool {
        self.status != Status::Suspended
    }
}
