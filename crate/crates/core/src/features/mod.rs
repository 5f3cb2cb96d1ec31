//! Feature construction and cross-sectional preprocessing.
//!
//! Pipeline order is fixed: raw features, winsorization, sector-neutral
//! standardization, then decayed forward fill.

mod preprocess;
mod raw;
mod store;

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::marketdata::{DataError, InstrumentId};

pub use preprocess::{forward_fill_decay, sector_standardize, winsorize};
pub use raw::{compute_raw_features, compute_raw_features_at, FEATURE_NAMES};
pub use store::{DayFeatures, FeatureStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub winsor_lower: f64,
    pub winsor_upper: f64,
    pub epsilon: f64,
    pub fill_halflife: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { winsor_lower: 0.01, winsor_upper: 0.99, epsilon: 1e-8, fill_halflife: 5.0 }
    }
}

/// Instrument × feature matrix for one date with a missing-value mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    pub date: NaiveDate,
    pub instruments: Vec<InstrumentId>,
    pub feature_names: Vec<String>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl FeaturePanel {
    /// All-missing panel of the given shape.
    pub fn empty(date: NaiveDate, instruments: Vec<InstrumentId>, feature_names: Vec<String>) -> Self {
        let n = instruments.len() * feature_names.len();
        Self { date, instruments, feature_names, values: vec![0.0; n], missing: vec![true; n] }
    }

    /// Builds a panel from row-major values; non-finite entries become missing.
    pub fn from_rows(
        date: NaiveDate,
        instruments: Vec<InstrumentId>,
        feature_names: Vec<String>,
        rows: &[Vec<Option<f64>>],
    ) -> Self {
        let mut fp = Self::empty(date, instruments, feature_names);
        for (i, row) in rows.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    fp.set(i, k, *v);
                }
            }
        }
        fp
    }

    pub fn n_rows(&self) -> usize {
        self.instruments.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    #[inline]
    pub fn get(&self, row: usize, feature: usize) -> Option<f64> {
        let k = row * self.feature_names.len() + feature;
        if self.missing[k] {
            None
        } else {
            Some(self.values[k])
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, feature: usize, value: f64) {
        let k = row * self.feature_names.len() + feature;
        if value.is_finite() {
            self.values[k] = value;
            self.missing[k] = false;
        } else {
            self.missing[k] = true;
        }
    }

    pub fn set_missing(&mut self, row: usize, feature: usize) {
        let k = row * self.feature_names.len() + feature;
        self.missing[k] = true;
    }

    pub fn row_of(&self, id: &InstrumentId) -> Option<usize> {
        self.instruments.binary_search(id).ok()
    }

    /// Row-major dense matrix with missing entries replaced by `fill`.
    pub fn dense(&self, fill: f64) -> Vec<f64> {
        self.values.iter().zip(&self.missing).map(|(&v, &m)| if m { fill } else { v }).collect()
    }

    pub fn column(&self, feature: usize) -> Vec<Option<f64>> {
        (0..self.n_rows()).map(|i| self.get(i, feature)).collect()
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeaturePanel {
        let mut out = FeaturePanel::empty(
            self.date,
            rows.iter().map(|&r| self.instruments[r].clone()).collect(),
            self.feature_names.clone(),
        );
        for (new, &old) in rows.iter().enumerate() {
            for k in 0..self.n_features() {
                if let Some(v) = self.get(old, k) {
                    out.set(new, k, v);
                }
            }
        }
        out
    }

    /// Writes `instrument_id,<features...>` rows; missing values are empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["instrument_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.instruments[i].to_string()];
            rec.extend((0..self.n_features()).map(|k| self.get(i, k).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
