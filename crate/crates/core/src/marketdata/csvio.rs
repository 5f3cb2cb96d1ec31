use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DailyBar, DataError, InstrumentId, Panel};

/// Maps each logical bar field onto a CSV header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub instrument_id: String,
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
    pub turnover: String,
    pub market_cap: String,
    pub sector: String,
    pub status: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            instrument_id: "instrument_id".into(),
            date: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
            turnover: "turnover".into(),
            market_cap: "market_cap".into(),
            sector: "sector".into(),
            status: "status".into(),
        }
    }
}

impl ColumnMapping {
    fn names(&self) -> [&str; 11] {
        [
            &self.instrument_id,
            &self.date,
            &self.open,
            &self.high,
            &self.low,
            &self.close,
            &self.volume,
            &self.turnover,
            &self.market_cap,
            &self.sector,
            &self.status,
        ]
    }
}

pub const HEADER: [&str; 11] = [
    "instrument_id",
    "date",
    "open",
    "high",
    "low",
    "close",
    "volume",
    "turnover",
    "market_cap",
    "sector",
    "status",
];

pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Panel, DataError> {
    let file = File::open(path)?;
    read_panel(file, schema)
}

/// Parses a panel from CSV. Rows are validated individually and reported with
/// their 1-based line number; dates must increase strictly per instrument in
/// file order.
pub fn read_panel<R: Read>(reader: R, schema: &ColumnMapping) -> Result<Panel, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut idx = [0usize; 11];
    for (slot, name) in idx.iter_mut().zip(schema.names()) {
        *slot = *pos.get(name).ok_or_else(|| DataError::Schema(name.to_string()))?;
    }

    let mut bars = Vec::new();
    let mut last_date: HashMap<InstrumentId, NaiveDate> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| DataError::Row { line, message };
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64, DataError> {
            field(k)
                .parse::<f64>()
                .map_err(|_| err(format!("column `{}`: `{}` is not a number", HEADER[k], field(k))))
        };
        let date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
            .map_err(|_| err(format!("bad date `{}`", field(1))))?;
        let bar = DailyBar {
            instrument_id: InstrumentId::new(field(0)),
            date,
            open: num(2)?,
            high: num(3)?,
            low: num(4)?,
            close: num(5)?,
            volume: num(6)?,
            turnover: num(7)?,
            market_cap: num(8)?,
            sector: field(9).parse().map_err(err)?,
            status: field(10).parse().map_err(err)?,
        };
        bar.validate().map_err(err)?;
        if let Some(prev) = last_date.get(&bar.instrument_id) {
            if *prev == bar.date {
                return Err(err(format!("duplicate row for {} on {}", bar.instrument_id, bar.date)));
            }
            if *prev > bar.date {
                return Err(err(format!(
                    "non-monotone dates for {}: {} follows {}",
                    bar.instrument_id, bar.date, prev
                )));
            }
        }
        last_date.insert(bar.instrument_id.clone(), bar.date);
        bars.push(bar);
    }
    Panel::from_bars(bars)
}

/// Writes the panel with the canonical header, sorted by `(date, instrument)`.
pub fn write_panel<W: Write>(panel: &Panel, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for b in panel.bars() {
        w.write_record([
            b.instrument_id.as_str(),
            &b.date.format("%Y-%m-%d").to_string(),
            &b.open.to_string(),
            &b.high.to_string(),
            &b.low.to_string(),
            &b.close.to_string(),
            &b.volume.to_string(),
            &b.turnover.to_string(),
            &b.market_cap.to_string(),
            b.sector.name(),
            b.status.name(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
