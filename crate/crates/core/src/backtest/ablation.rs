//! The six-row component ablation: a seeded random baseline, then each
//! stage switched on cumulatively.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{run_prepared, Prepared};
use super::report::BacktestReport;
use super::BacktestError;
use crate::config::{ModuleToggles, RunConfig};
use crate::error::Error;
use crate::marketdata::Panel;

pub const ABLATION_ROWS: [&str; 6] = [
    "Baseline (Random)",
    "+ Cross-Sectional",
    "+ Opening Signals",
    "+ Position Sizing",
    "+ Grid Optimization",
    "+ Market Timing",
];

fn toggles_for(row: usize) -> ModuleToggles {
    ModuleToggles { cross_sectional: row >= 1, opening: row >= 2, sizing: row >= 3, grid: row >= 4, timing: row >= 5 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub modules: ModuleToggles,
    pub report: BacktestReport,
}

/// Runs every row on one shared set of fitted models.
pub fn run_ablation_prepared(prep: &Prepared<'_>) -> Result<Vec<AblationRow>, Error> {
    (0..ABLATION_ROWS.len())
        .into_par_iter()
        .map(|k| {
            let modules = toggles_for(k);
            let report = run_prepared(prep, modules, ABLATION_ROWS[k])?;
            Ok(AblationRow { configuration: ABLATION_ROWS[k].to_string(), modules, report })
        })
        .collect()
}

pub fn run_ablation(panel: &Panel, cfg: &RunConfig) -> Result<Vec<AblationRow>, Error> {
    let prep = Prepared::build(panel, cfg, ModuleToggles::all())?;
    run_ablation_prepared(&prep)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Columns: configuration, annual_return, sharpe, max_drawdown, win_rate.
pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], writer: W) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["configuration", "annual_return", "sharpe", "max_drawdown", "win_rate"])?;
    for r in rows {
        let m = &r.report.metrics;
        w.write_record([
            r.configuration.clone(),
            m.annual_return.to_string(),
            opt(m.sharpe),
            m.max_drawdown.to_string(),
            opt(m.win_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}
