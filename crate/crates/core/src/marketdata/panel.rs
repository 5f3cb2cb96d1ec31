use std::collections::HashMap;

use chrono::NaiveDate;

use super::{DailyBar, DataError, InstrumentId, Sector};

/// Immutable date × instrument grid of daily bars.
///
/// Bars are stored sorted by `(date, instrument)`; a dense index maps each
/// `(day, instrument)` cell to its bar when present.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    calendar: Vec<NaiveDate>,
    instruments: Vec<InstrumentId>,
    bars: Vec<DailyBar>,
    cells: Vec<Option<u32>>,
    inst_days: Vec<Vec<u32>>,
    sectors: Vec<Sector>,
}

impl Panel {
    /// Builds a panel whose calendar is the set of dates present in `bars`.
    pub fn from_bars(bars: Vec<DailyBar>) -> Result<Self, DataError> {
        let mut calendar: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
        calendar.sort_unstable();
        calendar.dedup();
        Self::with_calendar(calendar, bars)
    }

    /// Builds a panel over an explicit calendar of trading days.
    pub fn with_calendar(calendar: Vec<NaiveDate>, mut bars: Vec<DailyBar>) -> Result<Self, DataError> {
        if calendar.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Invalid("calendar dates must be strictly increasing".into()));
        }
        for b in &bars {
            b.validate()
                .map_err(|m| DataError::Invalid(format!("{} on {}: {m}", b.instrument_id, b.date)))?;
        }
        bars.sort_by(|a, b| (a.date, &a.instrument_id).cmp(&(b.date, &b.instrument_id)));
        if let Some(w) = bars
            .windows(2)
            .find(|w| w[0].date == w[1].date && w[0].instrument_id == w[1].instrument_id)
        {
            return Err(DataError::Invalid(format!(
                "duplicate bar for {} on {}",
                w[0].instrument_id, w[0].date
            )));
        }

        let mut instruments: Vec<InstrumentId> = bars.iter().map(|b| b.instrument_id.clone()).collect();
        instruments.sort();
        instruments.dedup();
        let inst_pos: HashMap<&InstrumentId, usize> =
            instruments.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let day_pos: HashMap<NaiveDate, usize> = calendar.iter().enumerate().map(|(i, d)| (*d, i)).collect();

        let n = instruments.len();
        let mut cells = vec![None; calendar.len() * n];
        let mut inst_days = vec![Vec::new(); n];
        let mut sectors = vec![Sector::Technology; n];
        let mut seen_sector = vec![false; n];
        for (k, b) in bars.iter().enumerate() {
            let day = *day_pos.get(&b.date).ok_or_else(|| {
                DataError::Invalid(format!("bar for {} dated {} is outside the calendar", b.instrument_id, b.date))
            })?;
            let inst = inst_pos[&b.instrument_id];
            cells[day * n + inst] = Some(k as u32);
            inst_days[inst].push(day as u32);
            if !seen_sector[inst] {
                sectors[inst] = b.sector;
                seen_sector[inst] = true;
            }
        }
        Ok(Self { calendar, instruments, bars, cells, inst_days, sectors })
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn instruments(&self) -> &[InstrumentId] {
        &self.instruments
    }

    pub fn bars(&self) -> &[DailyBar] {
        &self.bars
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    pub fn instrument_index(&self, id: &InstrumentId) -> Option<usize> {
        self.instruments.binary_search(id).ok()
    }

    #[inline]
    pub fn bar(&self, day: usize, inst: usize) -> Option<&DailyBar> {
        let n = self.instruments.len();
        self.cells.get(day * n + inst).copied().flatten().map(|k| &self.bars[k as usize])
    }

    /// Sector as of the instrument's first bar.
    pub fn sector(&self, inst: usize) -> Sector {
        self.sectors[inst]
    }

    #[inline]
    pub fn close(&self, day: usize, inst: usize) -> Option<f64> {
        self.bar(day, inst).map(|b| b.close)
    }

    /// Close-to-close simple return from `day - 1` to `day`.
    pub fn return_at(&self, day: usize, inst: usize) -> Option<f64> {
        if day == 0 {
            return None;
        }
        let c1 = self.close(day, inst)?;
        let c0 = self.close(day - 1, inst)?;
        Some(c1 / c0 - 1.0)
    }

    /// Number of bars of `inst` dated strictly before `day`.
    pub fn history_before(&self, inst: usize, day: usize) -> usize {
        self.inst_days[inst].partition_point(|&d| (d as usize) < day)
    }

    /// Day indices on which `inst` has a bar.
    pub fn instrument_days(&self, inst: usize) -> &[u32] {
        &self.inst_days[inst]
    }

    /// Bars dated on calendar day `day`, in instrument order.
    pub fn bars_on(&self, day: usize) -> impl Iterator<Item = (usize, &DailyBar)> + '_ {
        (0..self.instruments.len()).filter_map(move |i| self.bar(day, i).map(|b| (i, b)))
    }

    /// Copy of the panel keeping only days `0..=last_day`.
    pub fn truncate_after(&self, last_day: usize) -> Panel {
        let cutoff = self.calendar[last_day.min(self.calendar.len() - 1)];
        let calendar: Vec<NaiveDate> = self.calendar.iter().copied().filter(|d| *d <= cutoff).collect();
        let bars: Vec<DailyBar> = self.bars.iter().filter(|b| b.date <= cutoff).cloned().collect();
        Panel::with_calendar(calendar, bars).expect("subset of a valid panel is valid")
    }
}
