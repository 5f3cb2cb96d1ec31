use crate::marketdata::Sector;
use crate::stats;

use super::FeaturePanel;

/// Clamps each column to its cross-sectional `[lower, upper]` empirical
/// quantiles, taken as the nearest order statistics so that winsorizing twice
/// changes nothing. Missing entries are untouched.
pub fn winsorize(features: &FeaturePanel, lower: f64, upper: f64) -> FeaturePanel {
    assert!((0.0..=1.0).contains(&lower) && lower < upper && upper <= 1.0, "invalid quantile bounds");
    let mut out = features.clone();
    for k in 0..features.n_features() {
        let mut col: Vec<f64> = (0..features.n_rows()).filter_map(|i| features.get(i, k)).collect();
        if col.is_empty() {
            continue;
        }
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let lo = stats::quantile_nearest_sorted(&col, lower).expect("non-empty");
        let hi = stats::quantile_nearest_sorted(&col, upper).expect("non-empty");
        for i in 0..features.n_rows() {
            if let Some(v) = features.get(i, k) {
                out.set(i, k, v.clamp(lo, hi));
            }
        }
    }
    out
}

/// Sector-neutral z-score: `(x - mean_sector) / (std_sector + epsilon)` with the
/// population standard deviation over the sector's non-missing members.
///
/// `sectors` is aligned with the panel rows.
pub fn sector_standardize(features: &FeaturePanel, sectors: &[Sector], epsilon: f64) -> FeaturePanel {
    assert_eq!(sectors.len(), features.n_rows(), "one sector per row");
    let mut out = features.clone();
    for k in 0..features.n_features() {
        for sector in Sector::ALL {
            let rows: Vec<usize> = (0..features.n_rows())
                .filter(|&i| sectors[i] == sector && features.get(i, k).is_some())
                .collect();
            if rows.is_empty() {
                continue;
            }
            let vals: Vec<f64> = rows.iter().map(|&i| features.get(i, k).expect("filtered")).collect();
            let mu = stats::mean(&vals).expect("non-empty");
            let sd = stats::std_pop(&vals).expect("non-empty");
            for (&i, &v) in rows.iter().zip(&vals) {
                let denom = sd + epsilon;
                let z = if denom > 0.0 { (v - mu) / denom } else { 0.0 };
                out.set(i, k, z);
            }
        }
    }
    out
}

/// Fills missing entries of the last panel in `history` from earlier panels.
///
/// `history` is ordered oldest first, one panel per trading day. A value last
/// seen `gap` days ago is filled as `value * 0.5^(gap / halflife)`; values older
/// than `5 * halflife` days stay missing.
pub fn forward_fill_decay(history: &[FeaturePanel], halflife: f64) -> FeaturePanel {
    assert!(halflife > 0.0, "halflife must be positive");
    let current = history.last().expect("history must contain the current panel");
    let mut out = current.clone();
    let max_gap = 5.0 * halflife;
    for i in 0..current.n_rows() {
        let id = &current.instruments[i];
        for k in 0..current.n_features() {
            if current.get(i, k).is_some() {
                continue;
            }
            for (gap, past) in history.iter().rev().enumerate().skip(1) {
                if gap as f64 > max_gap {
                    break;
                }
                let Some(row) = past.row_of(id) else { continue };
                if let Some(v) = past.get(row, k) {
                    out.set(i, k, v * 0.5f64.powf(gap as f64 / halflife));
                    break;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::InstrumentId;
    use chrono::NaiveDate;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()
    }

    fn column_panel(vals: &[Option<f64>]) -> FeaturePanel {
        let ids = (0..vals.len()).map(|i| InstrumentId::new(format!("I{i:03}"))).collect();
        let rows: Vec<Vec<Option<f64>>> = vals.iter().map(|v| vec![*v]).collect();
        FeaturePanel::from_rows(date(), ids, vec!["f".into()], &rows)
    }

    #[test]
    fn winsorize_constant_column_unchanged() {
        let fp = column_panel(&[Some(3.0); 10]);
        assert_eq!(winsorize(&fp, 0.01, 0.99), fp);
    }

    #[test]
    fn winsorize_matches_sort_oracle() {
        let vals: Vec<Option<f64>> = (1..=100).rev().map(|x| Some(x as f64)).collect();
        let fp = column_panel(&vals);
        let w = winsorize(&fp, 0.01, 0.99);
        // oracle: sort, then take the order statistic nearest to rank q (n - 1)
        let mut sorted: Vec<f64> = vals.iter().map(|v| v.unwrap()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| sorted[(p * 99.0).round() as usize];
        assert_eq!(q(0.01), 2.0);
        assert_eq!(q(0.99), 99.0);
        let col: Vec<f64> = w.column(0).into_iter().map(Option::unwrap).collect();
        let min = col.iter().copied().fold(f64::MAX, f64::min);
        let max = col.iter().copied().fold(f64::MIN, f64::max);
        assert!((min - q(0.01)).abs() < 1e-12);
        assert!((max - q(0.99)).abs() < 1e-12);
        assert_eq!(winsorize(&w, 0.01, 0.99), w);
    }

    #[test]
    fn standardize_two_member_sector() {
        let fp = column_panel(&[Some(1.0), Some(3.0), Some(7.0)]);
        let sectors = [Sector::Energy, Sector::Energy, Sector::Financials];
        let z = sector_standardize(&fp, &sectors, 0.0);
        assert_eq!(z.get(0, 0), Some(-1.0));
        assert_eq!(z.get(1, 0), Some(1.0));
        assert_eq!(z.get(2, 0), Some(0.0));
    }

    #[test]
    fn standardize_all_missing() {
        let fp = column_panel(&[None, None]);
        let z = sector_standardize(&fp, &[Sector::Energy; 2], 1e-8);
        assert_eq!(z.column(0), vec![None, None]);
    }

    #[test]
    fn standardize_shift_invariance() {
        let vals = [0.3, -1.2, 4.4, 2.0, 0.1, 9.0];
        let sectors = [Sector::Energy, Sector::Energy, Sector::Energy, Sector::Materials, Sector::Materials, Sector::Materials];
        let a = column_panel(&vals.map(Some));
        let shifted: Vec<Option<f64>> =
            vals.iter().zip(&sectors).map(|(v, s)| Some(v + if *s == Sector::Energy { 5.0 } else { -2.5 })).collect();
        let za = sector_standardize(&a, &sectors, 1e-8);
        let zb = sector_standardize(&column_panel(&shifted), &sectors, 1e-8);
        for i in 0..vals.len() {
            assert!((za.get(i, 0).unwrap() - zb.get(i, 0).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn decay_fill() {
        let yesterday = column_panel(&[Some(2.0), None]);
        let today = column_panel(&[None, None]);
        let out = forward_fill_decay(&[yesterday, today], 5.0);
        assert!((out.get(0, 0).unwrap() - 2.0 * 0.5f64.powf(1.0 / 5.0)).abs() < 1e-15);
        assert_eq!(out.get(1, 0), None);

        let present = column_panel(&[Some(1.5), None]);
        let out = forward_fill_decay(&[column_panel(&[Some(9.0), None]), present.clone()], 5.0);
        assert_eq!(out.get(0, 0), Some(1.5));
    }

    #[test]
    fn decay_fill_expires() {
        let mut hist = vec![column_panel(&[Some(1.0)])];
        for _ in 0..26 {
            hist.push(column_panel(&[None]));
        }
        assert_eq!(forward_fill_decay(&hist, 5.0).get(0, 0), None);
    }
}
