//! Price ingestion, repair, returns, and scenario windows.
//!
//! The CSV layout is a header row whose first column is the date (ISO-8601,
//! `YYYY-MM-DD`) followed by one column per ticker. An empty cell marks a
//! missing price.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ticker name used for the appended risk-free asset.
pub const RISK_FREE_TICKER: &str = "RISK_FREE";

/// Describes how a price CSV is laid out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvLayout {
    pub delimiter: u8,
    pub date_column: String,
}

impl Default for CsvLayout {
    fn default() -> Self {
        Self {
            delimiter: b',',
            date_column: "date".to_string(),
        }
    }
}

/// Adjusted close prices, one row per ticker. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub prices: Vec<Vec<Option<f64>>>,
}

impl PriceSeries {
    pub fn new(
        dates: Vec<String>,
        tickers: Vec<String>,
        prices: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        for (i, pair) in dates.windows(2).enumerate() {
            if pair[0] >= pair[1] {
                return Err(Error::Ordering {
                    line: i + 3,
                    prev: pair[0].clone(),
                    next: pair[1].clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("duplicate ticker {t}"),
                });
            }
        }
        if prices.len() != tickers.len() {
            return Err(Error::Dimension(format!(
                "{} price rows for {} tickers",
                prices.len(),
                tickers.len()
            )));
        }
        if let Some(row) = prices.iter().find(|r| r.len() != dates.len()) {
            return Err(Error::Dimension(format!(
                "price row of length {} for {} dates",
                row.len(),
                dates.len()
            )));
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    pub fn missing_count(&self) -> usize {
        self.prices.iter().flatten().filter(|p| p.is_none()).count()
    }

    /// Fills interior gaps by linear interpolation between the bracketing
    /// observations. Tickers missing their first or last observation are
    /// dropped and returned in the second element.
    pub fn interpolate_missing(&self) -> (PriceSeries, Vec<String>) {
        let mut tickers = Vec::new();
        let mut prices = Vec::new();
        let mut dropped = Vec::new();
        for (ticker, row) in self.tickers.iter().zip(&self.prices) {
            match interpolate_row(row) {
                Some(filled) => {
                    tickers.push(ticker.clone());
                    prices.push(filled.into_iter().map(Some).collect());
                }
                None => dropped.push(ticker.clone()),
            }
        }
        let series = PriceSeries {
            dates: self.dates.clone(),
            tickers,
            prices,
        };
        (series, dropped)
    }

    /// Simple per-period returns `(S(t) - S(t-1)) / S(t-1)`.
    pub fn compute_returns(&self) -> Result<ReturnMatrix> {
        if self.dates.len() < 2 {
            return Err(Error::Precondition(
                "at least two dates are needed to compute returns".into(),
            ));
        }
        let mut returns = Vec::with_capacity(self.tickers.len());
        for (ticker, row) in self.tickers.iter().zip(&self.prices) {
            let mut out = Vec::with_capacity(row.len() - 1);
            for t in 1..row.len() {
                let (prev, cur) = match (row[t - 1], row[t]) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::Precondition(format!(
                            "{ticker} has a missing price near {}; repair the series first",
                            self.dates[t]
                        )))
                    }
                };
                if !(prev > 0.0 && prev.is_finite()) || !(cur > 0.0 && cur.is_finite()) {
                    let (bad, date) = if !(prev > 0.0 && prev.is_finite()) {
                        (prev, &self.dates[t - 1])
                    } else {
                        (cur, &self.dates[t])
                    };
                    return Err(Error::Domain(format!(
                        "price of {ticker} on {date} must be positive, got {bad}"
                    )));
                }
                let r = (cur - prev) / prev;
                if r <= -1.0 {
                    return Err(Error::Domain(format!(
                        "return of {ticker} on {} is {r}, must exceed -1",
                        self.dates[t]
                    )));
                }
                out.push(r);
            }
            returns.push(out);
        }
        Ok(ReturnMatrix {
            tickers: self.tickers.clone(),
            dates: self.dates[1..].to_vec(),
            returns,
            risk_free: None,
        })
    }
}

fn interpolate_row(row: &[Option<f64>]) -> Option<Vec<f64>> {
    if row.first()?.is_none() || row.last()?.is_none() {
        return None;
    }
    let mut out: Vec<f64> = Vec::with_capacity(row.len());
    let mut last_obs = 0usize;
    for t in 0..row.len() {
        if let Some(v) = row[t] {
            let prev = row[last_obs].expect("observed");
            let gap = (t - last_obs) as f64;
            for k in last_obs + 1..t {
                let w = (k - last_obs) as f64 / gap;
                out.push(prev + w * (v - prev));
            }
            out.push(v);
            last_obs = t;
        }
    }
    Some(out)
}

/// Reads a price CSV. Missing cells are flagged, not repaired.
pub fn load_prices(path: impl AsRef<Path>, layout: &CsvLayout) -> Result<PriceSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_prices(&text, layout)
}

/// Parses price CSV text; see [`load_prices`].
pub fn parse_prices(text: &str, layout: &CsvLayout) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(layout.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.is_empty() || header.get(0).map(str::trim) != Some(layout.date_column.as_str()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("first column must be named {:?}", layout.date_column),
        });
    }
    let tickers: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if tickers.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "header names no tickers".into(),
        });
    }
    let mut dates: Vec<String> = Vec::new();
    let mut prices = vec![Vec::new(); tickers.len()];
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let date = record[0].trim().to_string();
        if !is_iso_date(&date) {
            return Err(Error::Parse {
                line,
                message: format!("invalid date {date:?}"),
            });
        }
        if let Some(prev) = dates.last() {
            if *prev >= date {
                return Err(Error::Ordering {
                    line,
                    prev: prev.clone(),
                    next: date,
                });
            }
        }
        dates.push(date);
        for (i, cell) in record.iter().skip(1).enumerate() {
            let cell = cell.trim();
            let value = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid price {cell:?} for {}", tickers[i]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite price for {}", tickers[i]),
                    });
                }
                Some(v)
            };
            prices[i].push(value);
        }
    }
    PriceSeries::new(dates, tickers, prices)
}

fn is_iso_date(s: &str) -> bool {
    s.len() == 10 && chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

/// Writes prices in the same CSV layout [`load_prices`] reads.
pub fn write_prices_csv(series: &PriceSeries) -> String {
    let mut out = String::from("date");
    for t in &series.tickers {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (k, d) in series.dates.iter().enumerate() {
        out.push_str(d);
        for row in &series.prices {
            out.push(',');
            if let Some(p) = row[k] {
                out.push_str(&format!("{p}"));
            }
        }
        out.push('\n');
    }
    out
}

/// Per-period simple returns, one row per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub tickers: Vec<String>,
    /// End date of each return period.
    pub dates: Vec<String>,
    pub returns: Vec<Vec<f64>>,
    /// Row index of the risk-free asset, if one was appended.
    pub risk_free: Option<usize>,
}

impl ReturnMatrix {
    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    /// Return vector across assets for period `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.returns.iter().map(|row| row[t]).collect()
    }

    /// Builds a matrix from raw rows, checking every entry exceeds -1.
    pub fn from_rows(tickers: Vec<String>, dates: Vec<String>, returns: Vec<Vec<f64>>) -> Result<Self> {
        if returns.len() != tickers.len() {
            return Err(Error::Dimension(format!(
                "{} return rows for {} tickers",
                returns.len(),
                tickers.len()
            )));
        }
        for (ticker, row) in tickers.iter().zip(&returns) {
            if row.len() != dates.len() {
                return Err(Error::Dimension(format!(
                    "{ticker} has {} returns for {} dates",
                    row.len(),
                    dates.len()
                )));
            }
            if let Some((t, r)) = row.iter().enumerate().find(|(_, r)| !(**r > -1.0 && r.is_finite())) {
                return Err(Error::Domain(format!(
                    "return of {ticker} on {} is {r}, must exceed -1",
                    dates[t]
                )));
            }
        }
        Ok(Self {
            tickers,
            dates,
            returns,
            risk_free: None,
        })
    }

    /// Appends a risk-free asset with per-period return
    /// `(1 + annual_rate)^(1 / periods_per_year) - 1`.
    pub fn append_risk_free(&self, annual_rate: f64, periods_per_year: u32) -> Result<Self> {
        if !(annual_rate > -1.0) || !annual_rate.is_finite() {
            return Err(Error::Domain(format!(
                "annual rate must exceed -1, got {annual_rate}"
            )));
        }
        if periods_per_year == 0 {
            return Err(Error::Domain("periods_per_year must be at least 1".into()));
        }
        let r = per_period_rate(annual_rate, periods_per_year);
        let mut out = self.clone();
        out.tickers.push(RISK_FREE_TICKER.to_string());
        out.returns.push(vec![r; self.n_periods()]);
        out.risk_free = Some(out.tickers.len() - 1);
        Ok(out)
    }

    /// Scenario set from the return columns in `window`, each with weight 1/m.
    pub fn build_scenario_set(&self, window: Range<usize>) -> Result<ScenarioSet> {
        if window.start >= window.end {
            return Err(Error::Precondition("scenario window is empty".into()));
        }
        if window.end > self.n_periods() {
            return Err(Error::Precondition(format!(
                "window {}..{} exceeds {} periods",
                window.start,
                window.end,
                self.n_periods()
            )));
        }
        let scenarios: Vec<Vec<f64>> = window.clone().map(|t| self.column(t)).collect();
        let m = scenarios.len();
        let mut set = ScenarioSet::new(self.tickers.clone(), scenarios, vec![1.0 / m as f64; m])?;
        set.risk_free = self.risk_free;
        Ok(set)
    }
}

/// Geometric conversion of an annual rate to a per-period rate.
pub fn per_period_rate(annual_rate: f64, periods_per_year: u32) -> f64 {
    if periods_per_year == 1 {
        return annual_rate;
    }
    (annual_rate.ln_1p() / periods_per_year as f64).exp_m1()
}

/// `m` return scenarios over `n` assets with their empirical weights and
/// per-asset bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub tickers: Vec<String>,
    /// `scenarios[j][i]` is the return of asset `i` in scenario `j`.
    pub scenarios: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub risk_free: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioSetDoc {
    tickers: Vec<String>,
    scenarios: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    risk_free: Option<usize>,
}

impl ScenarioSet {
    pub fn new(tickers: Vec<String>, scenarios: Vec<Vec<f64>>, probabilities: Vec<f64>) -> Result<Self> {
        let n = tickers.len();
        if n == 0 || scenarios.is_empty() {
            return Err(Error::Precondition("scenario set needs at least one asset and one scenario".into()));
        }
        if probabilities.len() != scenarios.len() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} scenarios",
                probabilities.len(),
                scenarios.len()
            )));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0)) || (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("probabilities must lie on the simplex".into()));
        }
        let mut lower = vec![f64::INFINITY; n];
        let mut upper = vec![f64::NEG_INFINITY; n];
        for (j, x) in scenarios.iter().enumerate() {
            if x.len() != n {
                return Err(Error::Dimension(format!("scenario {j} has {} entries for {n} assets", x.len())));
            }
            for (i, &v) in x.iter().enumerate() {
                if !(v > -1.0 && v.is_finite()) {
                    return Err(Error::Domain(format!("scenario {j} asset {i} return {v} must exceed -1")));
                }
                lower[i] = lower[i].min(v);
                upper[i] = upper[i].max(v);
            }
        }
        Ok(Self {
            tickers,
            scenarios,
            probabilities,
            lower,
            upper,
            risk_free: None,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Largest absolute return over all assets and scenarios.
    pub fn max_abs_return(&self) -> f64 {
        self.scenarios
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioSetDoc {
            tickers: self.tickers.clone(),
            scenarios: self.scenarios.clone(),
            probabilities: self.probabilities.clone(),
            risk_free: self.risk_free,
        })
        .expect("scenario set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScenarioSetDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        let mut set = Self::new(doc.tickers, doc.scenarios, doc.probabilities)?;
        if let Some(i) = doc.risk_free {
            if i >= set.n_assets() {
                return Err(Error::Dimension(format!("risk-free index {i} for {} assets", set.n_assets())));
            }
        }
        set.risk_free = doc.risk_free;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rows: Vec<Vec<Option<f64>>>) -> PriceSeries {
        let t = rows[0].len();
        let dates = (0..t).map(|k| format!("2021-01-{:02}", k + 1)).collect();
        let tickers = (0..rows.len()).map(|i| format!("A{i}")).collect();
        PriceSeries::new(dates, tickers, rows).unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let s = parse_prices("date,AAA\n2021-01-04,100\n2021-01-05,110\n2021-01-06,121\n", &CsvLayout::default()).unwrap();
        assert_eq!(s.n_periods(), 3);
        assert_eq!(s.missing_count(), 0);
        assert_eq!(s.prices[0], vec![Some(100.0), Some(110.0), Some(121.0)]);
    }

    #[test]
    fn empty_cell_is_flagged() {
        let s = parse_prices("date,A,B\n2021-01-04,1,2\n2021-01-05,,3\n2021-01-06,3,4\n", &CsvLayout::default()).unwrap();
        assert_eq!(s.prices[0][1], None);
        assert_eq!(s.missing_count(), 1);
    }

    #[test]
    fn duplicate_dates_are_rejected() {
        let err = parse_prices("date,A\n2021-01-04,1\n2021-01-04,2\n", &CsvLayout::default()).unwrap_err();
        assert!(matches!(err, Error::Ordering { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_prices("date,A\n2021-01-04,1\n2021-01-05,abc\n", &CsvLayout::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_prices("date,A\n2021-01-04,1,7\n", &CsvLayout::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_prices("date,A\n2021-01-04,1\n2021-02-30,2\n", &CsvLayout::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn interpolation_midpoint_and_equal_spacing() {
        let (s, dropped) = series(vec![vec![Some(1.0), None, Some(3.0)]]).interpolate_missing();
        assert!(dropped.is_empty());
        assert_eq!(s.prices[0], vec![Some(1.0), Some(2.0), Some(3.0)]);
        let (s, _) = series(vec![vec![Some(2.0), None, None, Some(5.0)]]).interpolate_missing();
        assert_eq!(s.prices[0], vec![Some(2.0), Some(3.0), Some(4.0), Some(5.0)]);
    }

    #[test]
    fn boundary_gap_drops_ticker() {
        let (s, dropped) = series(vec![
            vec![Some(1.0), Some(2.0), None],
            vec![Some(4.0), None, Some(6.0)],
        ])
        .interpolate_missing();
        assert_eq!(dropped, vec!["A0".to_string()]);
        assert_eq!(s.tickers, vec!["A1".to_string()]);
        assert_eq!(s.prices[0], vec![Some(4.0), Some(5.0), Some(6.0)]);
    }

    #[test]
    fn simple_returns() {
        let r = series(vec![vec![Some(100.0), Some(110.0)], vec![Some(100.0), Some(100.0)]])
            .compute_returns()
            .unwrap();
        assert!((r.returns[0][0] - 0.10).abs() < 1e-15);
        assert_eq!(r.returns[1][0], 0.0);
        assert_eq!(r.n_periods(), 1);
    }

    #[test]
    fn zero_price_is_a_domain_error() {
        let err = series(vec![vec![Some(100.0), Some(0.0)]]).compute_returns().unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn risk_free_compounding() {
        let r = series(vec![vec![Some(1.0), Some(1.0), Some(1.0)]]).compute_returns().unwrap();
        let zero = r.append_risk_free(0.0, 252).unwrap();
        assert!(zero.returns[1].iter().all(|v| *v == 0.0));
        assert_eq!(zero.risk_free, Some(1));

        let daily = r.append_risk_free(0.02, 252).unwrap().returns[1][0];
        assert!(((1.0 + daily).powi(252) - 1.02).abs() < 1e-12);

        let yearly = r.append_risk_free(0.02, 1).unwrap().returns[1][0];
        assert_eq!(yearly, 0.02);
        assert!(r.append_risk_free(-1.0, 12).is_err());
        assert!(r.append_risk_free(0.02, 0).is_err());
    }

    #[test]
    fn scenario_windows() {
        let r = ReturnMatrix::from_rows(
            vec!["A".into(), "B".into()],
            vec!["d1".into(), "d2".into(), "d3".into()],
            vec![vec![0.1, 0.1, -0.2], vec![0.0, 0.0, 0.3]],
        )
        .unwrap();
        let single = r.build_scenario_set(2..3).unwrap();
        assert_eq!(single.probabilities, vec![1.0]);
        let dup = r.build_scenario_set(0..2).unwrap();
        assert_eq!(dup.probabilities, vec![0.5, 0.5]);
        assert_eq!(dup.lower, dup.upper);
        assert!(r.build_scenario_set(1..1).is_err());
        assert!(r.build_scenario_set(2..4).is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = ScenarioSet::new(vec!["A".into()], vec![vec![0.1], vec![-0.05]], vec![0.5, 0.5]).unwrap();
        let text = s.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 3);
        assert_eq!(ScenarioSet::from_json(&text).unwrap(), s);
        let mut awkward = ScenarioSet::new(
            vec!["A".into(), "B".into()],
            vec![vec![0.0099009900990099, 1.0 / 3.0], vec![0.009708737864077669, -0.1]],
            vec![0.5, 0.5],
        )
        .unwrap();
        awkward.risk_free = Some(1);
        assert_eq!(ScenarioSet::from_json(&awkward.to_json()).unwrap(), awkward);
        let bad = awkward.to_json().replace("\"risk_free\": 1", "\"risk_free\": 2");
        assert!(matches!(ScenarioSet::from_json(&bad), Err(Error::Dimension(_))));
    }
}
