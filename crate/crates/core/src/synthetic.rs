//! Seeded synthetic markets for tests, examples and the bundled fixture.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{PriceSeries, ScenarioSet};
use crate::error::{Error, Result};

/// Parameters of a market that switches between a calm and a stressed regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoRegimeMarket {
    pub n_assets: usize,
    pub n_periods: usize,
    pub seed: u64,
    /// Daily drift and volatility of the common factor in each regime.
    pub calm_drift: f64,
    pub calm_vol: f64,
    pub stress_drift: f64,
    pub stress_vol: f64,
    /// Per-period probability of moving from the calm to the stressed regime.
    pub enter_stress: f64,
    /// Per-period probability of moving back to the calm regime.
    pub exit_stress: f64,
    pub idiosyncratic_vol: f64,
    /// Persistent per-asset drift, spread evenly over
    /// `[-alpha_spread / 2, alpha_spread / 2]` from the first asset to the last.
    pub alpha_spread: f64,
    pub start_date: String,
}

impl Default for TwoRegimeMarket {
    fn default() -> Self {
        Self {
            n_assets: 6,
            n_periods: 1000,
            seed: 7,
            calm_drift: 0.0008,
            calm_vol: 0.008,
            stress_drift: -0.001,
            stress_vol: 0.022,
            enter_stress: 0.005,
            exit_stress: 0.05,
            idiosyncratic_vol: 0.006,
            alpha_spread: 0.001,
            start_date: "2018-01-02".into(),
        }
    }
}

impl TwoRegimeMarket {
    /// Simulated closing prices starting at 100 on consecutive business days.
    pub fn generate(&self) -> Result<PriceSeries> {
        if self.n_assets == 0 || self.n_periods < 2 {
            return Err(Error::Config("synthetic market needs assets and at least two periods".into()));
        }
        let vols = [self.calm_vol, self.stress_vol, self.idiosyncratic_vol];
        let probs = [self.enter_stress, self.exit_stress];
        if vols.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("volatilities must be non-negative and switch probabilities in [0, 1]".into()));
        }
        let dates = business_days(&self.start_date, self.n_periods)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let std = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;
        // Asset loadings on the common factor spread over [0.6, 1.4].
        let betas: Vec<f64> = (0..self.n_assets)
            .map(|i| {
                if self.n_assets == 1 {
                    1.0
                } else {
                    0.6 + 0.8 * i as f64 / (self.n_assets - 1) as f64
                }
            })
            .collect();
        let alphas: Vec<f64> = (0..self.n_assets)
            .map(|i| {
                if self.n_assets == 1 {
                    0.0
                } else {
                    self.alpha_spread * (i as f64 / (self.n_assets - 1) as f64 - 0.5)
                }
            })
            .collect();
        let mut prices = vec![Vec::with_capacity(self.n_periods); self.n_assets];
        let mut level = vec![100.0; self.n_assets];
        let mut stressed = false;
        for t in 0..self.n_periods {
            if t > 0 {
                let switch = if stressed { self.exit_stress } else { self.enter_stress };
                if rng.random_range(0.0..1.0) < switch {
                    stressed = !stressed;
                }
                let (mu, sigma) = if stressed {
                    (self.stress_drift, self.stress_vol)
                } else {
                    (self.calm_drift, self.calm_vol)
                };
                let factor = mu + sigma * std.sample(&mut rng);
                for i in 0..self.n_assets {
                    let r = alphas[i] + betas[i] * factor + self.idiosyncratic_vol * std.sample(&mut rng);
                    level[i] *= 1.0 + r.max(-0.5);
                }
            }
            for i in 0..self.n_assets {
                prices[i].push(Some(level[i]));
            }
        }
        let tickers = (0..self.n_assets).map(|i| format!("S{:02}", i + 1)).collect();
        PriceSeries::new(dates, tickers, prices)
    }
}

/// `count` consecutive weekdays starting at `start` (inclusive if a weekday).
pub fn business_days(start: &str, count: usize) -> Result<Vec<String>> {
    let mut day = NaiveDate::parse_from_str(start, "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("invalid start date {start:?}: {e}")))?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day.format("%Y-%m-%d").to_string());
        }
        day = day
            .checked_add_days(Days::new(1))
            .ok_or_else(|| Error::Config("date range overflow".into()))?;
    }
    Ok(out)
}

/// `m` equally likely scenarios over `n` assets with returns uniform in `[lo, hi)`.
pub fn random_scenarios(rng: &mut ChaCha8Rng, n: usize, m: usize, lo: f64, hi: f64) -> ScenarioSet {
    let scenarios = (0..m).map(|_| (0..n).map(|_| rng.random_range(lo..hi)).collect()).collect();
    let tickers = (0..n).map(|i| format!("A{i}")).collect();
    ScenarioSet::new(tickers, scenarios, vec![1.0 / m as f64; m]).expect("returns above -1 on the simplex")
}
