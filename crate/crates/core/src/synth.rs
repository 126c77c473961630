//! Synthetic books for tests, benchmarks and demos.
//!
//! [`flat_day`] builds a static ladder repeated every second. [`MarketModel`]
//! generates days whose mid follows a discretised Ornstein-Uhlenbeck process
//! and whose bid depth swells when the price sits below its mean.

use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::store::{save_day, BookLevel, DayBook, FileFormat, Ladder, Snapshot};
use crate::DEPTH;

const NS_PER_S: u64 = 1_000_000_000;

pub fn default_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 2, 3).unwrap()
}

/// Midnight UTC of `date` in nanoseconds.
pub fn day_start_ns(date: NaiveDate) -> u64 {
    let secs = date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
    u64::try_from(secs).expect("dates before 1970 are not supported") * NS_PER_S
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatBook {
    pub mid: f64,
    pub half_spread: f64,
    /// Price gap between consecutive levels.
    pub tick: f64,
    pub level_size: f64,
}

impl FlatBook {
    pub fn snapshot(&self, timestamp_ns: u64) -> Snapshot {
        let mut bids = [BookLevel::default(); DEPTH];
        let mut asks = [BookLevel::default(); DEPTH];
        for i in 0..DEPTH {
            let offset = self.half_spread + i as f64 * self.tick;
            bids[i] = BookLevel::new(self.mid - offset, self.level_size);
            asks[i] = BookLevel::new(self.mid + offset, self.level_size);
        }
        Snapshot {
            timestamp_ns,
            bids,
            asks,
        }
    }
}

/// `n` identical snapshots one second apart on [`default_date`].
pub fn flat_day(book: &FlatBook, n: usize) -> DayBook {
    flat_day_on(default_date(), book, n)
}

pub fn flat_day_on(date: NaiveDate, book: &FlatBook, n: usize) -> DayBook {
    let t0 = day_start_ns(date);
    let snaps = (0..n as u64).map(|i| book.snapshot(t0 + i * NS_PER_S)).collect();
    DayBook::new(date, snaps).expect("flat book is valid")
}

/// Parameters of the synthetic market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketModel {
    pub snapshots_per_day: usize,
    /// Long-run mean of the first day's mid.
    pub base_mid: f64,
    /// Relative day-to-day drift of the mean, standard deviation.
    pub daily_drift: f64,
    /// Per-second mean-reversion rate of the mid.
    pub reversion: f64,
    /// Per-second mid volatility as a fraction of the mean.
    pub volatility: f64,
    pub half_spread: f64,
    pub tick: f64,
    /// Mean size per level, base units.
    pub level_size: f64,
    /// Log-depth response to the standardised mid deviation; positive values
    /// thicken bids when the price dips below its mean.
    pub depth_dip_coupling: f64,
    /// Standard deviation of the AR(1) log-depth noise.
    pub depth_noise: f64,
}

impl Default for MarketModel {
    fn default() -> Self {
        Self {
            snapshots_per_day: 7_200,
            base_mid: 9_500.0,
            daily_drift: 0.01,
            reversion: 1.0 / 60.0,
            volatility: 1.0e-4,
            half_spread: 0.25,
            tick: 0.5,
            level_size: 2.0,
            depth_dip_coupling: 0.3,
            depth_noise: 0.1,
        }
    }
}

impl MarketModel {
    /// Generates one day; the same `(date, seed)` always gives the same day.
    pub fn day(&self, date: NaiveDate, seed: u64) -> DayBook {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, date.to_epoch_days() as u64));
        let mean = self.base_mid * (1.0 + self.daily_drift * rng.sample::<f64, _>(StandardNormal));
        let sigma = self.volatility * mean;
        let theta = self.reversion;
        let stationary_sd = sigma / (theta * (2.0 - theta)).sqrt();
        let t0 = day_start_ns(date);

        let mut x = mean + stationary_sd * rng.sample::<f64, _>(StandardNormal);
        let mut depth_noise = 0.0f64;
        let noise_keep = 0.95f64;
        let mut snaps = Vec::with_capacity(self.snapshots_per_day);
        for i in 0..self.snapshots_per_day {
            let z = (x - mean) / stationary_sd;
            let depth_mult = (-self.depth_dip_coupling * z + depth_noise).exp();

            let best_bid = ((x - self.half_spread) / self.tick).floor() * self.tick;
            let best_ask = best_bid + (2.0 * self.half_spread / self.tick).ceil().max(1.0) * self.tick;
            let mut bids: Ladder = [BookLevel::default(); DEPTH];
            let mut asks: Ladder = [BookLevel::default(); DEPTH];
            for lvl in 0..DEPTH {
                let shape = 1.0 + 0.05 * lvl as f64;
                let bid_size = self.level_size * shape * depth_mult * rng.random_range(0.8..1.2);
                let ask_size = self.level_size * shape * rng.random_range(0.8..1.2);
                bids[lvl] = BookLevel::new(best_bid - lvl as f64 * self.tick, bid_size);
                asks[lvl] = BookLevel::new(best_ask + lvl as f64 * self.tick, ask_size);
            }
            snaps.push(Snapshot {
                timestamp_ns: t0 + i as u64 * NS_PER_S,
                bids,
                asks,
            });

            x += theta * (mean - x) + sigma * rng.sample::<f64, _>(StandardNormal);
            depth_noise = noise_keep * depth_noise
                + self.depth_noise * (1.0 - noise_keep * noise_keep).sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        DayBook::new(date, snaps).expect("synthetic day satisfies the snapshot invariants")
    }

    /// Writes `n_days` consecutive days starting at `first` into `dir`.
    pub fn write_month(
        &self,
        dir: &Path,
        first: NaiveDate,
        n_days: usize,
        seed: u64,
        format: FileFormat,
    ) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let dates: Vec<NaiveDate> = (0..n_days as u64)
            .map(|d| first.checked_add_days(Days::new(d)).expect("date in range"))
            .collect();
        crate::par::try_map(crate::par::Parallelism::Parallel, &dates, |&date| {
            save_day(&self.day(date, seed), dir, format)
        })
    }
}

/// SplitMix64-style mixing of two words into a seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
