//! Per-frame delay samples, nearest-rank percentiles and run summaries.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::des::SimTime;
use crate::pon::OnuId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("percentile of an empty sample store")]
    EmptyStore,
    #[error("percentile {0} outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("fairness index needs at least one positive value")]
    AllZero,
    #[error("fairness index input must be finite and non-negative")]
    InvalidValue,
}

/// Where a delay sample is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DelayClass {
    Mfh(OnuId),
    Conventional,
}

impl fmt::Display for DelayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayClass::Mfh(onu) => write!(f, "mfh-{onu}"),
            DelayClass::Conventional => f.write_str("conventional"),
        }
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[SimTime], p: f64) -> Result<SimTime, MetricsError> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::InvalidPercentile(p));
    }
    if sorted.is_empty() {
        return Err(MetricsError::EmptyStore);
    }
    let n = sorted.len();
    let exact = p * n as f64 / 100.0;
    // decimal p such as 99.999 is not exact in binary; snap near-integers
    let nearest = exact.round();
    let rank = if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        exact.ceil()
    } as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Nearest-rank percentile; sorts a copy.
pub fn percentile(samples: &[SimTime], p: f64) -> Result<SimTime, MetricsError> {
    let mut v = samples.to_vec();
    v.sort_unstable();
    percentile_sorted(&v, p)
}

/// `(sum x)^2 / (n * sum x^2)`.
pub fn jain_index(values: &[f64]) -> Result<f64, MetricsError> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(MetricsError::InvalidValue);
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (values.len() as f64 * sq))
}

pub const SUMMARY_PERCENTILES: [f64; 6] = [1.0, 25.0, 50.0, 75.0, 99.0, 99.999];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelaySummary {
    pub count: u64,
    pub min: SimTime,
    pub p1: SimTime,
    pub p25: SimTime,
    pub p50: SimTime,
    pub p75: SimTime,
    pub p99: SimTime,
    pub p99_999: SimTime,
    pub max: SimTime,
    /// Mean delay in picoseconds.
    pub mean_ps: f64,
}

impl DelaySummary {
    /// Sorts `samples` in place; `None` for an empty store.
    pub fn from_samples(samples: &mut [SimTime]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_unstable();
        let p = |q| percentile_sorted(samples, q).expect("non-empty, valid p");
        let total: u128 = samples.iter().map(|s| s.as_ps() as u128).sum();
        Some(DelaySummary {
            count: samples.len() as u64,
            min: samples[0],
            p1: p(1.0),
            p25: p(25.0),
            p50: p(50.0),
            p75: p(75.0),
            p99: p(99.0),
            p99_999: p(99.999),
            max: samples[samples.len() - 1],
            mean_ps: total as f64 / samples.len() as f64,
        })
    }

    pub fn is_monotone(&self) -> bool {
        self.min <= self.p1
            && self.p1 <= self.p25
            && self.p25 <= self.p50
            && self.p50 <= self.p75
            && self.p75 <= self.p99
            && self.p99 <= self.p99_999
            && self.p99_999 <= self.max
    }
}

/// Delay stores and grant counters of one run (or a pool of runs).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelayStats {
    warmup: SimTime,
    classes: BTreeMap<DelayClass, Vec<SimTime>>,
    pub frames: u64,
    pub bytes: u64,
    pub grants: u64,
    pub granted_bytes: u64,
    pub wasted_grant_bytes: u64,
}

impl DelayStats {
    /// Samples of frames arriving before `warmup` are dropped.
    pub fn new(warmup: SimTime) -> Self {
        DelayStats {
            warmup,
            ..Default::default()
        }
    }

    /// Makes `class` appear in summaries even with no samples.
    pub fn register(&mut self, class: DelayClass) {
        self.classes.entry(class).or_default();
    }

    pub fn record_delay(&mut self, class: DelayClass, arrival: SimTime, completion: SimTime, size: u32) {
        if arrival < self.warmup {
            return;
        }
        debug_assert!(completion > arrival);
        self.classes.entry(class).or_default().push(completion - arrival);
        self.frames += 1;
        self.bytes += size as u64;
    }

    pub fn record_grant(&mut self, granted: u64, sent: u64) {
        self.grants += 1;
        self.granted_bytes += granted;
        self.wasted_grant_bytes += granted - sent;
    }

    pub fn samples(&self, class: DelayClass) -> &[SimTime] {
        self.classes.get(&class).map_or(&[], |v| v.as_slice())
    }

    pub fn classes(&self) -> impl Iterator<Item = DelayClass> + '_ {
        self.classes.keys().copied()
    }

    pub fn percentile(&self, class: DelayClass, p: f64) -> Result<SimTime, MetricsError> {
        percentile(self.samples(class), p)
    }

    /// Share of granted payload bytes left unused.
    pub fn grant_waste_ratio(&self) -> f64 {
        if self.granted_bytes == 0 {
            0.0
        } else {
            self.wasted_grant_bytes as f64 / self.granted_bytes as f64
        }
    }

    /// Pools `other` into `self`; summaries are then taken over the union.
    pub fn merge(&mut self, other: DelayStats) {
        for (class, samples) in other.classes {
            self.classes.entry(class).or_default().extend(samples);
        }
        self.frames += other.frames;
        self.bytes += other.bytes;
        self.grants += other.grants;
        self.granted_bytes += other.granted_bytes;
        self.wasted_grant_bytes += other.wasted_grant_bytes;
    }

    /// One summary per registered class; `None` marks an empty class.
    pub fn summarize(&mut self) -> BTreeMap<DelayClass, Option<DelaySummary>> {
        self.classes
            .iter_mut()
            .map(|(c, s)| (*c, DelaySummary::from_samples(s)))
            .collect()
    }
}

/// Busy and total time of one wavelength, summable across runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChannelUsage {
    pub busy: SimTime,
    pub total: SimTime,
    pub delivered_bytes: u64,
}

impl ChannelUsage {
    pub fn utilization(&self) -> f64 {
        if self.total == SimTime::ZERO {
            0.0
        } else {
            self.busy.as_ps() as f64 / self.total.as_ps() as f64
        }
    }

    pub fn merge(&mut self, other: &ChannelUsage) {
        self.busy += other.busy;
        self.total += other.total;
        self.delivered_bytes += other.delivered_bytes;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(v: &[u64]) -> Vec<SimTime> {
        v.iter().map(|x| SimTime::from_ps(*x)).collect()
    }

    #[test]
    fn nearest_rank_examples() {
        let s = ps(&(1..=100).collect::<Vec<_>>());
        assert_eq!(percentile(&s, 99.0), Ok(SimTime::from_ps(99)));
        assert_eq!(percentile(&s, 99.999), Ok(SimTime::from_ps(100)));
        assert_eq!(percentile(&s, 100.0), Ok(SimTime::from_ps(100)));
        assert_eq!(percentile(&s, 1.0), Ok(SimTime::from_ps(1)));
        for p in [0.001, 50.0, 100.0] {
            assert_eq!(percentile(&ps(&[7]), p), Ok(SimTime::from_ps(7)));
        }
        assert_eq!(percentile(&[], 50.0), Err(MetricsError::EmptyStore));
        assert!(percentile(&s, 0.0).is_err());
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[5.0, 5.0, 5.0]), Ok(1.0));
        assert!((jain_index(&[1.0, 0.0, 0.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jain_index(&[0.0, 0.0]), Err(MetricsError::AllZero));
        // 157.87^2 / (6 * 4215.8919), evaluated by hand
        let v = jain_index(&[25.51, 30.09, 21.46, 27.45, 23.36, 30.00]).unwrap();
        assert!((v - 0.985_277_3).abs() < 1e-6, "{v}");
    }

    #[test]
    fn delay_recording() {
        let mut s = DelayStats::new(SimTime::from_ps(100));
        s.register(DelayClass::Mfh(OnuId(0)));
        s.record_delay(DelayClass::Mfh(OnuId(0)), SimTime::ZERO, SimTime::from_ps(320_000), 1000);
        s.record_delay(DelayClass::Conventional, SimTime::from_ps(100), SimTime::from_ps(420_100), 1000);
        assert!(s.samples(DelayClass::Mfh(OnuId(0))).is_empty());
        assert_eq!(s.samples(DelayClass::Conventional), &[SimTime::from_ps(420_000)]);
        let sum = s.summarize();
        assert_eq!(sum[&DelayClass::Mfh(OnuId(0))], None);
        assert_eq!(sum[&DelayClass::Conventional].unwrap().p50, SimTime::from_ps(420_000));
    }

    #[test]
    fn merging_pools_samples() {
        let mut a = DelayStats::new(SimTime::ZERO);
        let mut b = DelayStats::new(SimTime::ZERO);
        for d in [1, 2, 3] {
            a.record_delay(DelayClass::Conventional, SimTime::ZERO, SimTime::from_ps(d), 64);
        }
        for d in [10, 20] {
            b.record_delay(DelayClass::Conventional, SimTime::ZERO, SimTime::from_ps(d), 64);
        }
        a.merge(b);
        let s = a.summarize()[&DelayClass::Conventional].unwrap();
        assert_eq!(s.count, 5);
        assert_eq!(s.p50, SimTime::from_ps(3));
        assert_eq!(s.mean_ps, 7.2);
    }

    #[test]
    fn idle_channel_has_zero_utilization() {
        let u = ChannelUsage {
            busy: SimTime::ZERO,
            total: SimTime::from_us(10),
            delivered_bytes: 0,
        };
        assert_eq!(u.utilization(), 0.0);
    }

    proptest! {
        #[test]
        fn nearest_rank_matches_full_sort(
            v in prop::collection::vec(1u64..1_000_000, 1..2000),
            milli in 1u64..=100_000,
        ) {
            // p = milli / 1000, rank = ceil(p * n / 100) in integers
            let samples = ps(&v);
            let mut sorted = v.clone();
            sorted.sort();
            let n = sorted.len() as u64;
            let k = (milli * n).div_ceil(100_000).max(1) as usize;
            let p = milli as f64 / 1000.0;
            prop_assert_eq!(percentile(&samples, p).unwrap().as_ps(), sorted[k - 1]);
        }

        #[test]
        fn summaries_are_monotone(v in prop::collection::vec(1u64..u32::MAX as u64, 1..5000)) {
            let mut s = ps(&v);
            prop_assert!(DelaySummary::from_samples(&mut s).unwrap().is_monotone());
        }
    }

    #[test]
    fn nearest_rank_large_store() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let v: Vec<u64> = (0..100_000).map(|_| rng.random_range(1..10_000_000)).collect();
        let mut sorted = v.clone();
        sorted.sort();
        let samples = ps(&v);
        for (p, rank) in [(1.0, 1_000), (50.0, 50_000), (99.0, 99_000), (99.999, 99_999), (100.0, 100_000)] {
            assert_eq!(percentile(&samples, p).unwrap().as_ps(), sorted[rank - 1]);
        }
    }
}
