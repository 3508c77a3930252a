//! Seeded traffic sources.
//!
//! Conventional ONUs get per-frame Poisson arrivals with a trimodal size
//! mix. Each MFH DU emits one burst per period whose byte count is Poisson;
//! the burst schedule is drawn ahead into a ledger that doubles as the
//! wireless-scheduling side channel read by the OLT's predictor.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::{SimTime, PS_PER_SEC};
use crate::pon::{Frame, LineRate, OnuId, MAX_FRAME_BYTES, MIN_FRAME_BYTES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("WSI lookup for {onu} up to {to} beyond drawn horizon {horizon}")]
    HorizonExceeded {
        onu: OnuId,
        to: SimTime,
        horizon: SimTime,
    },
    #[error("invalid source parameter: {0}")]
    InvalidParameter(String),
}

/// Read access to the DU burst schedule.
pub trait WsiSource {
    /// Bytes of bursts emitted in `(from, to]`.
    fn wsi_lookup(&mut self, onu: OnuId, from: SimTime, to: SimTime) -> Result<u64, TrafficError>;
}

const STREAM_MFH: u64 = 1;
const STREAM_CONVENTIONAL: u64 = 2;

/// Independent generator for one (seed, stream) pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn mfh_stream(onu: OnuId) -> u64 {
    ((onu.0 as u64) << 8) | STREAM_MFH
}

pub fn conventional_stream(onu: OnuId) -> u64 {
    ((onu.0 as u64) << 8) | STREAM_CONVENTIONAL
}

/// Mean bytes per period for a load in bit/s.
pub fn bytes_per_period(load_bps: u64, period: SimTime) -> f64 {
    load_bps as f64 * period.as_ps() as f64 / (8.0 * PS_PER_SEC as f64)
}

fn poisson(lambda: f64) -> Result<Option<Poisson<f64>>, TrafficError> {
    if lambda == 0.0 {
        return Ok(None);
    }
    Poisson::new(lambda)
        .map(Some)
        .map_err(|e| TrafficError::InvalidParameter(format!("poisson mean {lambda}: {e}")))
}

/// One burst draw: Poisson bytes with mean `load * period / 8`.
pub fn mfh_burst_bytes<R: Rng + ?Sized>(rng: &mut R, load_bps: u64, period: SimTime) -> u64 {
    match poisson(bytes_per_period(load_bps, period)) {
        Ok(Some(d)) => d.sample(rng) as u64,
        _ => 0,
    }
}

/// Frame sizes for `bytes` of MFH payload: maximal frames plus one
/// remainder, padded up to the Ethernet minimum.
pub fn serialize_burst(bytes: u64) -> impl Iterator<Item = u32> {
    let full = bytes / MAX_FRAME_BYTES as u64;
    let rem = (bytes % MAX_FRAME_BYTES as u64) as u32;
    let tail = (rem > 0).then(|| rem.max(MIN_FRAME_BYTES));
    std::iter::repeat_n(MAX_FRAME_BYTES, full as usize).chain(tail)
}

pub fn serialized_len(bytes: u64) -> u64 {
    let rem = bytes % MAX_FRAME_BYTES as u64;
    if rem > 0 && rem < MIN_FRAME_BYTES as u64 {
        bytes - rem + MIN_FRAME_BYTES as u64
    } else {
        bytes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSizeMix {
    pub sizes: Vec<u32>,
    pub weights: Vec<f64>,
}

impl Default for FrameSizeMix {
    fn default() -> Self {
        FrameSizeMix {
            sizes: vec![64, 594, 1518],
            weights: vec![0.47, 0.05, 0.48],
        }
    }
}

impl FrameSizeMix {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: &str| Err(TrafficError::InvalidParameter(m.to_string()));
        if self.sizes.is_empty() || self.sizes.len() != self.weights.len() {
            return bad("frame mix needs one weight per size");
        }
        if self
            .sizes
            .iter()
            .any(|s| !(MIN_FRAME_BYTES..=MAX_FRAME_BYTES).contains(s))
        {
            return bad("frame mix size outside 64..=1518");
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.total_weight() <= 0.0 {
            return bad("frame mix weights must be non-negative with a positive sum");
        }
        Ok(())
    }

    fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let total = self.total_weight();
        self.sizes
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| *s as f64 * w / total)
            .sum()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let mut u = rng.random::<f64>() * self.total_weight();
        for (s, w) in self.sizes.iter().zip(&self.weights) {
            if u < *w {
                return *s;
            }
            u -= w;
        }
        *self.sizes.last().expect("non-empty mix")
    }
}

// one per ONU, so the size gap is irrelevant
#[allow(clippy::large_enum_variant)]
enum FramePattern {
    Poisson {
        rng: ChaCha8Rng,
        gap: Exp<f64>,
        mix: FrameSizeMix,
        clock_ps: f64,
        last: Option<SimTime>,
    },
    Scripted(VecDeque<(SimTime, u32)>),
    Silent,
}

/// Frame-by-frame arrival process of a conventional ONU.
pub struct ConventionalSource {
    onu: OnuId,
    pattern: FramePattern,
}

impl ConventionalSource {
    pub fn poisson(onu: OnuId, load_bps: u64, mix: FrameSizeMix, rng: ChaCha8Rng) -> Result<Self, TrafficError> {
        mix.validate()?;
        if load_bps == 0 {
            return Ok(ConventionalSource {
                onu,
                pattern: FramePattern::Silent,
            });
        }
        let frames_per_ps = load_bps as f64 / (8.0 * mix.mean() * PS_PER_SEC as f64);
        let gap = Exp::new(frames_per_ps)
            .map_err(|e| TrafficError::InvalidParameter(format!("arrival rate: {e}")))?;
        Ok(ConventionalSource {
            onu,
            pattern: FramePattern::Poisson {
                rng,
                gap,
                mix,
                clock_ps: 0.0,
                last: None,
            },
        })
    }

    /// Replays exact `(arrival, size)` pairs; must be sorted by arrival.
    pub fn scripted(onu: OnuId, frames: Vec<(SimTime, u32)>) -> Self {
        ConventionalSource {
            onu,
            pattern: FramePattern::Scripted(frames.into()),
        }
    }

    pub fn onu(&self) -> OnuId {
        self.onu
    }

    /// Next arrival in the stream; arrival times strictly increase.
    pub fn next_frame(&mut self) -> Option<Frame> {
        let (arrival, size) = match &mut self.pattern {
            FramePattern::Silent => return None,
            FramePattern::Scripted(q) => q.pop_front()?,
            FramePattern::Poisson {
                rng,
                gap,
                mix,
                clock_ps,
                last,
            } => {
                *clock_ps += gap.sample(rng);
                let mut t = SimTime::from_ps(clock_ps.round() as u64);
                if let Some(prev) = *last {
                    if t <= prev {
                        t = prev + SimTime::from_ps(1);
                    }
                }
                *last = Some(t);
                (t, mix.sample(rng))
            }
        };
        Some(Frame {
            size,
            arrival,
            onu: self.onu,
        })
    }
}

/// All frames of a Poisson conventional stream arriving in `[0, window)`.
pub fn conventional_arrivals(
    rng: ChaCha8Rng,
    load_bps: u64,
    window: SimTime,
    mix: FrameSizeMix,
) -> Result<Vec<Frame>, TrafficError> {
    let mut src = ConventionalSource::poisson(OnuId(0), load_bps, mix, rng)?;
    let mut out = Vec::new();
    while let Some(f) = src.next_frame() {
        if f.arrival >= window {
            break;
        }
        out.push(f);
    }
    Ok(out)
}

/// One ledger entry: a burst's emission instant and serialized size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstRecord {
    pub emission: SimTime,
    pub bytes: u64,
}

#[allow(clippy::large_enum_variant)]
enum BurstPattern {
    Poisson {
        rng: ChaCha8Rng,
        dist: Option<Poisson<f64>>,
        phase: SimTime,
        period: SimTime,
        next_index: u64,
    },
    Scripted(VecDeque<BurstRecord>),
}

/// A DU feeding one MFH ONU over its local ingress link.
pub struct MfhSource {
    onu: OnuId,
    ingress: LineRate,
    pattern: BurstPattern,
    // drawn but not yet emitted
    ahead: VecDeque<BurstRecord>,
    // emitted, retained for lookups
    behind: VecDeque<BurstRecord>,
    horizon: SimTime,
    emitted_bytes: u64,
}

impl MfhSource {
    /// Poisson bursts every `period`, first one at a uniform phase in
    /// `[0, period)` drawn from the same stream.
    pub fn poisson(
        onu: OnuId,
        load_bps: u64,
        period: SimTime,
        ingress: LineRate,
        mut rng: ChaCha8Rng,
    ) -> Result<Self, TrafficError> {
        if period == SimTime::ZERO {
            return Err(TrafficError::InvalidParameter("burst period must be positive".into()));
        }
        let phase = SimTime::from_ps(rng.random_range(0..period.as_ps()));
        let dist = poisson(bytes_per_period(load_bps, period))?;
        Ok(MfhSource {
            onu,
            ingress,
            pattern: BurstPattern::Poisson {
                rng,
                dist,
                phase,
                period,
                next_index: 0,
            },
            ahead: VecDeque::new(),
            behind: VecDeque::new(),
            horizon: SimTime::ZERO,
            emitted_bytes: 0,
        })
    }

    /// Replays `(emission, bytes)` bursts; the whole schedule is known upfront.
    pub fn scripted(onu: OnuId, bursts: Vec<(SimTime, u64)>, ingress: LineRate) -> Self {
        let records = bursts
            .into_iter()
            .map(|(emission, bytes)| BurstRecord {
                emission,
                bytes: serialized_len(bytes),
            })
            .collect();
        MfhSource {
            onu,
            ingress,
            pattern: BurstPattern::Scripted(records),
            ahead: VecDeque::new(),
            behind: VecDeque::new(),
            horizon: SimTime::MAX,
            emitted_bytes: 0,
        }
    }

    pub fn onu(&self) -> OnuId {
        self.onu
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    pub fn emitted_bytes(&self) -> u64 {
        self.emitted_bytes
    }

    /// Draws every burst with emission time `<= t` into the ledger.
    pub fn extend_to(&mut self, t: SimTime) {
        match &mut self.pattern {
            BurstPattern::Scripted(q) => {
                self.ahead.extend(q.drain(..));
            }
            BurstPattern::Poisson {
                rng,
                dist,
                phase,
                period,
                next_index,
            } => {
                loop {
                    let emission = *phase + SimTime::from_ps(period.as_ps() * *next_index);
                    if emission > t {
                        break;
                    }
                    let drawn = dist.as_ref().map_or(0, |d| d.sample(rng) as u64);
                    self.ahead.push_back(BurstRecord {
                        emission,
                        bytes: serialized_len(drawn),
                    });
                    *next_index += 1;
                }
                if t > self.horizon {
                    self.horizon = t;
                }
            }
        }
    }

    /// Emission time of the next burst not yet emitted.
    pub fn next_emission(&mut self) -> Option<SimTime> {
        if self.ahead.is_empty() {
            let peek = match &self.pattern {
                BurstPattern::Scripted(q) => q.front().map(|r| r.emission),
                BurstPattern::Poisson {
                    phase,
                    period,
                    next_index,
                    ..
                } => Some(*phase + SimTime::from_ps(period.as_ps() * *next_index)),
            }?;
            self.extend_to(peek);
        }
        self.ahead.front().map(|r| r.emission)
    }

    /// Emits the burst due at `now` as frames arriving over the ingress link.
    pub fn emit(&mut self, now: SimTime) -> Vec<Frame> {
        self.extend_to(now);
        let mut frames = Vec::new();
        while self.ahead.front().is_some_and(|r| r.emission <= now) {
            let rec = self.ahead.pop_front().expect("front exists");
            let mut cum = 0u64;
            for size in serialize_burst(rec.bytes) {
                cum += size as u64;
                frames.push(Frame {
                    size,
                    arrival: rec.emission + self.ingress.tx_time(cum),
                    onu: self.onu,
                });
            }
            self.emitted_bytes += rec.bytes;
            self.behind.push_back(rec);
        }
        frames
    }

    /// Drops emitted ledger entries at or before `t`; later lookups must
    /// start at `from >= t`.
    pub fn prune_before(&mut self, t: SimTime) {
        while self.behind.front().is_some_and(|r| r.emission <= t) {
            self.behind.pop_front();
        }
    }

    pub fn lookup(&self, from: SimTime, to: SimTime) -> Result<u64, TrafficError> {
        if to > self.horizon {
            return Err(TrafficError::HorizonExceeded {
                onu: self.onu,
                to,
                horizon: self.horizon,
            });
        }
        if to <= from {
            return Ok(0);
        }
        Ok(self
            .behind
            .iter()
            .chain(self.ahead.iter())
            .filter(|r| r.emission > from && r.emission <= to)
            .map(|r| r.bytes)
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Area {
    Residential,
    Commercial,
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Area::Residential => "residential",
            Area::Commercial => "commercial",
        })
    }
}

impl FromStr for Area {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "residential" | "res" => Ok(Area::Residential),
            "commercial" | "com" => Ok(Area::Commercial),
            other => Err(format!("unknown area `{other}`")),
        }
    }
}

/// Time-of-day scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "18h")]
    H18,
    #[serde(rename = "24h")]
    H24,
    #[serde(rename = "custom")]
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::H18 => "18h",
            Scenario::H24 => "24h",
            Scenario::Custom => "custom",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "18h" | "18" => Ok(Scenario::H18),
            "24h" | "24" => Ok(Scenario::H24),
            "custom" => Ok(Scenario::Custom),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Per-DU mean load for each scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLoadTable {
    pub peak_bps: Vec<u64>,
    pub areas: Vec<Area>,
    /// Residential load at 18h as a fraction of peak.
    pub offpeak_residential_18h: f64,
    /// Commercial load at 24h as a fraction of peak.
    pub offpeak_commercial_24h: f64,
}

impl ScenarioLoadTable {
    pub fn multiplier(&self, area: Area, scenario: Scenario) -> f64 {
        match (scenario, area) {
            (Scenario::H18, Area::Residential) => self.offpeak_residential_18h,
            (Scenario::H24, Area::Commercial) => self.offpeak_commercial_24h,
            _ => 1.0,
        }
    }

    /// Mean loads for `scenario`; `Custom` returns the peak values (callers
    /// substitute their own table).
    pub fn loads(&self, scenario: Scenario) -> Vec<u64> {
        self.peak_bps
            .iter()
            .zip(&self.areas)
            .map(|(p, a)| (*p as f64 * self.multiplier(*a, scenario)).round() as u64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_mean_matches_closed_form() {
        let period = SimTime::from_us(250);
        assert_eq!(bytes_per_period(4_170_000_000, period), 130_312.5);
        let mut rng = stream_rng(7, mfh_stream(OnuId(0)));
        let n = 1_000_000;
        let total: u64 = (0..n)
            .map(|_| mfh_burst_bytes(&mut rng, 4_170_000_000, period))
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 130_312.5).abs() / 130_312.5 < 0.005, "mean {mean}");
    }

    #[test]
    fn zero_load_bursts_are_empty() {
        let mut rng = stream_rng(1, 1);
        assert!((0..100).all(|_| mfh_burst_bytes(&mut rng, 0, SimTime::from_us(250)) == 0));
    }

    #[test]
    fn burst_sequence_is_seed_determined() {
        let draw = |seed| {
            let mut rng = stream_rng(seed, mfh_stream(OnuId(2)));
            (0..50)
                .map(|_| mfh_burst_bytes(&mut rng, 4_000_000_000, SimTime::from_us(250)))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn serialization_rule() {
        assert_eq!(serialize_burst(0).count(), 0);
        assert_eq!(serialize_burst(4500).collect::<Vec<_>>(), vec![1518, 1518, 1464]);
        assert_eq!(serialize_burst(1518 + 10).collect::<Vec<_>>(), vec![1518, 64]);
        assert_eq!(serialize_burst(3036).collect::<Vec<_>>(), vec![1518, 1518]);
        assert_eq!(serialized_len(1518 + 10), 1518 + 64);
        assert_eq!(serialized_len(4500), 4500);
        assert_eq!(serialized_len(30), 64);
    }

    #[test]
    fn trimodal_mean() {
        let m = FrameSizeMix::default().mean();
        assert!((m - (0.47 * 64.0 + 0.05 * 594.0 + 0.48 * 1518.0)).abs() < 1e-9);
    }

    #[test]
    fn conventional_zero_load_is_empty() {
        let f = conventional_arrivals(stream_rng(1, 2), 0, SimTime::from_secs_f64(1.0), FrameSizeMix::default())
            .unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn conventional_rate_over_ten_replications() {
        // 60 s at 1 Gbps -> 7.5e9 B expected per replication
        let window = SimTime::from_secs_f64(60.0);
        let mut total = 0u64;
        for rep in 0..10 {
            let frames = conventional_arrivals(
                stream_rng(100 + rep, conventional_stream(OnuId(0))),
                1_000_000_000,
                window,
                FrameSizeMix::default(),
            )
            .unwrap();
            for w in frames.windows(2) {
                assert!(w[0].arrival < w[1].arrival);
            }
            total += frames.iter().map(|f| f.size as u64).sum::<u64>();
        }
        let mean = total as f64 / 10.0;
        assert!((mean - 7.5e9).abs() / 7.5e9 < 0.01, "mean {mean}");
    }

    #[test]
    fn streams_are_separated() {
        let window = SimTime::from_us(500);
        let a = conventional_arrivals(stream_rng(9, conventional_stream(OnuId(0))), 1_000_000_000, window, FrameSizeMix::default()).unwrap();
        let b = conventional_arrivals(stream_rng(9, conventional_stream(OnuId(1))), 1_000_000_000, window, FrameSizeMix::default()).unwrap();
        let a2 = conventional_arrivals(stream_rng(9, conventional_stream(OnuId(0))), 1_000_000_000, window, FrameSizeMix::default()).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    fn scripted() -> MfhSource {
        MfhSource::scripted(
            OnuId(0),
            vec![(SimTime::from_us(10), 12_500), (SimTime::from_us(20), 3_000)],
            LineRate::GBPS_100,
        )
    }

    #[test]
    fn wsi_lookup_examples() {
        let mut s = scripted();
        s.extend_to(SimTime::from_us(100));
        let us = SimTime::from_us;
        assert_eq!(s.lookup(us(10), us(10)), Ok(0));
        assert_eq!(s.lookup(us(5), us(10)), Ok(12_500));
        assert_eq!(s.lookup(us(10), us(15)), Ok(0));
        assert_eq!(s.lookup(us(0), us(30)), Ok(15_500));
    }

    #[test]
    fn wsi_beyond_horizon_fails() {
        let mut s = MfhSource::poisson(OnuId(1), 4_000_000_000, SimTime::from_us(250), LineRate::GBPS_100, stream_rng(1, 1)).unwrap();
        s.extend_to(SimTime::from_us(1000));
        assert!(matches!(
            s.lookup(SimTime::ZERO, SimTime::from_us(1001)),
            Err(TrafficError::HorizonExceeded { .. })
        ));
        assert!(s.lookup(SimTime::ZERO, SimTime::from_us(1000)).is_ok());
    }

    #[test]
    fn wsi_agrees_with_emitted_bytes() {
        let mut s = MfhSource::poisson(OnuId(1), 4_000_000_000, SimTime::from_us(250), LineRate::GBPS_100, stream_rng(5, 1)).unwrap();
        let end = SimTime::from_us(20_000);
        s.extend_to(end);
        let predicted = s.lookup(SimTime::ZERO, end).unwrap();
        let mut emitted = 0u64;
        while let Some(t) = s.next_emission() {
            if t > end {
                break;
            }
            emitted += s.emit(t).iter().map(|f| f.size as u64).sum::<u64>();
        }
        assert_eq!(predicted, emitted);
        assert_eq!(emitted, s.emitted_bytes());
    }

    #[test]
    fn emitted_frames_respect_ingress_rate() {
        let mut s = scripted();
        let frames = s.emit(SimTime::from_us(10));
        assert_eq!(frames.len(), 9);
        assert_eq!(frames[0].arrival, SimTime::from_us(10) + SimTime::from_ps(1518 * 80));
        assert_eq!(frames.last().unwrap().arrival, SimTime::from_us(10) + SimTime::from_ps(12_500 * 80));
        assert_eq!(s.next_emission(), Some(SimTime::from_us(20)));
    }

    #[test]
    fn offpeak_multipliers() {
        let t = ScenarioLoadTable {
            peak_bps: vec![4_170_000_000, 4_287_000_000],
            areas: vec![Area::Residential, Area::Commercial],
            offpeak_residential_18h: 0.381,
            offpeak_commercial_24h: 0.081,
        };
        assert_eq!(t.loads(Scenario::H18), vec![1_588_770_000, 4_287_000_000]);
        assert_eq!(t.loads(Scenario::H24), vec![4_170_000_000, 347_247_000]);
    }
}
