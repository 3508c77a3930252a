//! OLT/ONU entities: frames, Report/Gate messages, upstream wavelength
//! channels and the ONU side of a granted transmission.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::{SimTime, PS_PER_SEC};

pub const MIN_FRAME_BYTES: u32 = 64;
pub const MAX_FRAME_BYTES: u32 = 1518;
/// Control slot appended to every upstream burst for the piggybacked report.
pub const REPORT_BYTES: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OnuId(pub usize);

impl fmt::Display for OnuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "onu{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WavelengthId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnuKind {
    Mfh,
    Conventional,
}

/// Line rate in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LineRate(pub u64);

impl LineRate {
    pub const GBPS_25: LineRate = LineRate(25_000_000_000);
    pub const GBPS_100: LineRate = LineRate(100_000_000_000);

    /// Serialization time of `bytes`, rounded up to a whole picosecond.
    pub fn tx_time(self, bytes: u64) -> SimTime {
        let bits_ps = bytes as u128 * 8 * PS_PER_SEC as u128;
        let rate = self.0 as u128;
        SimTime::from_ps(bits_ps.div_ceil(rate) as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub size: u32,
    /// Instant the frame is fully received at the ONU.
    pub arrival: SimTime,
    pub onu: OnuId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportMsg {
    pub onu: OnuId,
    pub queue_bytes: u64,
    pub gen_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateMsg {
    pub onu: OnuId,
    pub wavelength: WavelengthId,
    /// Transmission start as seen by the ONU.
    pub start_time: SimTime,
    /// Payload budget, excluding the report slot.
    pub length_bytes: u64,
    pub cycle_tag: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PonError {
    #[error("burst overlap on wavelength {wavelength}: [{start}, {end}) within guard of [{other_start}, {other_end})")]
    OverlapDetected {
        wavelength: usize,
        start: SimTime,
        end: SimTime,
        other_start: SimTime,
        other_end: SimTime,
    },
    #[error("{onu} started a transmission without a pending grant")]
    NoGrant { onu: OnuId },
    #[error("{onu} grant starts at {expected}, executed at {actual}")]
    GrantTimeMismatch {
        onu: OnuId,
        expected: SimTime,
        actual: SimTime,
    },
    #[error("frame of {size} B outside Ethernet bounds")]
    FrameSize { size: u32 },
}

/// One upstream wavelength. All times here are in the OLT receiver's frame:
/// a burst starting at the ONU at `t` occupies the channel from `t + propagation`.
#[derive(Debug, Clone)]
pub struct WavelengthChannel {
    pub id: WavelengthId,
    pub rate: LineRate,
    horizon: SimTime,
    busy: SimTime,
    accounting_end: SimTime,
    delivered_bytes: u64,
    // live bursts keyed by start, for the overlap check
    bursts: BTreeMap<SimTime, SimTime>,
}

impl WavelengthChannel {
    pub fn new(id: WavelengthId, rate: LineRate, accounting_end: SimTime) -> Self {
        WavelengthChannel {
            id,
            rate,
            horizon: SimTime::ZERO,
            busy: SimTime::ZERO,
            accounting_end,
            delivered_bytes: 0,
            bursts: BTreeMap::new(),
        }
    }

    /// Earliest instant the next burst may begin arriving at the OLT.
    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    /// Reserves a window of `bytes` (payload + report) starting at `start`.
    /// Returns the window end; the horizon moves to end + guard.
    pub fn reserve(&mut self, start: SimTime, bytes: u64, guard: SimTime) -> SimTime {
        debug_assert!(start >= self.horizon);
        let end = start + self.rate.tx_time(bytes);
        let clip = |t: SimTime| t.min(self.accounting_end);
        self.busy += clip(end) - clip(start);
        self.horizon = end + guard;
        end
    }

    /// Reserved time inside `[0, accounting_end]`.
    pub fn busy_time(&self) -> SimTime {
        self.busy
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    pub fn utilization(&self) -> f64 {
        if self.accounting_end == SimTime::ZERO {
            return 0.0;
        }
        self.busy.as_ps() as f64 / self.accounting_end.as_ps() as f64
    }

    /// Registers an actual burst `[start, end)` and checks it keeps `guard`
    /// separation from every other live burst. `now` lets old bursts be
    /// dropped: nothing scheduled from now on can start before `now`.
    pub fn record_burst(
        &mut self,
        start: SimTime,
        end: SimTime,
        guard: SimTime,
        now: SimTime,
    ) -> Result<(), PonError> {
        while let Some((&s, &e)) = self.bursts.first_key_value() {
            if e + guard <= now {
                self.bursts.remove(&s);
            } else {
                break;
            }
        }
        let overlap = |other_start: SimTime, other_end: SimTime| PonError::OverlapDetected {
            wavelength: self.id.0,
            start,
            end,
            other_start,
            other_end,
        };
        if let Some((&s, &e)) = self.bursts.range(..=start).next_back() {
            if e + guard > start {
                return Err(overlap(s, e));
            }
        }
        if let Some((&s, &e)) = self.bursts.range(start..).next() {
            if end + guard > s {
                return Err(overlap(s, e));
            }
        }
        self.bursts.insert(start, end);
        Ok(())
    }
}

/// A frame handed to the OLT with the instant its last bit arrives there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub frame: Frame,
    pub completion: SimTime,
}

/// What happened during one executed grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantOutcome {
    pub gate: GateMsg,
    pub sent_bytes: u64,
    /// Instant (ONU frame) the piggybacked report is generated.
    pub report_time: SimTime,
    pub burst_start_olt: SimTime,
    pub burst_end_olt: SimTime,
}

#[derive(Debug, Clone)]
pub struct Onu {
    pub id: OnuId,
    pub kind: OnuKind,
    pub propagation: SimTime,
    queue: VecDeque<Frame>,
    backlog: u64,
    enqueued_bytes: u64,
    pending_grant: Option<GateMsg>,
    /// End (ONU frame) of the most recently granted window.
    pub busy_until: SimTime,
}

impl Onu {
    pub fn new(id: OnuId, kind: OnuKind, propagation: SimTime) -> Self {
        Onu {
            id,
            kind,
            propagation,
            queue: VecDeque::new(),
            backlog: 0,
            enqueued_bytes: 0,
            pending_grant: None,
            busy_until: SimTime::ZERO,
        }
    }

    pub fn backlog(&self) -> u64 {
        self.backlog
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Total bytes ever enqueued.
    pub fn enqueued_bytes(&self) -> u64 {
        self.enqueued_bytes
    }

    pub fn pending_grant(&self) -> Option<&GateMsg> {
        self.pending_grant.as_ref()
    }

    pub fn enqueue_frame(&mut self, frame: Frame) -> Result<(), PonError> {
        if !(MIN_FRAME_BYTES..=MAX_FRAME_BYTES).contains(&frame.size) {
            return Err(PonError::FrameSize { size: frame.size });
        }
        debug_assert!(self.queue.back().is_none_or(|b| b.arrival <= frame.arrival));
        self.backlog += frame.size as u64;
        self.enqueued_bytes += frame.size as u64;
        self.queue.push_back(frame);
        Ok(())
    }

    pub fn generate_report(&self, now: SimTime) -> ReportMsg {
        ReportMsg {
            onu: self.id,
            queue_bytes: self.backlog,
            gen_time: now,
        }
    }

    pub fn deliver_gate(&mut self, gate: GateMsg) {
        self.pending_grant = Some(gate);
    }

    /// Drains whole frames FIFO into the pending grant. A frame goes only if
    /// it fits the remaining budget and has fully arrived by the instant its
    /// own transmission would begin. Delivered frames are appended to `out`.
    pub fn execute_grant(
        &mut self,
        now: SimTime,
        channel: &mut WavelengthChannel,
        guard: SimTime,
        report_bytes: u64,
        out: &mut Vec<Delivery>,
    ) -> Result<GrantOutcome, PonError> {
        let gate = self
            .pending_grant
            .take()
            .ok_or(PonError::NoGrant { onu: self.id })?;
        if gate.start_time != now {
            return Err(PonError::GrantTimeMismatch {
                onu: self.id,
                expected: gate.start_time,
                actual: now,
            });
        }
        let rate = channel.rate;
        let mut sent = 0u64;
        while let Some(front) = self.queue.front() {
            let size = front.size as u64;
            if sent + size > gate.length_bytes {
                break;
            }
            if front.arrival > now + rate.tx_time(sent) {
                break;
            }
            let frame = self.queue.pop_front().expect("front exists");
            sent += size;
            out.push(Delivery {
                frame,
                completion: now + rate.tx_time(sent) + self.propagation,
            });
        }
        self.backlog -= sent;

        let burst_start_olt = now + self.propagation;
        let burst_end_olt = burst_start_olt + rate.tx_time(sent + report_bytes);
        channel.record_burst(burst_start_olt, burst_end_olt, guard, now)?;
        channel.delivered_bytes += sent;

        Ok(GrantOutcome {
            gate,
            sent_bytes: sent,
            report_time: now + rate.tx_time(sent),
            burst_start_olt,
            burst_end_olt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GUARD: SimTime = SimTime::from_ps(624_000);

    fn channel() -> WavelengthChannel {
        WavelengthChannel::new(WavelengthId(0), LineRate::GBPS_25, SimTime::from_us(1_000))
    }

    fn frame(size: u32, at: u64) -> Frame {
        Frame {
            size,
            arrival: SimTime::from_ps(at),
            onu: OnuId(0),
        }
    }

    fn gate(start: SimTime, len: u64) -> GateMsg {
        GateMsg {
            onu: OnuId(0),
            wavelength: WavelengthId(0),
            start_time: start,
            length_bytes: len,
            cycle_tag: 0,
        }
    }

    #[test]
    fn byte_times_are_exact() {
        assert_eq!(LineRate::GBPS_25.tx_time(1), SimTime::from_ps(320));
        assert_eq!(LineRate::GBPS_100.tx_time(1), SimTime::from_ps(80));
        // report slot
        assert_eq!(LineRate::GBPS_25.tx_time(REPORT_BYTES), SimTime::from_ps(20_480));
    }

    #[test]
    fn enqueue_accumulates_backlog() {
        let mut onu = Onu::new(OnuId(0), OnuKind::Conventional, SimTime::ZERO);
        onu.enqueue_frame(frame(1518, 0)).unwrap();
        assert_eq!(onu.backlog(), 1518);

        let mut onu = Onu::new(OnuId(0), OnuKind::Conventional, SimTime::ZERO);
        for _ in 0..10_000 {
            onu.enqueue_frame(frame(64, 0)).unwrap();
        }
        assert_eq!(onu.backlog(), 640_000);
        assert!(onu.enqueue_frame(frame(63, 0)).is_err());
        assert!(onu.enqueue_frame(frame(1519, 0)).is_err());
    }

    #[test]
    fn same_tick_frames_stay_fifo() {
        let mut onu = Onu::new(OnuId(0), OnuKind::Conventional, SimTime::ZERO);
        onu.enqueue_frame(frame(100, 5)).unwrap();
        onu.enqueue_frame(frame(200, 5)).unwrap();
        onu.deliver_gate(gate(SimTime::from_ps(10), 300));
        let mut out = vec![];
        onu.execute_grant(SimTime::from_ps(10), &mut channel(), GUARD, REPORT_BYTES, &mut out)
            .unwrap();
        assert_eq!(out.iter().map(|d| d.frame.size).collect::<Vec<_>>(), vec![100, 200]);
    }

    #[test]
    fn reports_mirror_backlog() {
        let mut onu = Onu::new(OnuId(3), OnuKind::Mfh, SimTime::ZERO);
        assert_eq!(onu.generate_report(SimTime::ZERO).queue_bytes, 0);
        onu.enqueue_frame(frame(1500, 0)).unwrap();
        onu.enqueue_frame(frame(1500, 0)).unwrap();
        onu.enqueue_frame(frame(1500, 0)).unwrap();
        let r = onu.generate_report(SimTime::from_ps(9));
        assert_eq!((r.onu, r.queue_bytes, r.gen_time), (OnuId(3), 4500, SimTime::from_ps(9)));
    }

    #[test]
    fn single_frame_completion_time() {
        let t0 = SimTime::from_us(10);
        let mut onu = Onu::new(OnuId(0), OnuKind::Conventional, SimTime::ZERO);
        onu.enqueue_frame(frame(1000, 0)).unwrap();
        onu.deliver_gate(gate(t0, 1000));
        let mut out = vec![];
        let o = onu
            .execute_grant(t0, &mut channel(), GUARD, REPORT_BYTES, &mut out)
            .unwrap();
        assert_eq!(out[0].completion, t0 + SimTime::from_ps(320_000));
        assert_eq!(o.sent_bytes, 1000);
        assert_eq!(o.report_time, t0 + SimTime::from_ps(320_000));
        assert_eq!(o.burst_end_olt, t0 + SimTime::from_ps(320_000 + 20_480));
    }

    #[test]
    fn no_fragmentation() {
        let mut onu = Onu::new(OnuId(0), OnuKind::Conventional, SimTime::ZERO);
        onu.enqueue_frame(frame(800, 0)).unwrap();
        onu.enqueue_frame(frame(800, 0)).unwrap();
        onu.deliver_gate(gate(SimTime::from_us(1), 1000));
        let mut out = vec![];
        let o = onu
            .execute_grant(SimTime::from_us(1), &mut channel(), GUARD, REPORT_BYTES, &mut out)
            .unwrap();
        assert_eq!(o.sent_bytes, 800);
        assert_eq!(onu.backlog(), 800);
    }

    #[test]
    fn zero_grant_still_reports() {
        let mut onu = Onu::new(OnuId(0), OnuKind::Conventional, SimTime::from_us(5));
        onu.enqueue_frame(frame(500, 0)).unwrap();
        onu.deliver_gate(gate(SimTime::from_us(1), 0));
        let mut out = vec![];
        let o = onu
            .execute_grant(SimTime::from_us(1), &mut channel(), GUARD, REPORT_BYTES, &mut out)
            .unwrap();
        assert!(out.is_empty());
        assert_eq!(o.report_time, SimTime::from_us(1));
        assert_eq!(o.burst_start_olt, SimTime::from_us(6));
    }

    #[test]
    fn frames_not_yet_arrived_are_held_back() {
        let mut onu = Onu::new(OnuId(0), OnuKind::Mfh, SimTime::ZERO);
        // arrives 1 ps after the transmission instant it would need
        onu.enqueue_frame(frame(1518, 1_000_001)).unwrap();
        onu.deliver_gate(gate(SimTime::from_ps(1_000_000), 5000));
        let mut out = vec![];
        let o = onu
            .execute_grant(SimTime::from_ps(1_000_000), &mut channel(), GUARD, REPORT_BYTES, &mut out)
            .unwrap();
        assert_eq!(o.sent_bytes, 0);

        // second frame arrives while the first is on the wire: cut-through
        let mut onu = Onu::new(OnuId(0), OnuKind::Mfh, SimTime::ZERO);
        onu.enqueue_frame(frame(1518, 0)).unwrap();
        onu.enqueue_frame(frame(1518, 1518 * 320)).unwrap();
        onu.deliver_gate(gate(SimTime::ZERO, 5000));
        let mut out = vec![];
        let o = onu
            .execute_grant(SimTime::ZERO, &mut channel(), GUARD, REPORT_BYTES, &mut out)
            .unwrap();
        assert_eq!(o.sent_bytes, 3036);
    }

    #[test]
    fn grant_required() {
        let mut onu = Onu::new(OnuId(4), OnuKind::Conventional, SimTime::ZERO);
        let mut out = vec![];
        assert_eq!(
            onu.execute_grant(SimTime::ZERO, &mut channel(), GUARD, REPORT_BYTES, &mut out),
            Err(PonError::NoGrant { onu: OnuId(4) })
        );
    }

    #[test]
    fn overlapping_bursts_are_detected() {
        let mut ch = channel();
        let us = SimTime::from_us;
        ch.record_burst(us(10), us(20), GUARD, SimTime::ZERO).unwrap();
        // exactly guard apart is fine
        ch.record_burst(us(20) + GUARD, us(30), GUARD, SimTime::ZERO).unwrap();
        assert!(matches!(
            ch.record_burst(us(30), us(31), GUARD, SimTime::ZERO),
            Err(PonError::OverlapDetected { .. })
        ));
        // earlier insertion colliding with a later burst
        assert!(ch.record_burst(us(5), us(10), GUARD, SimTime::ZERO).is_err());
        ch.record_burst(us(1), us(2), GUARD, SimTime::ZERO).unwrap();
    }

    #[test]
    fn reservation_moves_horizon_and_accounts_busy_time() {
        let mut ch = channel();
        let end = ch.reserve(SimTime::from_us(10), 1000, GUARD);
        assert_eq!(end, SimTime::from_us(10) + SimTime::from_ps(320_000));
        assert_eq!(ch.horizon(), end + GUARD);
        assert_eq!(ch.busy_time(), SimTime::from_ps(320_000));
        // clipped at the accounting end (1 ms)
        ch.reserve(SimTime::from_us(999), 100_000, GUARD);
        assert_eq!(ch.busy_time(), SimTime::from_ps(320_000 + 1_000_000));
    }
}
