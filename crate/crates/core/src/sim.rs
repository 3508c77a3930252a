//! One replication: ONUs, OLT and traffic sources wired onto the event queue.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::des::{DesError, Event, Handler, Scheduler, SimTime};
use crate::dwba::{
    first_fit_assign, first_fit_probe, mos_ipact_batch, predict_request, size_grant, BatchEntry, CustomerGroup,
    CustomerId, DwbaError, SchemeConfig, SharingMode,
};
use crate::metrics::{ChannelUsage, DelayClass, DelayStats};
use crate::pon::{
    Delivery, Frame, GateMsg, LineRate, Onu, OnuId, OnuKind, PonError, ReportMsg, WavelengthChannel, WavelengthId,
};
use crate::traffic::{ConventionalSource, MfhSource, TrafficError, WsiSource};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Des(#[from] DesError),
    #[error(transparent)]
    Pon(#[from] PonError),
    #[error(transparent)]
    Dwba(#[from] DwbaError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("byte conservation broken at {onu}: {detail}")]
    Conservation { onu: OnuId, detail: String },
    #[error("setup: {0}")]
    Setup(String),
    #[error("trace: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PonEvent {
    FrameArrival { onu: OnuId },
    BurstEmission { onu: OnuId },
    ReportArrivalAtOlt(ReportMsg),
    GateArrivalAtOnu(GateMsg),
    TransmissionStart { onu: OnuId },
    /// Last payload bit sent; the piggybacked report is generated here.
    TransmissionEnd { onu: OnuId },
    SimEnd,
}

impl fmt::Display for PonEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PonEvent::FrameArrival { onu } => write!(f, "FrameArrival {onu}"),
            PonEvent::BurstEmission { onu } => write!(f, "BurstEmission {onu}"),
            PonEvent::ReportArrivalAtOlt(r) => write!(f, "ReportArrivalAtOlt {} queue={} gen={}", r.onu, r.queue_bytes, r.gen_time.as_ps()),
            PonEvent::GateArrivalAtOnu(g) => write!(
                f,
                "GateArrivalAtOnu {} wl={} start={} len={} cycle={}",
                g.onu,
                g.wavelength.0,
                g.start_time.as_ps(),
                g.length_bytes,
                g.cycle_tag
            ),
            PonEvent::TransmissionStart { onu } => write!(f, "TransmissionStart {onu}"),
            PonEvent::TransmissionEnd { onu } => write!(f, "TransmissionEnd {onu}"),
            PonEvent::SimEnd => f.write_str("SimEnd"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnuParams {
    pub kind: OnuKind,
    pub propagation: SimTime,
    pub w_max: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub scheme: SchemeConfig,
    pub onus: Vec<OnuParams>,
    pub n_wavelengths: usize,
    pub line_rate: LineRate,
    pub guard: SimTime,
    pub report_bytes: u64,
    pub duration: SimTime,
    pub warmup: SimTime,
    /// Members of the multi-ONU customer (the MFH ONUs).
    pub customer: Vec<OnuId>,
    /// Keep the full grant and delivery timeline.
    pub timeline: bool,
}

pub enum Source {
    Mfh(MfhSource),
    Conventional(ConventionalSource),
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantRecord {
    pub issued_at: SimTime,
    pub onu: OnuId,
    pub wavelength: WavelengthId,
    /// Start in the ONU's time frame.
    pub start: SimTime,
    pub length_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stats: DelayStats,
    pub channels: Vec<ChannelUsage>,
    pub grants: Vec<GrantRecord>,
    pub deliveries: Vec<Delivery>,
    pub events: u64,
    pub generated_bytes: Vec<u64>,
    pub delivered_bytes: Vec<u64>,
    pub customer_cycles: u64,
}

#[derive(Default)]
struct OfflineCycle {
    entries: BTreeMap<OnuId, BatchEntry>,
    held: BTreeMap<OnuId, ReportMsg>,
    deferred: VecDeque<ReportMsg>,
    cycles: u64,
}

struct SourcesWsi<'a>(&'a mut [Source]);

impl WsiSource for SourcesWsi<'_> {
    fn wsi_lookup(&mut self, onu: OnuId, from: SimTime, to: SimTime) -> Result<u64, TrafficError> {
        match self.0.get_mut(onu.0) {
            Some(Source::Mfh(src)) => {
                src.extend_to(to);
                src.prune_before(from);
                src.lookup(from, to)
            }
            _ => Ok(0),
        }
    }
}

struct World {
    p: SimParams,
    onus: Vec<Onu>,
    sources: Vec<Source>,
    next_frame: Vec<Option<Frame>>,
    channels: Vec<WavelengthChannel>,
    group: Option<CustomerGroup>,
    offline: OfflineCycle,
    grant_count: Vec<u64>,
    stats: DelayStats,
    grants: Vec<GrantRecord>,
    deliveries: Vec<Delivery>,
    scratch: Vec<Delivery>,
    delivered: Vec<u64>,
}

impl World {
    fn tx(&self, bytes: u64) -> SimTime {
        self.p.line_rate.tx_time(bytes)
    }

    fn class(&self, onu: OnuId) -> DelayClass {
        match self.onus[onu.0].kind {
            OnuKind::Mfh => DelayClass::Mfh(onu),
            OnuKind::Conventional => DelayClass::Conventional,
        }
    }

    fn is_member(&self, onu: OnuId) -> bool {
        self.p.customer.contains(&onu)
    }

    /// Earliest ONU-frame start honouring gate delivery and the ONU's
    /// previous window, and the OLT-frame start First-Fit would pick.
    fn tentative(&self, onu: OnuId, now: SimTime) -> (SimTime, SimTime) {
        let o = &self.onus[onu.0];
        let earliest = (now + o.propagation).max(o.busy_until);
        let (_, start_olt) = first_fit_probe(&self.channels, earliest + o.propagation);
        (earliest, start_olt - o.propagation)
    }

    fn request(&mut self, report: &ReportMsg, start: SimTime) -> Result<u64, SimError> {
        let kind = self.onus[report.onu.0].kind;
        if self.p.scheme.prediction && kind == OnuKind::Mfh {
            let mut wsi = SourcesWsi(&mut self.sources);
            Ok(predict_request(report, kind, start, self.p.scheme.prediction_error, &mut wsi)?)
        } else {
            Ok(report.queue_bytes)
        }
    }

    fn issue(&mut self, sched: &mut Scheduler<PonEvent>, onu: OnuId, length: u64) -> Result<(), SimError> {
        let now = sched.now();
        let (earliest, _) = self.tentative(onu, now);
        let prop = self.onus[onu.0].propagation;
        let (wl, start_olt) = first_fit_assign(
            &mut self.channels,
            length,
            earliest + prop,
            self.p.report_bytes,
            self.p.guard,
        );
        let start = start_olt - prop;
        self.onus[onu.0].busy_until = start + self.tx(length + self.p.report_bytes);
        let cycle_tag = self.grant_count[onu.0];
        self.grant_count[onu.0] += 1;
        let gate = GateMsg {
            onu,
            wavelength: wl,
            start_time: start,
            length_bytes: length,
            cycle_tag,
        };
        sched.schedule(now + prop, PonEvent::GateArrivalAtOnu(gate))?;
        sched.schedule(start, PonEvent::TransmissionStart { onu })?;
        if self.p.timeline {
            self.grants.push(GrantRecord {
                issued_at: now,
                onu,
                wavelength: wl,
                start,
                length_bytes: length,
            });
        }
        Ok(())
    }

    fn on_report(&mut self, sched: &mut Scheduler<PonEvent>, report: ReportMsg) -> Result<(), SimError> {
        let onu = report.onu;
        let w_max = self.p.onus[onu.0].w_max;
        let member = self.is_member(onu);
        match self.p.scheme.sharing {
            SharingMode::Offline if member => self.on_offline_report(sched, report),
            SharingMode::Online if member => {
                let (_, start) = self.tentative(onu, sched.now());
                let request = self.request(&report, start)?;
                let group = self.group.as_mut().expect("online sharing has a group");
                let grant = group.proposed_grant(onu, request, w_max)?;
                if group.at_boundary() {
                    group.cycle_rollover()?;
                }
                self.issue(sched, onu, grant)
            }
            _ => {
                let (_, start) = self.tentative(onu, sched.now());
                let request = self.request(&report, start)?;
                let grant = size_grant(self.p.scheme.sizing, request, w_max);
                self.issue(sched, onu, grant)
            }
        }
    }

    fn on_offline_report(&mut self, sched: &mut Scheduler<PonEvent>, report: ReportMsg) -> Result<(), SimError> {
        let onu = report.onu;
        if self.offline.entries.contains_key(&onu) {
            self.offline.deferred.push_back(report);
            return Ok(());
        }
        let w_max = self.p.onus[onu.0].w_max;
        let (_, start) = self.tentative(onu, sched.now());
        let request = self.request(&report, start)?;
        self.offline.entries.insert(onu, BatchEntry { onu, request, w_max });
        if request <= w_max {
            self.issue(sched, onu, size_grant(self.p.scheme.sizing, request, w_max))?;
        } else {
            self.offline.held.insert(onu, report);
        }
        if self.offline.entries.len() == self.p.customer.len() {
            self.release_offline(sched)?;
        }
        Ok(())
    }

    /// Every member has reported: size and issue the held grants, then start
    /// the next cycle with any deferred reports.
    fn release_offline(&mut self, sched: &mut Scheduler<PonEvent>) -> Result<(), SimError> {
        let held = std::mem::take(&mut self.offline.held);
        for (onu, report) in held {
            let (_, start) = self.tentative(onu, sched.now());
            let request = self.request(&report, start)?;
            self.offline.entries.get_mut(&onu).expect("held member reported").request = request;
            let entries: Vec<BatchEntry> = self.offline.entries.values().copied().collect();
            let grant = mos_ipact_batch(&entries)
                .into_iter()
                .find(|(o, _)| *o == onu)
                .map(|(_, g)| g)
                .expect("member in batch");
            self.issue(sched, onu, grant)?;
        }
        self.offline.entries.clear();
        self.offline.cycles += 1;
        let deferred: Vec<ReportMsg> = self.offline.deferred.drain(..).collect();
        for r in deferred {
            self.on_offline_report(sched, r)?;
        }
        Ok(())
    }

    fn on_transmission_start(&mut self, sched: &mut Scheduler<PonEvent>, onu: OnuId) -> Result<(), SimError> {
        let now = sched.now();
        let wl = self.onus[onu.0]
            .pending_grant()
            .ok_or(PonError::NoGrant { onu })?
            .wavelength;
        self.scratch.clear();
        let outcome = self.onus[onu.0].execute_grant(
            now,
            &mut self.channels[wl.0],
            self.p.guard,
            self.p.report_bytes,
            &mut self.scratch,
        )?;
        let class = self.class(onu);
        for d in &self.scratch {
            self.stats.record_delay(class, d.frame.arrival, d.completion, d.frame.size);
        }
        if self.p.timeline {
            self.deliveries.extend_from_slice(&self.scratch);
        }
        self.stats.record_grant(outcome.gate.length_bytes, outcome.sent_bytes);
        self.delivered[onu.0] += outcome.sent_bytes;
        sched.schedule(outcome.report_time, PonEvent::TransmissionEnd { onu })?;
        Ok(())
    }

    fn on_transmission_end(&mut self, sched: &mut Scheduler<PonEvent>, onu: OnuId) -> Result<(), SimError> {
        let now = sched.now();
        let report = self.onus[onu.0].generate_report(now);
        let arrival = now + self.tx(self.p.report_bytes) + self.onus[onu.0].propagation;
        sched.schedule(arrival, PonEvent::ReportArrivalAtOlt(report))?;
        Ok(())
    }

    fn on_frame_arrival(&mut self, sched: &mut Scheduler<PonEvent>, onu: OnuId) -> Result<(), SimError> {
        let frame = self.next_frame[onu.0].take().expect("arrival scheduled with a frame");
        self.onus[onu.0].enqueue_frame(frame)?;
        self.schedule_next_frame(sched, onu)
    }

    fn schedule_next_frame(&mut self, sched: &mut Scheduler<PonEvent>, onu: OnuId) -> Result<(), SimError> {
        if let Source::Conventional(src) = &mut self.sources[onu.0] {
            if let Some(f) = src.next_frame() {
                if f.arrival <= self.p.duration {
                    sched.schedule(f.arrival, PonEvent::FrameArrival { onu })?;
                    self.next_frame[onu.0] = Some(f);
                }
            }
        }
        Ok(())
    }

    fn on_burst(&mut self, sched: &mut Scheduler<PonEvent>, onu: OnuId) -> Result<(), SimError> {
        let now = sched.now();
        if let Source::Mfh(src) = &mut self.sources[onu.0] {
            for f in src.emit(now) {
                self.onus[onu.0].enqueue_frame(f)?;
            }
        }
        self.schedule_next_burst(sched, onu)
    }

    fn schedule_next_burst(&mut self, sched: &mut Scheduler<PonEvent>, onu: OnuId) -> Result<(), SimError> {
        if let Source::Mfh(src) = &mut self.sources[onu.0] {
            if let Some(t) = src.next_emission() {
                if t <= self.p.duration {
                    sched.schedule(t, PonEvent::BurstEmission { onu })?;
                }
            }
        }
        Ok(())
    }

    fn check_conservation(&self) -> Result<(), SimError> {
        for (i, o) in self.onus.iter().enumerate() {
            let onu = OnuId(i);
            if o.enqueued_bytes() != self.delivered[i] + o.backlog() {
                return Err(SimError::Conservation {
                    onu,
                    detail: format!(
                        "enqueued {} != delivered {} + queued {}",
                        o.enqueued_bytes(),
                        self.delivered[i],
                        o.backlog()
                    ),
                });
            }
            if let Source::Mfh(src) = &self.sources[i] {
                if src.emitted_bytes() != o.enqueued_bytes() {
                    return Err(SimError::Conservation {
                        onu,
                        detail: format!("emitted {} != enqueued {}", src.emitted_bytes(), o.enqueued_bytes()),
                    });
                }
            }
        }
        Ok(())
    }
}

impl Handler<PonEvent> for World {
    type Error = SimError;

    fn handle(&mut self, sched: &mut Scheduler<PonEvent>, ev: Event<PonEvent>) -> Result<(), SimError> {
        match ev.kind {
            PonEvent::FrameArrival { onu } => self.on_frame_arrival(sched, onu),
            PonEvent::BurstEmission { onu } => self.on_burst(sched, onu),
            PonEvent::ReportArrivalAtOlt(r) => self.on_report(sched, r),
            PonEvent::GateArrivalAtOnu(g) => {
                self.onus[g.onu.0].deliver_gate(g);
                Ok(())
            }
            PonEvent::TransmissionStart { onu } => self.on_transmission_start(sched, onu),
            PonEvent::TransmissionEnd { onu } => self.on_transmission_end(sched, onu),
            PonEvent::SimEnd => Ok(()),
        }
    }
}

/// Runs one replication to `params.duration`, optionally tracing every
/// dispatched event to `trace`.
pub fn run(params: SimParams, sources: Vec<Source>, trace: Option<Box<dyn Write + Send>>) -> Result<RunOutput, SimError> {
    params
        .scheme
        .validate()
        .map_err(|e| SimError::Setup(e.to_string()))?;
    let n = params.onus.len();
    if sources.len() != n {
        return Err(SimError::Setup(format!("{} sources for {n} ONUs", sources.len())));
    }
    if params.n_wavelengths == 0 {
        return Err(SimError::Setup("no wavelength channels".into()));
    }
    if params.customer.iter().any(|o| o.0 >= n || params.onus[o.0].kind != OnuKind::Mfh) {
        return Err(SimError::Setup("customer members must be MFH ONUs".into()));
    }

    let mut stats = DelayStats::new(params.warmup);
    let onus: Vec<Onu> = params
        .onus
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if o.kind == OnuKind::Mfh {
                stats.register(DelayClass::Mfh(OnuId(i)));
            } else {
                stats.register(DelayClass::Conventional);
            }
            Onu::new(OnuId(i), o.kind, o.propagation)
        })
        .collect();
    let channels = (0..params.n_wavelengths)
        .map(|i| WavelengthChannel::new(WavelengthId(i), params.line_rate, params.duration))
        .collect();
    let group = (params.scheme.sharing == SharingMode::Online && !params.customer.is_empty())
        .then(|| CustomerGroup::new(CustomerId(0), params.customer.iter().copied()));
    let sharing = params.scheme.sharing;
    let mut world = World {
        onus,
        sources,
        next_frame: vec![None; n],
        channels,
        group,
        offline: OfflineCycle::default(),
        grant_count: vec![0; n],
        stats,
        grants: Vec::new(),
        deliveries: Vec::new(),
        scratch: Vec::new(),
        delivered: vec![0; n],
        p: params,
    };
    if sharing == SharingMode::Offline && world.p.customer.is_empty() {
        world.p.scheme.sharing = SharingMode::None;
    }

    let mut sched = Scheduler::new();
    if let Some(t) = trace {
        sched.set_trace(t);
    }
    // registration: every ONU announces an empty queue at t = 0
    for i in 0..n {
        let onu = OnuId(i);
        let report = world.onus[i].generate_report(SimTime::ZERO);
        sched.schedule(world.onus[i].propagation, PonEvent::ReportArrivalAtOlt(report))?;
        world.schedule_next_frame(&mut sched, onu)?;
        world.schedule_next_burst(&mut sched, onu)?;
    }
    sched.schedule(world.p.duration, PonEvent::SimEnd)?;
    let events = sched.run_until(world.p.duration, &mut world)?;
    sched.finish_trace()?;
    world.check_conservation()?;

    let generated_bytes = world.onus.iter().map(Onu::enqueued_bytes).collect();
    let channels = world
        .channels
        .iter()
        .map(|c| ChannelUsage {
            busy: c.busy_time(),
            total: world.p.duration,
            delivered_bytes: c.delivered_bytes(),
        })
        .collect();
    let customer_cycles = match &world.group {
        Some(g) => g.cycle_index,
        None => world.offline.cycles,
    };
    Ok(RunOutput {
        stats: world.stats,
        channels,
        grants: world.grants,
        deliveries: world.deliveries,
        events,
        generated_bytes,
        delivered_bytes: world.delivered,
        customer_cycles,
    })
}
