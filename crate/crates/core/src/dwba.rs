//! OLT-side grant sizing, traffic prediction, excess-bandwidth sharing and
//! First-Fit wavelength assignment.
//!
//! Everything here is a pure transformation of OLT-owned state; the event
//! wiring lives in [`crate::sim`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::{SimTime, PS_PER_SEC};
use crate::pon::{OnuId, OnuKind, ReportMsg, WavelengthChannel, WavelengthId};
use crate::traffic::{TrafficError, WsiSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DwbaError {
    #[error("invalid SLA: guaranteed rate {bps} bit/s, max cycle {t_max}")]
    InvalidSla { bps: u64, t_max: SimTime },
    #[error("no traffic prediction available for conventional {onu}")]
    PredictionUnavailable { onu: OnuId },
    #[error("{onu} is not a member of customer {customer}")]
    NotAMember { onu: OnuId, customer: u32 },
    #[error("cycle rollover for customer {customer} before every member was served")]
    PrematureRollover { customer: u32 },
    #[error("customer {customer} cycle {cycle}: granted {granted} B > w_max sum {w_max_sum} B + carried excess {carried} B")]
    SharingViolated {
        customer: u32,
        cycle: u64,
        granted: u64,
        w_max_sum: u64,
        carried: u64,
    },
    #[error("scheme {scheme} requires {requirement}")]
    InconsistentScheme {
        scheme: Scheme,
        requirement: &'static str,
    },
    #[error(transparent)]
    Wsi(#[from] TrafficError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    FirstFit,
    FirstFitPred,
    MosIpact,
    MosIpactPred,
    Proposed,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::FirstFit,
        Scheme::FirstFitPred,
        Scheme::MosIpact,
        Scheme::MosIpactPred,
        Scheme::Proposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::FirstFit => "first-fit",
            Scheme::FirstFitPred => "first-fit-pred",
            Scheme::MosIpact => "mos-ipact",
            Scheme::MosIpactPred => "mos-ipact-pred",
            Scheme::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sizing {
    Fixed,
    Limited,
    Gated,
}

impl fmt::Display for Sizing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sizing::Fixed => "fixed",
            Sizing::Limited => "limited",
            Sizing::Gated => "gated",
        })
    }
}

impl FromStr for Sizing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(Sizing::Fixed),
            "limited" => Ok(Sizing::Limited),
            "gated" => Ok(Sizing::Gated),
            _ => Err(format!("unknown sizing `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingMode {
    None,
    Offline,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub prediction: bool,
    pub sharing: SharingMode,
    pub sizing: Sizing,
    /// Multiplies the predicted increment by `1 + prediction_error`.
    pub prediction_error: f64,
}

impl SchemeConfig {
    pub fn for_scheme(scheme: Scheme) -> Self {
        let (prediction, sharing) = match scheme {
            Scheme::FirstFit => (false, SharingMode::None),
            Scheme::FirstFitPred => (true, SharingMode::None),
            Scheme::MosIpact => (false, SharingMode::Offline),
            Scheme::MosIpactPred => (true, SharingMode::Offline),
            Scheme::Proposed => (true, SharingMode::Online),
        };
        SchemeConfig {
            scheme,
            prediction,
            sharing,
            sizing: Sizing::Limited,
            prediction_error: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DwbaError> {
        let fail = |requirement| {
            Err(DwbaError::InconsistentScheme {
                scheme: self.scheme,
                requirement,
            })
        };
        match self.scheme {
            Scheme::Proposed => {
                if !self.prediction || self.sharing != SharingMode::Online || self.sizing != Sizing::Limited {
                    return fail("prediction, online sharing and limited sizing");
                }
            }
            Scheme::FirstFit | Scheme::FirstFitPred => {
                if self.sharing != SharingMode::None {
                    return fail("no bandwidth sharing");
                }
            }
            Scheme::MosIpact | Scheme::MosIpactPred => {}
        }
        if !(self.prediction_error.is_finite() && self.prediction_error >= -1.0) {
            return fail("prediction error >= -1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CustomerId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlaProfile {
    pub guaranteed_bps: u64,
    pub w_max_bytes: u64,
    pub customer: Option<CustomerId>,
}

impl SlaProfile {
    pub fn new(guaranteed_bps: u64, t_max: SimTime, customer: Option<CustomerId>) -> Result<Self, DwbaError> {
        let w_max_bytes = compute_w_max(guaranteed_bps, t_max)?;
        if w_max_bytes == 0 {
            return Err(DwbaError::InvalidSla { bps: guaranteed_bps, t_max });
        }
        Ok(SlaProfile {
            guaranteed_bps,
            w_max_bytes,
            customer,
        })
    }
}

/// Per-cycle byte cap: `floor(B * T_max / 8)`.
pub fn compute_w_max(guaranteed_bps: u64, t_max: SimTime) -> Result<u64, DwbaError> {
    if guaranteed_bps == 0 || t_max == SimTime::ZERO {
        return Err(DwbaError::InvalidSla {
            bps: guaranteed_bps,
            t_max,
        });
    }
    let bits = guaranteed_bps as u128 * t_max.as_ps() as u128;
    Ok((bits / (8 * PS_PER_SEC as u128)) as u64)
}

pub fn size_grant_limited(request: u64, w_max: u64) -> u64 {
    request.min(w_max)
}

pub fn size_grant_gated(request: u64) -> u64 {
    request
}

pub fn size_grant_fixed(w_max: u64) -> u64 {
    w_max
}

pub fn size_grant(sizing: Sizing, request: u64, w_max: u64) -> u64 {
    match sizing {
        Sizing::Fixed => size_grant_fixed(w_max),
        Sizing::Limited => size_grant_limited(request, w_max),
        Sizing::Gated => size_grant_gated(request),
    }
}

/// Report backlog plus the MFH bytes the DU will emit in
/// `(report.gen_time, grant_start]`, scaled by `1 + error`.
pub fn predict_request(
    report: &ReportMsg,
    kind: OnuKind,
    grant_start: SimTime,
    error: f64,
    wsi: &mut dyn WsiSource,
) -> Result<u64, DwbaError> {
    if kind != OnuKind::Mfh {
        return Err(DwbaError::PredictionUnavailable { onu: report.onu });
    }
    let exact = if grant_start > report.gen_time {
        wsi.wsi_lookup(report.onu, report.gen_time, grant_start)?
    } else {
        0
    };
    let increment = if error == 0.0 {
        exact
    } else {
        (exact as f64 * (1.0 + error)).max(0.0).floor() as u64
    };
    Ok(report.queue_bytes + increment)
}

/// Multi-ONU customer state for online excess compensation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomerGroup {
    pub id: CustomerId,
    members: BTreeSet<OnuId>,
    pub excess_prev: u64,
    pub excess_curr: u64,
    served: BTreeSet<OnuId>,
    pub cycle_index: u64,
    prev_at_cycle_start: u64,
    cycle_granted: u64,
    cycle_w_max: u64,
}

impl CustomerGroup {
    pub fn new(id: CustomerId, members: impl IntoIterator<Item = OnuId>) -> Self {
        CustomerGroup {
            id,
            members: members.into_iter().collect(),
            excess_prev: 0,
            excess_curr: 0,
            served: BTreeSet::new(),
            cycle_index: 0,
            prev_at_cycle_start: 0,
            cycle_granted: 0,
            cycle_w_max: 0,
        }
    }

    /// Sets both pools, e.g. for replaying a known state.
    pub fn with_pools(mut self, prev: u64, curr: u64) -> Self {
        self.excess_prev = prev;
        self.excess_curr = curr;
        self.prev_at_cycle_start = prev;
        self
    }

    pub fn members(&self) -> &BTreeSet<OnuId> {
        &self.members
    }

    pub fn served(&self) -> &BTreeSet<OnuId> {
        &self.served
    }

    pub fn contains(&self, onu: OnuId) -> bool {
        self.members.contains(&onu)
    }

    pub fn at_boundary(&self) -> bool {
        !self.members.is_empty() && self.served.len() == self.members.len()
    }

    /// Limited sizing plus compensation from the excess pools.
    ///
    /// Underloaded: grant the request and, on the member's first service this
    /// cycle, bank `w_max - request`. Overloaded: grant `w_max` and cover the
    /// deficit from `excess_prev` first, then `excess_curr`.
    pub fn proposed_grant(&mut self, onu: OnuId, request: u64, w_max: u64) -> Result<u64, DwbaError> {
        if !self.members.contains(&onu) {
            return Err(DwbaError::NotAMember {
                onu,
                customer: self.id.0,
            });
        }
        let first_service = self.served.insert(onu);
        let grant = if request <= w_max {
            if first_service {
                self.excess_curr += w_max - request;
            }
            request
        } else {
            let deficit = request - w_max;
            let from_prev = deficit.min(self.excess_prev);
            self.excess_prev -= from_prev;
            let from_curr = (deficit - from_prev).min(self.excess_curr);
            self.excess_curr -= from_curr;
            w_max + from_prev + from_curr
        };
        self.cycle_granted += grant;
        self.cycle_w_max += w_max;
        Ok(grant)
    }

    /// Carries the current cycle's excess forward and discards the previous one.
    pub fn cycle_rollover(&mut self) -> Result<(), DwbaError> {
        if !self.at_boundary() {
            return Err(DwbaError::PrematureRollover { customer: self.id.0 });
        }
        if self.cycle_granted > self.cycle_w_max + self.prev_at_cycle_start {
            return Err(DwbaError::SharingViolated {
                customer: self.id.0,
                cycle: self.cycle_index,
                granted: self.cycle_granted,
                w_max_sum: self.cycle_w_max,
                carried: self.prev_at_cycle_start,
            });
        }
        self.excess_prev = self.excess_curr;
        self.excess_curr = 0;
        self.served.clear();
        self.cycle_index += 1;
        self.prev_at_cycle_start = self.excess_prev;
        self.cycle_granted = 0;
        self.cycle_w_max = 0;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchEntry {
    pub onu: OnuId,
    pub request: u64,
    pub w_max: u64,
}

/// Offline sharing over one full cycle of reports.
///
/// The pool is the summed slack of underloaded members; overloaded members
/// draw from it in ascending id order, each up to its own deficit. Output is
/// in ascending id order.
pub fn mos_ipact_batch(entries: &[BatchEntry]) -> Vec<(OnuId, u64)> {
    let mut sorted: Vec<BatchEntry> = entries.to_vec();
    sorted.sort_by_key(|e| e.onu);
    let mut pool: u64 = sorted
        .iter()
        .map(|e| e.w_max.saturating_sub(e.request))
        .sum();
    sorted
        .iter()
        .map(|e| {
            if e.request <= e.w_max {
                (e.onu, e.request)
            } else {
                let share = (e.request - e.w_max).min(pool);
                pool -= share;
                (e.onu, e.w_max + share)
            }
        })
        .collect()
}

/// Where First-Fit would place a burst that may not begin arriving at the
/// OLT before `earliest`: the channel with the smallest feasible start,
/// lowest id on ties. Does not reserve anything.
pub fn first_fit_probe(channels: &[WavelengthChannel], earliest: SimTime) -> (WavelengthId, SimTime) {
    let mut best: Option<(WavelengthId, SimTime)> = None;
    for ch in channels {
        let start = earliest.max(ch.horizon());
        if best.is_none_or(|(_, s)| start < s) {
            best = Some((ch.id, start));
        }
    }
    best.expect("at least one wavelength channel")
}

/// [`first_fit_probe`] plus reservation of `burst_bytes + report_bytes` and
/// the trailing guard time on the chosen channel.
pub fn first_fit_assign(
    channels: &mut [WavelengthChannel],
    burst_bytes: u64,
    earliest: SimTime,
    report_bytes: u64,
    guard: SimTime,
) -> (WavelengthId, SimTime) {
    let (wl, start) = first_fit_probe(channels, earliest);
    channels[wl.0].reserve(start, burst_bytes + report_bytes, guard);
    (wl, start)
}
