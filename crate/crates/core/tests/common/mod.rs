//! Hand-scheduled fixture shared by the oracle and acceptance suites.
//!
//! Two MFH ONUs of one customer on a single wavelength, with scripted
//! bursts. Every grant and every frame completion is compared against a
//! schedule worked out by hand, picosecond for picosecond.
//!
//! Setup: 25G upstream, 0.624 us guard, 64 B report, 250 us cycle cap,
//! B = 99.2 Mbit/s per ONU (3100 B per cycle). ONU0 sits at 1 km (5 us),
//! ONU1 at 2 km (10 us), both behind a 100G ingress link. ONU0's DU emits
//! 4500 B at 20 us (frames 1518/1518/1464), ONU1's emits 1000 B at 30 us.
//! The run stops at 75 us.

use mfh_pon::des::SimTime;
use mfh_pon::dwba::{compute_w_max, Scheme, SchemeConfig};
use mfh_pon::pon::{LineRate, OnuId, OnuKind, REPORT_BYTES};
use mfh_pon::sim::{run, OnuParams, SimParams, Source};
use mfh_pon::traffic::MfhSource;

/// (issued, onu, start at the ONU, bytes), times in ps.
pub type GrantRow = (u64, usize, u64, u64);
/// (onu, arrival, completion at the OLT), times in ps.
pub type DeliveryRow = (usize, u64, u64);

pub fn params(scheme: Scheme) -> SimParams {
    let w_max = compute_w_max(99_200_000, SimTime::from_us(250)).unwrap();
    assert_eq!(w_max, 3100);
    let onu = |km: u64| OnuParams {
        kind: OnuKind::Mfh,
        propagation: SimTime::from_us(5 * km),
        w_max,
    };
    SimParams {
        scheme: SchemeConfig::for_scheme(scheme),
        onus: vec![onu(1), onu(2)],
        n_wavelengths: 1,
        line_rate: LineRate::GBPS_25,
        guard: SimTime::from_ps(624_000),
        report_bytes: REPORT_BYTES,
        duration: SimTime::from_us(75),
        warmup: SimTime::ZERO,
        customer: vec![OnuId(0), OnuId(1)],
        timeline: true,
    }
}

pub fn sources() -> Vec<Source> {
    vec![
        Source::Mfh(MfhSource::scripted(OnuId(0), vec![(SimTime::from_us(20), 4500)], LineRate::GBPS_100)),
        Source::Mfh(MfhSource::scripted(OnuId(1), vec![(SimTime::from_us(30), 1000)], LineRate::GBPS_100)),
    ]
}

/// Grants and deliveries produced by the simulator.
pub fn observed(scheme: Scheme) -> (Vec<GrantRow>, Vec<DeliveryRow>) {
    let out = run(params(scheme), sources(), None).unwrap();
    assert!(out.grants.iter().all(|g| g.wavelength.0 == 0));
    assert_eq!(out.generated_bytes, vec![4500, 1000]);
    let grants = out
        .grants
        .iter()
        .map(|g| (g.issued_at.as_ps(), g.onu.0, g.start.as_ps(), g.length_bytes))
        .collect();
    let deliveries = out
        .deliveries
        .iter()
        .map(|d| (d.frame.onu.0, d.frame.arrival.as_ps(), d.completion.as_ps()))
        .collect();
    (grants, deliveries)
}

/// The hand-computed schedule.
pub fn expected(scheme: Scheme) -> (Vec<GrantRow>, Vec<DeliveryRow>) {
    match scheme {
        Scheme::FirstFit => (
            vec![
                (5_000_000, 0, 10_000_000, 0),
                (10_000_000, 1, 20_000_000, 0),
                (15_020_480, 0, 25_644_480, 0),
                (30_020_480, 1, 40_020_480, 0),
                (30_664_960, 0, 45_664_960, 3100),
                (50_040_960, 1, 60_040_960, 1000),
                (51_656_960, 0, 66_005_440, 1464),
                (70_381_440, 1, 80_381_440, 0),
                (71_494_400, 0, 86_025_920, 0),
            ],
            vec![
                (0, 20_121_440, 51_150_720),
                (0, 20_242_880, 51_636_480),
                (1, 30_080_000, 70_360_960),
                (0, 20_360_000, 71_473_920),
            ],
        ),
        Scheme::FirstFitPred => (
            vec![
                (5_000_000, 0, 10_000_000, 0),
                (10_000_000, 1, 20_000_000, 0),
                (15_020_480, 0, 25_644_480, 3100),
                (30_020_480, 1, 40_020_480, 1000),
                (31_636_480, 0, 45_984_960, 1464),
                (50_360_960, 1, 60_360_960, 0),
                (51_473_920, 0, 66_005_440, 0),
                (70_381_440, 1, 80_381_440, 0),
                (71_025_920, 0, 86_025_920, 0),
            ],
            vec![
                (0, 20_121_440, 31_130_240),
                (0, 20_242_880, 31_616_000),
                (1, 30_080_000, 50_340_480),
                (0, 20_360_000, 51_453_440),
            ],
        ),
        Scheme::Proposed => (
            vec![
                (5_000_000, 0, 10_000_000, 0),
                (10_000_000, 1, 20_000_000, 0),
                (15_020_480, 0, 25_644_480, 4500),
                (30_020_480, 1, 40_020_480, 1000),
                (32_104_960, 0, 45_984_960, 0),
                (50_360_960, 1, 60_360_960, 0),
                (51_005_440, 0, 66_005_440, 0),
                (70_381_440, 1, 80_381_440, 0),
                (71_025_920, 0, 86_025_920, 0),
            ],
            vec![
                (0, 20_121_440, 31_130_240),
                (0, 20_242_880, 31_616_000),
                (0, 20_360_000, 32_084_480),
                (1, 30_080_000, 50_340_480),
            ],
        ),
        Scheme::MosIpact => (
            vec![
                (5_000_000, 0, 10_000_000, 0),
                (10_000_000, 1, 20_000_000, 0),
                (15_020_480, 0, 25_644_480, 0),
                (30_020_480, 1, 40_020_480, 0),
                (50_040_960, 1, 60_040_960, 1000),
                (50_040_960, 0, 66_005_440, 4500),
                (70_381_440, 1, 80_381_440, 0),
                (72_465_920, 0, 86_025_920, 0),
            ],
            vec![
                (1, 30_080_000, 70_360_960),
                (0, 20_121_440, 71_491_200),
                (0, 20_242_880, 71_976_960),
                (0, 20_360_000, 72_445_440),
            ],
        ),
        Scheme::MosIpactPred => (
            vec![
                (5_000_000, 0, 10_000_000, 0),
                (10_000_000, 1, 20_000_000, 0),
                (30_020_480, 1, 40_020_480, 1000),
                (30_020_480, 0, 45_984_960, 4500),
                (50_360_960, 1, 60_360_960, 0),
                (52_445_440, 0, 66_005_440, 0),
                (70_381_440, 1, 80_381_440, 0),
                (71_025_920, 0, 86_025_920, 0),
            ],
            vec![
                (1, 30_080_000, 50_340_480),
                (0, 20_121_440, 51_470_720),
                (0, 20_242_880, 51_956_480),
                (0, 20_360_000, 52_424_960),
            ],
        ),
    }
}
