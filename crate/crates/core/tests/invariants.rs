//! Whole-run properties of the engine at desk scale.

use mfh_pon::config::RunConfig;
use mfh_pon::des::SimTime;
use mfh_pon::dwba::Scheme;
use mfh_pon::harness::build_replication;
use mfh_pon::pon::LineRate;
use mfh_pon::sim::{run, RunOutput};

fn timeline(scheme: Scheme, prediction_error: f64, seed: u64) -> RunOutput {
    let cfg = RunConfig {
        scheme,
        prediction_error,
        base_seed: seed,
        sim_duration: SimTime::from_secs_f64(0.05),
        ..RunConfig::default()
    };
    let derived = cfg.derive().unwrap();
    let (params, sources) = build_replication(&cfg, &derived, 0, true).unwrap();
    run(params, sources, None).unwrap()
}

fn grants(out: &RunOutput) -> Vec<(u64, usize, usize, u64, u64)> {
    out.grants
        .iter()
        .map(|g| (g.issued_at.as_ps(), g.onu.0, g.wavelength.0, g.start.as_ps(), g.length_bytes))
        .collect()
}

#[test]
fn prediction_with_full_negative_error_is_first_fit() {
    for seed in [1, 99] {
        let ff = timeline(Scheme::FirstFit, 0.0, seed);
        let pred = timeline(Scheme::FirstFitPred, -1.0, seed);
        assert!(!ff.grants.is_empty());
        assert_eq!(grants(&ff), grants(&pred), "seed {seed}");
    }
}

#[test]
fn bursts_never_overlap_at_the_olt() {
    let cfg = RunConfig::default();
    let derived = cfg.derive().unwrap();
    let rate = LineRate(cfg.line_rate_bps);
    for scheme in Scheme::ALL {
        let out = timeline(scheme, 0.0, 3);
        for wl in 0..cfg.n_wavelengths {
            let mut windows: Vec<(SimTime, SimTime)> = out
                .grants
                .iter()
                .filter(|g| g.wavelength.0 == wl)
                .map(|g| {
                    let at_olt = g.start + derived.propagation[g.onu.0];
                    (at_olt, at_olt + rate.tx_time(g.length_bytes + cfg.report_bytes))
                })
                .collect();
            assert!(windows.len() > 100, "{scheme} wl{wl}");
            windows.sort();
            for w in windows.windows(2) {
                assert!(w[1].0 >= w[0].1 + cfg.guard_time, "{scheme} wl{wl}: {:?} then {:?}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn byte_conservation_per_onu() {
    let out = timeline(Scheme::MosIpactPred, 0.0, 5);
    for (onu, (gen, del)) in out.generated_bytes.iter().zip(&out.delivered_bytes).enumerate() {
        assert!(del <= gen, "onu{onu}: delivered {del} > generated {gen}");
    }
    let delivered: u64 = out.deliveries.iter().map(|d| d.frame.size as u64).sum();
    assert_eq!(delivered, out.delivered_bytes.iter().sum::<u64>());
}
