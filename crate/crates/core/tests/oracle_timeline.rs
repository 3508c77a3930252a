//! Full grant/transmission timeline of the two-ONU fixture against the
//! hand-computed schedule.

mod common;

use mfh_pon::dwba::Scheme;

fn check(scheme: Scheme) {
    let (grants, deliveries) = common::observed(scheme);
    let (want_grants, want_deliveries) = common::expected(scheme);
    assert_eq!(grants, want_grants, "{scheme} grants");
    assert_eq!(deliveries, want_deliveries, "{scheme} deliveries");
}

#[test]
fn first_fit_timeline() {
    check(Scheme::FirstFit);
}

#[test]
fn first_fit_pred_timeline() {
    check(Scheme::FirstFitPred);
}

#[test]
fn proposed_timeline() {
    check(Scheme::Proposed);
}

#[test]
fn mos_ipact_timeline() {
    check(Scheme::MosIpact);
}

#[test]
fn mos_ipact_pred_timeline() {
    check(Scheme::MosIpactPred);
}
