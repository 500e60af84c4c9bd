#![allow(dead_code)]

use std::path::PathBuf;

use churn_core::ingest::*;
use proptest::prelude::*;
use proptest::sample::select;

pub fn canonical_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/Telco-Customer-Churn.csv")
}

pub fn canonical() -> RawDataset {
    load_dataset(canonical_path()).expect("canonical dataset loads")
}

fn cents(max: u32) -> impl Strategy<Value = f64> {
    (0..=max).prop_map(|c| f64::from(c) / 100.0)
}

/// Records whose categorical cells are drawn from the closed domains.
pub fn record() -> impl Strategy<Value = RawCustomerRecord> {
    let people = (
        "[0-9]{4}-[A-Z]{5}",
        select(Gender::ALL),
        any::<bool>(),
        select(YesNo::ALL),
        select(YesNo::ALL),
        0u32..=72,
        select(YesNo::ALL),
        select(PhoneAddOn::ALL),
        select(InternetService::ALL),
    );
    let addons = (
        select(InternetAddOn::ALL),
        select(InternetAddOn::ALL),
        select(InternetAddOn::ALL),
        select(InternetAddOn::ALL),
        select(InternetAddOn::ALL),
        select(InternetAddOn::ALL),
    );
    let billing = (
        select(Contract::ALL),
        select(YesNo::ALL),
        select(PaymentMethod::ALL),
        cents(12_000).prop_map(|c| c + 18.0),
        prop::option::weighted(0.9, cents(900_000)),
        select(YesNo::ALL),
    );
    (people, addons, billing).prop_map(|(p, a, b)| RawCustomerRecord {
        customer_id: p.0,
        gender: p.1,
        senior_citizen: p.2,
        partner: p.3,
        dependents: p.4,
        tenure: p.5,
        phone_service: p.6,
        multiple_lines: p.7,
        internet_service: p.8,
        online_security: a.0,
        online_backup: a.1,
        device_protection: a.2,
        tech_support: a.3,
        streaming_tv: a.4,
        streaming_movies: a.5,
        contract: b.0,
        paperless_billing: b.1,
        payment_method: b.2,
        monthly_charges: b.3,
        total_charges: b.4,
        churn: b.5,
    })
}

/// Datasets with both churn classes present.
pub fn dataset(min: usize, max: usize) -> impl Strategy<Value = Vec<RawCustomerRecord>> {
    prop::collection::vec(record(), min..=max).prop_map(|mut rs| {
        rs[0].churn = YesNo::Yes;
        rs[1].churn = YesNo::No;
        rs
    })
}
