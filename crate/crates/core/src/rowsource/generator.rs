//! Deterministic synthetic transaction data.
//!
//! Uses ChaCha8 seeded from a `u64`, whose output stream is fixed across
//! platforms, so a [`GeneratorSpec`] always yields the same store.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::store::TransactionStore;
use crate::domain::{Money, Timestamp, TransactionRecord};

pub const DEFAULT_ACCOUNT: &str = "ACC-0001";
/// 2024-01-01T00:00:00Z
pub const DEFAULT_FROM: i64 = 1_704_067_200;
/// 2024-12-31T23:59:59Z
pub const DEFAULT_TO: i64 = 1_735_689_599;

/// One in this many rows gets a description needing CSV and markup escaping.
pub const ESCAPE_TRIGGER_PERIOD: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub row_count: u64,
    pub account_id: String,
    pub date_from: Timestamp,
    pub date_to: Timestamp,
    /// Inclusive bounds in minor units.
    pub amount_range: (i64, i64),
}

impl GeneratorSpec {
    /// Defaults: account `ACC-0001`, calendar year 2024, amounts in
    /// -2500.00..=2500.00.
    pub fn new(seed: u64, row_count: u64) -> Self {
        Self {
            seed,
            row_count,
            account_id: DEFAULT_ACCOUNT.to_owned(),
            date_from: Timestamp::from_epoch(DEFAULT_FROM).unwrap(),
            date_to: Timestamp::from_epoch(DEFAULT_TO).unwrap(),
            amount_range: (-250_000, 250_000),
        }
    }
}

const MERCHANTS: &[&str] = &[
    "Blue Bottle Coffee",
    "Whole Foods Market",
    "Shell Oil 5521",
    "Amazon Marketplace",
    "City Utilities",
    "Payroll Deposit",
    "Metro Transit",
    "Corner Hardware",
    "Netflix.com",
    "Green Valley Pharmacy",
    "Airline Tickets",
    "Interest Payment",
    "Parking Garage 12",
    "Bookshop",
    "Gym Membership",
    "Insurance Premium",
];

const KINDS: &[&str] = &["POS PURCHASE", "ACH", "CARD", "ONLINE", "CHECK", "DIRECT DEP"];

// Every template carries comma, double quote, newline, ampersand and both
// angle brackets.
fn trigger_description(variant: u32, n: u32) -> String {
    match variant {
        0 => format!("Refund, \"Smith & Sons\" <order {n}>\nthank you"),
        1 => format!("Wire <intl> fee, ref \"{n}\" & FX\nadj"),
        _ => format!("Transfer to \"Savings & Loan\", memo <{n}>\nmonthly"),
    }
}

/// Builds an in-memory store of exactly `spec.row_count` rows.
pub fn generate(spec: &GeneratorSpec) -> TransactionStore {
    assert!(spec.date_from <= spec.date_to, "date_from must not be after date_to");
    assert!(spec.amount_range.0 <= spec.amount_range.1, "empty amount range");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let from = spec.date_from.epoch_seconds();
    let to = spec.date_to.epoch_seconds();
    let (lo, hi) = spec.amount_range;

    let rows: Vec<TransactionRecord> = (0..spec.row_count)
        .map(|i| {
            let posted = rng.gen_range(from..=to);
            let amount = rng.gen_range(lo..=hi);
            let description = if i % ESCAPE_TRIGGER_PERIOD == 0 {
                trigger_description(rng.gen_range(0..3), rng.gen_range(0..100_000))
            } else {
                let kind = KINDS[rng.gen_range(0..KINDS.len() as u32) as usize];
                let merchant = MERCHANTS[rng.gen_range(0..MERCHANTS.len() as u32) as usize];
                format!("{kind} {merchant} {:04}", rng.gen_range(0..10_000))
            };
            TransactionRecord::new(
                format!("TX{i:010}"),
                spec.account_id.clone(),
                Timestamp::from_epoch(posted).expect("within spec range"),
                Money::from_minor(amount),
                description,
            )
            .expect("generated rows satisfy record rules")
        })
        .collect();
    TransactionStore::from_rows(rows).expect("generated txn ids are unique")
}
