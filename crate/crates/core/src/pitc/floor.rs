//! Process-wide tally of posterior marginal variances checked against the
//! noise variance of their type. A PITC posterior variance never drops below
//! it; the counters let long runs confirm that after the fact.

use std::sync::atomic::{AtomicU64, Ordering};

/// Slack allowed for rounding.
pub const FLOOR_TOLERANCE: f64 = 1e-10;

static CHECKED: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);
static WORST_BITS: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloorStats {
    pub checked: u64,
    pub violations: u64,
    /// Largest `noise_var - variance` seen, 0 when always above.
    pub worst_shortfall: f64,
}

pub(crate) fn record(variance: f64, noise_var: f64) {
    CHECKED.fetch_add(1, Ordering::Relaxed);
    let shortfall = noise_var - variance;
    if shortfall > 0.0 {
        // non-negative doubles order like their bit patterns
        WORST_BITS.fetch_max(shortfall.to_bits(), Ordering::Relaxed);
    }
    if !(variance >= noise_var - FLOOR_TOLERANCE) {
        VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
}

pub fn stats() -> FloorStats {
    FloorStats {
        checked: CHECKED.load(Ordering::Relaxed),
        violations: VIOLATIONS.load(Ordering::Relaxed),
        worst_shortfall: f64::from_bits(WORST_BITS.load(Ordering::Relaxed)),
    }
}

pub fn reset() {
    CHECKED.store(0, Ordering::Relaxed);
    VIOLATIONS.store(0, Ordering::Relaxed);
    WORST_BITS.store(0, Ordering::Relaxed);
}
