//! Sliding-window circuit breaker over run-level quality flags. The window
//! is measured in runs, not time: the harness is run-indexed and replay
//! needs logical clocks. Only CRITICAL flags count toward the trip
//! threshold; DEGRADED accumulates in the logs without tripping.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::domain::{FlagLevel, QualityFlag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreakerStatus {
    #[serde(rename = "CLOSED")]
    Closed,
    #[serde(rename = "OPEN")]
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakerState {
    threshold: usize,
    window: usize,
    event_ring: VecDeque<FlagLevel>,
    status: BreakerStatus,
}

impl BreakerState {
    pub fn new(threshold: usize, window: usize) -> BreakerState {
        BreakerState {
            threshold,
            window,
            event_ring: VecDeque::with_capacity(window),
            status: BreakerStatus::Closed,
        }
    }

    pub fn status(&self) -> BreakerStatus {
        self.status
    }

    pub fn ring_snapshot(&self) -> Vec<FlagLevel> {
        self.event_ring.iter().copied().collect()
    }

    /// Appends the worst flag of a run to the ring; trips to OPEN when the
    /// CRITICAL count in the window reaches the threshold. Once OPEN the
    /// breaker stays OPEN until reset. Returns true when this call tripped
    /// the breaker.
    pub fn record_run_flags(&mut self, flags: &[QualityFlag]) -> bool {
        let worst = flags.iter().map(|f| f.level).max().unwrap_or(FlagLevel::Nominal);
        self.event_ring.push_back(worst);
        while self.event_ring.len() > self.window {
            self.event_ring.pop_front();
        }
        if self.status == BreakerStatus::Closed {
            let criticals =
                self.event_ring.iter().filter(|l| **l == FlagLevel::Critical).count();
            if criticals >= self.threshold {
                self.status = BreakerStatus::Open;
                return true;
            }
        }
        false
    }

    pub fn should_block(&self) -> bool {
        self.status == BreakerStatus::Open
    }

    /// Human-review reset: closes the breaker and clears the ring. Returns
    /// true when the state changed; reset on a CLOSED breaker is a no-op.
    pub fn reset(&mut self) -> bool {
        let changed = self.status == BreakerStatus::Open;
        self.status = BreakerStatus::Closed;
        self.event_ring.clear();
        changed
    }
}
