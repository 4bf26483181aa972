//! Millisecond clocks. The engine never reads the system time directly, so
//! tests can drive it on virtual time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    /// Blocks (or pretends to) for `ms` milliseconds.
    fn sleep_ms(&self, ms: u64);
    /// Moves time forward to at least `t`. Used to skip idle intervals such
    /// as the debounce delay.
    fn advance_to(&self, t: u64);
}

/// Pure virtual time: sleeping and advancing are instantaneous.
///
/// Concurrent sleepers that start at the same instant all wake at
/// `start + ms`, so parallel work is modelled as overlapping rather than
/// summed.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: u64) {
        let start = self.now_ms();
        self.now.fetch_max(start + ms, Ordering::SeqCst);
    }

    fn advance_to(&self, t: u64) {
        self.now.fetch_max(t, Ordering::SeqCst);
    }
}

/// Real elapsed time plus virtual jumps: sleeps really sleep, while
/// `advance_to` skips ahead without waiting.
#[derive(Debug)]
pub struct HybridClock {
    origin: Instant,
    skipped: AtomicU64,
}

impl HybridClock {
    pub fn new() -> Self {
        HybridClock {
            origin: Instant::now(),
            skipped: AtomicU64::new(0),
        }
    }
}

impl Default for HybridClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for HybridClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64 + self.skipped.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }

    fn advance_to(&self, t: u64) {
        let now = self.now_ms();
        if t > now {
            self.skipped.fetch_add(t - now, Ordering::SeqCst);
        }
    }
}
