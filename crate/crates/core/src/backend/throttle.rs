//! Clocks, request pacing and retry backoff.

use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Monotonic time source. `sleep` on a fake clock just advances it.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

#[derive(Debug, Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
    slept: Mutex<Vec<Duration>>,
}

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    /// Every sleep requested so far, in order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.slept.lock().unwrap().push(d);
        self.advance(d);
    }
}

/// Spaces dispatches at least `1 / rate` seconds apart, which keeps every
/// one-second window at or under `rate` requests.
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Duration>,
}

impl RateLimiter {
    /// `per_second <= 0` disables limiting.
    pub fn new(per_second: f64) -> Self {
        let interval = (per_second > 0.0 && per_second.is_finite()).then(|| Duration::from_secs_f64(1.0 / per_second));
        Self {
            interval,
            next_slot: Mutex::new(Duration::ZERO),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0.0)
    }

    /// Blocks (via `clock`) until the caller may dispatch; returns the
    /// dispatch time.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        let now = clock.now();
        let Some(interval) = self.interval else {
            return now;
        };
        let slot = {
            let mut next = self.next_slot.lock().unwrap();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        if slot > now {
            clock.sleep(slot - now);
        }
        slot
    }
}

/// Delay before retry number `attempt + 1`: `min(cap, base * 2^attempt)`,
/// scaled into `[50%, 100%]` by `jitter` in `[0, 1)`.
pub fn backoff_delay(attempt: u32, base: Duration, cap: Duration, jitter: f64) -> Duration {
    let exp = base.saturating_mul(1u32.checked_shl(attempt.min(31)).unwrap_or(u32::MAX));
    let full = exp.min(cap);
    full.mul_f64(0.5 + 0.5 * jitter.clamp(0.0, 1.0))
}
