use std::time::{Duration, Instant};

/// Blocking token bucket. `acquire` sleeps until a token is available.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    /// `rate` tokens per second, bursting up to `capacity`. A non-positive
    /// rate disables limiting.
    pub fn new(rate: f64, capacity: f64) -> Self {
        let capacity = capacity.max(1.0);
        Self {
            rate,
            capacity,
            tokens: capacity,
            last: Instant::now(),
        }
    }

    fn refill(&mut self, now: Instant) {
        let elapsed = now.saturating_duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.rate).min(self.capacity);
        self.last = now;
    }

    /// How long the caller must wait before a token is available.
    pub fn wait_time(&mut self, now: Instant) -> Duration {
        if self.rate <= 0.0 || !self.rate.is_finite() {
            return Duration::ZERO;
        }
        self.refill(now);
        if self.tokens >= 1.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64((1.0 - self.tokens) / self.rate)
        }
    }

    pub fn acquire(&mut self) {
        if self.rate <= 0.0 || !self.rate.is_finite() {
            return;
        }
        loop {
            let wait = self.wait_time(Instant::now());
            if wait.is_zero() {
                self.tokens -= 1.0;
                return;
            }
            std::thread::sleep(wait);
        }
    }
}
