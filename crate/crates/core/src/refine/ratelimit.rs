use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Time source for the limiter and retry backoff, swappable in tests.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
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

/// Clock whose `sleep` advances time instantly.
#[derive(Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl FakeClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Sliding-window limiter: at most `per_minute` grants in any 60 s window.
pub struct RateLimiter {
    per_minute: usize,
    window: Duration,
    granted: Mutex<VecDeque<Duration>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(per_minute: usize, clock: Arc<dyn Clock>) -> Self {
        assert!(per_minute >= 1, "rate cap must be at least 1");
        Self { per_minute, window: Duration::from_secs(60), granted: Mutex::new(VecDeque::new()), clock }
    }

    /// Blocks until a request may be issued and records the grant time.
    pub fn acquire(&self) -> Duration {
        let mut granted = self.granted.lock().unwrap();
        loop {
            let now = self.clock.now();
            while granted.front().is_some_and(|&t| now >= t + self.window) {
                granted.pop_front();
            }
            if granted.len() < self.per_minute {
                granted.push_back(now);
                return now;
            }
            let wait = granted[0] + self.window - now;
            self.clock.sleep(wait);
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_exceeds_cap_in_any_window() {
        let clock = Arc::new(FakeClock::default());
        let limiter = RateLimiter::new(5, clock.clone());
        let mut grants = Vec::new();
        for i in 0..40 {
            if i % 7 == 0 {
                clock.advance(Duration::from_millis(3_300));
            }
            grants.push(limiter.acquire());
        }
        for (i, &t) in grants.iter().enumerate() {
            let in_window = grants[i..].iter().filter(|&&u| u < t + Duration::from_secs(60)).count();
            assert!(in_window <= 5);
        }
        // the cap is reached, not merely respected
        assert_eq!(grants[5] - grants[0], Duration::from_secs(60));
    }
}
